//! Uniform convergence studies.

use thiserror::Error;

use crate::assembly::{assemble_system, AssemblyError, Family, MaterialField};
use crate::eigen::{filter_modes, solve_pencil, EigenError, SolveOptions};
use crate::fitting::{extrapolate, Extrapolation};
use crate::mesh::{build_cavity_mesh, GeometrySpec, MeshError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StudyError {
    #[error("level N={level}: {source}")]
    Mesh { level: usize, source: MeshError },
    #[error("level N={level}: {source}")]
    Assembly { level: usize, source: AssemblyError },
    #[error("level N={level}: {source}")]
    Solve { level: usize, source: EigenError },
    #[error("level N={level}: {found} physical modes converged, {wanted} requested")]
    MissingModes { level: usize, found: usize, wanted: usize },
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub geometry: GeometrySpec,
    pub family: Family,
    pub materials: MaterialField,
    pub levels: Vec<usize>,
    pub n_modes: usize,
    pub solve: SolveOptions,
    pub kernel_tol: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            geometry: GeometrySpec::omega1(),
            family: Family::TaylorHood,
            materials: MaterialField::steel_water(),
            levels: vec![8, 10, 12, 14],
            n_modes: 4,
            solve: SolveOptions::default(),
            kernel_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub level: usize,
    pub dofs: usize,
    pub omegas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    /// Sorted by level.
    pub rows: Vec<StudyRow>,
    /// One entry per mode when at least three levels were run.
    pub fits: Vec<Option<Extrapolation>>,
}

/// Mesh, assemble and solve one level.
pub fn solve_level(config: &StudyConfig, level: usize) -> Result<StudyRow, StudyError> {
    let mesh = build_cavity_mesh(&config.geometry, level).map_err(|source| StudyError::Mesh { level, source })?;
    let system =
        assemble_system(&mesh, config.family, &config.materials).map_err(|source| StudyError::Assembly { level, source })?;
    let opts = SolveOptions { n_modes: config.n_modes, ..config.solve.clone() };
    let report = solve_pencil(&system, &opts).map_err(|source| StudyError::Solve { level, source })?;
    let report = filter_modes(&report, config.kernel_tol);
    if report.pairs.len() < config.n_modes {
        return Err(StudyError::MissingModes { level, found: report.pairs.len(), wanted: config.n_modes });
    }
    Ok(StudyRow { level, dofs: system.n_dofs(), omegas: report.omegas().into_iter().take(config.n_modes).collect() })
}

/// Sorts the rows and fits every mode column.
pub fn tabulate(mut rows: Vec<StudyRow>, n_modes: usize) -> ConvergenceTable {
    rows.sort_by_key(|r| r.level);
    let levels: Vec<f64> = rows.iter().map(|r| r.level as f64).collect();
    let fits = (0..n_modes)
        .map(|m| {
            let col: Vec<f64> = rows.iter().map(|r| r.omegas[m]).collect();
            extrapolate(&levels, &col).ok()
        })
        .collect();
    ConvergenceTable { rows, fits }
}

pub fn run_uniform_study(config: &StudyConfig) -> Result<ConvergenceTable, StudyError> {
    let rows = config.levels.iter().map(|&n| solve_level(config, n)).collect::<Result<Vec<_>, _>>()?;
    Ok(tabulate(rows, config.n_modes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{RectilinearLayout, Segment, Subdomain};

    #[test]
    fn empty_level_list() {
        let t = run_uniform_study(&StudyConfig { levels: vec![], ..Default::default() }).unwrap();
        assert!(t.rows.is_empty());
        assert!(t.fits.iter().all(Option::is_none));
    }

    #[test]
    fn clamped_solid_strip_converges_from_above() {
        // a cantilever avoids the repeated eigenvalues of the symmetric square
        let layout = RectilinearLayout {
            xs: vec![0.0, 1.0, 2.0],
            ys: vec![0.0, 1.0],
            cells: vec![Some(Subdomain::Solid); 2],
            dirichlet: vec![Segment { a: [0.0, 0.0], b: [0.0, 1.0] }],
        };
        let config = StudyConfig {
            geometry: GeometrySpec::custom(layout),
            materials: MaterialField::steel_water().with_poisson(0.3),
            levels: vec![4, 2, 3],
            n_modes: 3,
            solve: SolveOptions::default().with_shift(0.0),
            ..Default::default()
        };
        let t = run_uniform_study(&config).unwrap();
        assert_eq!(t.rows.iter().map(|r| r.level).collect::<Vec<_>>(), vec![2, 3, 4]);
        for m in 0..3 {
            assert!(t.rows.windows(2).all(|w| w[1].omegas[m] < w[0].omegas[m]), "mode {m}: {:?}", t.rows);
        }
        assert!(t.fits.iter().all(Option::is_some));
    }
}
