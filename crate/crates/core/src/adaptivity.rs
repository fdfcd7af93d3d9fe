//! Maximum marking and the solve–estimate–mark–refine loop.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::assembly::{assemble_system, AssemblyError, BlockSystem, Family, MaterialField};
use crate::eigen::{filter_modes, solve_pencil, EigenError, EigenPair, SolveOptions};
use crate::estimator::{estimate, EstimatorError, EstimatorOptions};
use crate::fe::ElementMap;
use crate::mesh::{bisect_with_parents, build_cavity_mesh, GeometrySpec, Mesh, MeshError, Subdomain};
use crate::quadrature::quadrature;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdaptError {
    #[error("marking fraction must lie in (0, 1], got {0}")]
    InvalidTheta(f64),
    #[error("mode index is 1-based, got {0}")]
    InvalidMode(usize),
    #[error("no indicators to mark")]
    EmptyIndicators,
    #[error("η² = 0 while the error is {0}")]
    Inconsistent(f64),
    #[error("iteration {iteration}: only {found} physical modes, mode {wanted} requested")]
    MissingMode { iteration: usize, found: usize, wanted: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// `{T : η_T ≥ θ·max η_T}` in ascending order.
pub fn mark(indicators: &[f64], theta: f64) -> Result<Vec<usize>, AdaptError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(AdaptError::InvalidTheta(theta));
    }
    let max = indicators.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if indicators.is_empty() || !max.is_finite() {
        return Err(AdaptError::EmptyIndicators);
    }
    let threshold = theta * max;
    Ok((0..indicators.len()).filter(|&t| indicators[t] >= threshold).collect())
}

/// `err / η²`; zero error gives zero.
pub fn effectivity(err: f64, eta2: f64) -> Result<f64, AdaptError> {
    if err == 0.0 {
        return Ok(0.0);
    }
    if eta2 == 0.0 {
        return Err(AdaptError::Inconsistent(err));
    }
    Ok(err / eta2)
}

/// `|ω_h² − ω²|`.
pub fn eigenvalue_error(omega_h: f64, omega: f64) -> f64 {
    (omega_h * omega_h - omega * omega).abs()
}

#[derive(Debug, Clone)]
pub struct AdaptiveConfig {
    pub geometry: GeometrySpec,
    pub initial_level: usize,
    pub family: Family,
    pub materials: MaterialField,
    /// 1-based index among the physical modes above the shift.
    pub mode_index: usize,
    pub theta: f64,
    pub max_iterations: usize,
    pub max_dofs: usize,
    pub reference_omega: Option<f64>,
    pub solve: SolveOptions,
    pub kernel_tol: f64,
    pub estimator: EstimatorOptions,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            geometry: GeometrySpec::omega2(),
            initial_level: 2,
            family: Family::Mini,
            materials: MaterialField::steel_water(),
            mode_index: 1,
            theta: 0.5,
            max_iterations: 12,
            max_dofs: 100_000,
            reference_omega: None,
            solve: SolveOptions::default(),
            kernel_tol: 1e-8,
            estimator: EstimatorOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveRecord {
    pub iteration: usize,
    pub dofs: usize,
    pub cells: usize,
    /// ω_h of the tracked mode.
    pub omega: f64,
    pub eta2: f64,
    pub theta2: f64,
    pub err: Option<f64>,
    pub eff: Option<f64>,
    /// Triangles marked for the next mesh (0 on the last iteration).
    pub n_marked: usize,
    /// Fraction of marked triangles whose centroid lies within a tenth of the
    /// domain diameter of a singular boundary point.
    pub marked_near_singular: f64,
    /// B-weighted overlap with the previous iteration's mode.
    pub overlap: Option<f64>,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct AdaptiveHistory {
    pub records: Vec<AdaptiveRecord>,
    pub warnings: Vec<String>,
    pub final_mesh: Mesh,
}

impl AdaptiveHistory {
    pub fn dofs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.dofs as f64).collect()
    }

    pub fn errors(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.err).collect()
    }

    pub fn effectivities(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.eff).collect()
    }
}

struct Snapshot {
    mesh: Mesh,
    system: BlockSystem,
    mode: EigenPair,
}

/// `|∫ρ_s u·u' + ∫ρ_f w·w'|` between a mode on `new` and a mode on its parent mesh.
fn overlap(prev: &Snapshot, mesh: &Mesh, system: &BlockSystem, x: &[f64], parents: &[usize], m: &MaterialField) -> f64 {
    let q = quadrature(4).expect("supported degree");
    let mut acc = 0.0;
    for t in 0..mesh.n_triangles() {
        let em = ElementMap::of(mesh, t);
        let p = parents[t];
        for (l, w) in q.points.iter().zip(&q.weights) {
            let lp = prev.mesh.barycentric(p, em.to_physical(*l));
            let wq = w * em.det.abs();
            let (a, b, rho) = match mesh.triangles()[t].subdomain {
                Subdomain::Solid => (
                    system.displacement_at(mesh, x, t, *l),
                    prev.system.displacement_at(&prev.mesh, &prev.mode.vector, p, lp),
                    m.solid_density,
                ),
                Subdomain::Fluid => (
                    system.flux_at(mesh, x, t, *l),
                    prev.system.flux_at(&prev.mesh, &prev.mode.vector, p, lp),
                    m.fluid_density,
                ),
            };
            acc += wq * rho * (a[0] * b[0] + a[1] * b[1]);
        }
    }
    acc.abs()
}

fn near_singular(mesh: &Mesh, marked: &[usize]) -> f64 {
    if marked.is_empty() {
        return 0.0;
    }
    let pts = mesh.singular_points();
    let r = 0.1 * mesh.diameter_of_domain();
    let near = marked
        .iter()
        .filter(|&&t| {
            let c = mesh.centroid(t);
            pts.iter().any(|p| (p[0] - c[0]).hypot(p[1] - c[1]) <= r)
        })
        .count();
    near as f64 / marked.len() as f64
}

pub fn adaptive_solve(config: &AdaptiveConfig) -> Result<AdaptiveHistory, AdaptError> {
    if config.mode_index == 0 {
        return Err(AdaptError::InvalidMode(0));
    }
    if !(config.theta > 0.0 && config.theta <= 1.0) {
        return Err(AdaptError::InvalidTheta(config.theta));
    }
    let mut mesh = build_cavity_mesh(&config.geometry, config.initial_level)?;
    let mut parents: Vec<usize> = Vec::new();
    let mut prev: Option<Snapshot> = None;
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let solve_opts = SolveOptions { n_modes: config.mode_index + 2, ..config.solve.clone() };

    for iteration in 0..config.max_iterations.max(1) {
        let start = Instant::now();
        let system = assemble_system(&mesh, config.family, &config.materials)?;
        let report = filter_modes(&solve_pencil(&system, &solve_opts)?, config.kernel_tol);
        let pairs = report.pairs;
        if pairs.len() < config.mode_index {
            return Err(AdaptError::MissingMode { iteration, found: pairs.len(), wanted: config.mode_index });
        }
        let (chosen, overlap_value) = match &prev {
            None => (config.mode_index - 1, None),
            Some(p) => {
                let ov: Vec<f64> =
                    pairs.iter().map(|c| overlap(p, &mesh, &system, &c.vector, &parents, &config.materials)).collect();
                let mut order: Vec<usize> = (0..ov.len()).collect();
                order.sort_by(|&a, &b| ov[b].total_cmp(&ov[a]));
                let best = order[0];
                if order.len() > 1 && ov[order[1]] >= 0.95 * ov[best] {
                    warnings.push(format!("iteration {iteration}: ambiguous mode tracking, using nearest frequency"));
                    let target = p.mode.omega();
                    let nearest = (0..pairs.len())
                        .min_by(|&a, &b| (pairs[a].omega() - target).abs().total_cmp(&(pairs[b].omega() - target).abs()))
                        .expect("nonempty");
                    (nearest, Some(ov[nearest]))
                } else {
                    (best, Some(ov[best]))
                }
            }
        };
        let mode = pairs[chosen].clone();
        let ind = estimate(&mesh, &system, &mode, &config.materials, &config.estimator)?;
        let omega = mode.omega();
        let err = config.reference_omega.map(|w| eigenvalue_error(omega, w));
        let eff = match err {
            Some(e) => Some(effectivity(e, ind.eta2)?),
            None => None,
        };
        let last = iteration + 1 >= config.max_iterations || system.n_dofs() >= config.max_dofs;
        let marked = if last { Vec::new() } else { mark(&ind.element_totals, config.theta)? };
        records.push(AdaptiveRecord {
            iteration,
            dofs: system.n_dofs(),
            cells: mesh.n_triangles(),
            omega,
            eta2: ind.eta2,
            theta2: ind.theta2,
            err,
            eff,
            n_marked: marked.len(),
            marked_near_singular: near_singular(&mesh, &marked),
            overlap: overlap_value,
            wall_time: start.elapsed(),
        });
        if last {
            break;
        }
        let (next, par) = bisect_with_parents(&mesh, &marked)?;
        prev = Some(Snapshot { mesh, system, mode });
        mesh = next;
        parents = par;
    }
    Ok(AdaptiveHistory { records, warnings, final_mesh: mesh })
}
