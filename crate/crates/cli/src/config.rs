//! Run configuration: a TOML file with sections, overridden by command-line flags.
//!
//! ```toml
//! [geometry]
//! preset = "omega1"          # omega1 | omega2 | unit-square | file
//! mesh_file = "vessel.msh"   # with preset = "file"; native or Gmsh 2.2
//! fluid_width = 5.5          # any CavityDims field may be overridden
//!
//! [geometry.gmsh_tags]       # Gmsh physical id -> Solid | Fluid | GammaD | GammaN | Gamma0
//! 1 = "Solid"
//! 2 = "Fluid"
//! 11 = "GammaD"
//!
//! [material]
//! youngs_modulus = 1.44e11
//! poisson_ratio = 0.35
//! poisson_sweep = [0.35, 0.49, 0.5]
//! solid_density = 7700.0
//! fluid_density = 1000.0
//! sound_speed = 1430.0
//! gravity = 9.8
//!
//! [discretization]
//! family = "taylor-hood"     # taylor-hood | mini
//! levels = [8, 10, 12, 14]
//!
//! [solver]
//! modes = 4
//! shift = 98696.044
//! tol = 1e-10
//! method = "null-space"      # null-space | saddle-point
//! seed = 1592627764
//! kernel_tol = 1e-8
//!
//! [adapt]
//! mode = 1
//! theta = 0.5
//! initial_level = 2
//! max_iterations = 20
//! max_dofs = 100000
//! reference_omega = 617.3
//!
//! [output]
//! dir = "runs"
//! vtk = true
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use elastoacoustic::adaptivity::AdaptiveConfig;
use elastoacoustic::eigen::ConstraintMethod;
use elastoacoustic::mesh::CavityDims;
use elastoacoustic::study::StudyConfig;
use elastoacoustic::{Family, GeometrySpec, MaterialField, ScalarField, SolveOptions};
use serde::{Deserialize, Serialize};

/// Environment variable that sets the output root when neither `--out` nor
/// `[output] dir` is given.
pub const OUTPUT_ENV: &str = "ELASTOACOUSTIC_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Omega1,
    Omega2,
    UnitSquare,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    Mini,
    TaylorHood,
}

impl From<FamilyName> for Family {
    fn from(f: FamilyName) -> Family {
        match f {
            FamilyName::Mini => Family::Mini,
            FamilyName::TaylorHood => Family::TaylorHood,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    NullSpace,
    SaddlePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub preset: Preset,
    pub mesh_file: Option<PathBuf>,
    pub fluid_width: Option<f64>,
    pub fluid_height: Option<f64>,
    pub wall_thickness: Option<f64>,
    pub base_thickness: Option<f64>,
    pub foot_width: Option<f64>,
    pub step_width: Option<f64>,
    pub step_height: Option<f64>,
    pub gmsh_tags: BTreeMap<String, String>,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection {
            preset: Preset::Omega1,
            mesh_file: None,
            fluid_width: None,
            fluid_height: None,
            wall_thickness: None,
            base_thickness: None,
            foot_width: None,
            step_width: None,
            step_height: None,
            gmsh_tags: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialSection {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// When nonempty, `study` and `adapt` run once per value.
    pub poisson_sweep: Vec<f64>,
    pub solid_density: f64,
    pub fluid_density: f64,
    pub sound_speed: f64,
    pub gravity: f64,
}

impl Default for MaterialSection {
    fn default() -> Self {
        let m = MaterialField::steel_water();
        MaterialSection {
            youngs_modulus: m.youngs_modulus.constant_value().unwrap_or(1.44e11),
            poisson_ratio: m.poisson_ratio.constant_value().unwrap_or(0.35),
            poisson_sweep: Vec::new(),
            solid_density: m.solid_density,
            fluid_density: m.fluid_density,
            sound_speed: m.sound_speed,
            gravity: m.gravity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationSection {
    pub family: FamilyName,
    pub levels: Vec<usize>,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        DiscretizationSection { family: FamilyName::TaylorHood, levels: vec![8, 10, 12, 14] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub modes: usize,
    pub shift: f64,
    pub tol: f64,
    pub method: MethodName,
    pub seed: u64,
    pub kernel_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolveOptions::default();
        SolverSection {
            modes: s.n_modes,
            shift: s.shift,
            tol: s.tol,
            method: MethodName::NullSpace,
            seed: s.seed,
            kernel_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptSection {
    pub mode: usize,
    pub theta: f64,
    pub initial_level: usize,
    pub max_iterations: usize,
    pub max_dofs: usize,
    pub reference_omega: Option<f64>,
}

impl Default for AdaptSection {
    fn default() -> Self {
        let a = AdaptiveConfig::default();
        AdaptSection {
            mode: a.mode_index,
            theta: a.theta,
            initial_level: a.initial_level,
            max_iterations: a.max_iterations,
            max_dofs: a.max_dofs,
            reference_omega: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub vtk: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: None, vtk: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub material: MaterialSection,
    pub discretization: DiscretizationSection,
    pub solver: SolverSection,
    pub adapt: AdaptSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing configuration")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.material;
        for (name, v) in [
            ("youngs_modulus", m.youngs_modulus),
            ("solid_density", m.solid_density),
            ("fluid_density", m.fluid_density),
            ("sound_speed", m.sound_speed),
            ("gravity", m.gravity),
            ("solver.tol", self.solver.tol),
            ("solver.kernel_tol", self.solver.kernel_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                bail!("{name} must be positive, got {v}");
            }
        }
        for &nu in std::iter::once(&m.poisson_ratio).chain(&m.poisson_sweep) {
            if !(nu > 0.0 && nu <= 0.5) {
                bail!("Poisson ratio {nu} outside (0, 0.5]");
            }
        }
        if self.solver.modes == 0 {
            bail!("solver.modes must be at least 1");
        }
        if !self.solver.shift.is_finite() {
            bail!("solver.shift must be finite");
        }
        if self.discretization.levels.contains(&0) {
            bail!("mesh levels start at 1");
        }
        if !(self.adapt.theta > 0.0 && self.adapt.theta <= 1.0) {
            bail!("adapt.theta must lie in (0, 1], got {}", self.adapt.theta);
        }
        if self.adapt.mode == 0 {
            bail!("adapt.mode is 1-based");
        }
        if self.adapt.reference_omega.is_some_and(|w| !(w > 0.0)) {
            bail!("adapt.reference_omega must be positive");
        }
        if self.geometry.preset == Preset::File && self.geometry.mesh_file.is_none() {
            bail!("geometry.preset = \"file\" needs geometry.mesh_file");
        }
        let d = self.dims();
        for v in [d.fluid_width, d.fluid_height, d.wall_thickness, d.base_thickness, d.foot_width, d.step_width, d.step_height] {
            if !(v.is_finite() && v > 0.0) {
                bail!("geometry dimensions must be positive, got {v}");
            }
        }
        Ok(())
    }

    fn dims(&self) -> CavityDims {
        let g = &self.geometry;
        let d = CavityDims::default();
        CavityDims {
            fluid_width: g.fluid_width.unwrap_or(d.fluid_width),
            fluid_height: g.fluid_height.unwrap_or(d.fluid_height),
            wall_thickness: g.wall_thickness.unwrap_or(d.wall_thickness),
            base_thickness: g.base_thickness.unwrap_or(d.base_thickness),
            foot_width: g.foot_width.unwrap_or(d.foot_width),
            step_width: g.step_width.unwrap_or(d.step_width),
            step_height: g.step_height.unwrap_or(d.step_height),
        }
    }

    /// The preset geometry; `None` for meshes read from a file.
    pub fn geometry_spec(&self) -> Option<GeometrySpec> {
        let spec = match self.geometry.preset {
            Preset::Omega1 => GeometrySpec::omega1(),
            Preset::Omega2 => GeometrySpec::omega2(),
            Preset::UnitSquare => GeometrySpec::unit_square_solid(),
            Preset::File => return None,
        };
        Some(spec.with_dims(self.dims()))
    }

    pub fn materials(&self, nu: f64) -> MaterialField {
        let m = &self.material;
        MaterialField {
            youngs_modulus: ScalarField::Constant(m.youngs_modulus),
            poisson_ratio: ScalarField::Constant(nu),
            solid_density: m.solid_density,
            fluid_density: m.fluid_density,
            sound_speed: m.sound_speed,
            gravity: m.gravity,
        }
    }

    /// The Poisson ratios a study or adaptive run iterates over.
    pub fn poisson_values(&self) -> Vec<f64> {
        if self.material.poisson_sweep.is_empty() {
            vec![self.material.poisson_ratio]
        } else {
            self.material.poisson_sweep.clone()
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        let s = &self.solver;
        SolveOptions {
            shift: s.shift,
            n_modes: s.modes,
            tol: s.tol,
            method: match s.method {
                MethodName::NullSpace => ConstraintMethod::NullSpace,
                MethodName::SaddlePoint => ConstraintMethod::SaddlePoint,
            },
            seed: s.seed,
            ..SolveOptions::default()
        }
    }

    pub fn study_config(&self, nu: f64) -> Result<StudyConfig> {
        let geometry = self.geometry_spec().context("`study` needs a preset geometry")?;
        Ok(StudyConfig {
            geometry,
            family: self.discretization.family.into(),
            materials: self.materials(nu),
            levels: self.discretization.levels.clone(),
            n_modes: self.solver.modes,
            solve: self.solve_options(),
            kernel_tol: self.solver.kernel_tol,
        })
    }

    pub fn adaptive_config(&self, nu: f64) -> Result<AdaptiveConfig> {
        let geometry = self.geometry_spec().context("`adapt` needs a preset geometry")?;
        let a = &self.adapt;
        Ok(AdaptiveConfig {
            geometry,
            initial_level: a.initial_level,
            family: self.discretization.family.into(),
            materials: self.materials(nu),
            mode_index: a.mode,
            theta: a.theta,
            max_iterations: a.max_iterations,
            max_dofs: a.max_dofs,
            reference_omega: a.reference_omega,
            solve: self.solve_options(),
            kernel_tol: self.solver.kernel_tol,
            ..AdaptiveConfig::default()
        })
    }

    /// `--out`, then `[output] dir`, then the environment, then `./runs`.
    pub fn output_root(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output.dir.clone())
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn documented_example_parses() {
        let text = r#"
            [geometry]
            preset = "omega2"
            fluid_width = 4.0
            [geometry.gmsh_tags]
            1 = "Solid"
            [material]
            poisson_sweep = [0.35, 0.49, 0.5]
            [discretization]
            family = "mini"
            levels = [2, 3]
            [solver]
            method = "saddle-point"
            [adapt]
            reference_omega = 617.3
        "#;
        let cfg = RunConfig::from_toml(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.geometry_spec().unwrap().dims.fluid_width, 4.0);
        assert_eq!(cfg.poisson_values(), vec![0.35, 0.49, 0.5]);
        assert_eq!(cfg.solve_options().method, ConstraintMethod::SaddlePoint);
        assert_eq!(cfg.adaptive_config(0.5).unwrap().reference_omega, Some(617.3));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("[material]\nbogus = 1").is_err());
        let mut cfg = RunConfig::default();
        cfg.material.poisson_sweep = vec![0.35, 0.6];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.adapt.theta = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.geometry.preset = Preset::File;
        assert!(cfg.validate().is_err());
    }
}
