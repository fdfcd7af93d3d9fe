//! Command-line driver: meshing, single solves, uniform convergence studies,
//! adaptive runs and fits, with CSV/VTK output and a JSON run manifest.

pub mod config;
pub mod mesh_io;
pub mod output;
pub mod vtk;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use elastoacoustic::adaptivity::adaptive_solve;
use elastoacoustic::eigen::{filter_modes, solve_pencil};
use elastoacoustic::estimator::{estimate, EstimatorOptions};
use elastoacoustic::fitting::{extrapolate, fit_rate};
use elastoacoustic::mesh::{build_cavity_mesh, refine_uniform, validate};
use elastoacoustic::study::{solve_level, tabulate, StudyRow};
use elastoacoustic::Mesh;
use rayon::prelude::*;

use config::{FamilyName, Preset, RunConfig};
use output::{Manifest, OutputDir};

#[derive(Debug, Parser)]
#[command(name = "elastoacoustic", version, about = "Vibration modes of a fluid in an elastic vessel")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; they override the configuration file.
#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub geometry: Option<Preset>,
    #[arg(long, global = true, value_enum)]
    pub family: Option<FamilyName>,
    /// Poisson ratio, or a comma-separated sweep.
    #[arg(long, global = true, value_delimiter = ',')]
    pub nu: Vec<f64>,
    /// Mesh levels N, comma-separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub levels: Vec<usize>,
    #[arg(long, global = true)]
    pub modes: Option<usize>,
    #[arg(long, global = true)]
    pub shift: Option<f64>,
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    /// Output directory (default: config, then $ELASTOACOUSTIC_OUT, then ./runs).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for independent solves.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build (or read), refine and validate a mesh.
    Mesh {
        /// Mesh level N for preset geometries (default: first of --levels).
        #[arg(long)]
        level: Option<usize>,
        /// Extra uniform refinements.
        #[arg(long, default_value_t = 0)]
        refine: usize,
    },
    /// One eigensolve with spectrum, indicator and field output.
    Solve {
        #[arg(long)]
        level: Option<usize>,
        /// Also write Ã, B and C in Matrix Market format.
        #[arg(long)]
        export_matrices: bool,
    },
    /// Uniform convergence study over the mesh levels.
    Study,
    /// Adaptive solve–estimate–mark–refine loop.
    Adapt {
        /// 1-based mode index.
        #[arg(long)]
        mode: Option<usize>,
        #[arg(long)]
        reference_omega: Option<f64>,
        #[arg(long)]
        max_dofs: Option<usize>,
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Fit orders and extrapolated frequencies to a study CSV.
    Fit {
        /// CSV with a level column `N` and columns `omega_*`.
        input: PathBuf,
        /// Also fit the rate of |ω_h² − ω²| against 1/N for this reference ω
        /// (first mode column).
        #[arg(long)]
        reference: Option<f64>,
    },
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(g) = self.geometry {
            cfg.geometry.preset = g;
        }
        if let Some(f) = self.family {
            cfg.discretization.family = f;
        }
        match self.nu.as_slice() {
            [] => {}
            [nu] => {
                cfg.material.poisson_ratio = *nu;
                cfg.material.poisson_sweep.clear();
            }
            many => cfg.material.poisson_sweep = many.to_vec(),
        }
        if !self.levels.is_empty() {
            cfg.discretization.levels = self.levels.clone();
        }
        if let Some(m) = self.modes {
            cfg.solver.modes = m;
        }
        if let Some(s) = self.shift {
            cfg.solver.shift = s;
        }
        if let Some(t) = self.theta {
            cfg.adapt.theta = t;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn nu_tag(nu: f64) -> String {
    format!("nu{nu}")
}

fn load_mesh(cfg: &RunConfig, level: Option<usize>) -> Result<Mesh> {
    match cfg.geometry_spec() {
        Some(spec) => {
            let n = level.or_else(|| cfg.discretization.levels.first().copied()).unwrap_or(8);
            Ok(build_cavity_mesh(&spec, n).with_context(|| format!("building mesh at N={n}"))?)
        }
        None => {
            let path = cfg.geometry.mesh_file.as_deref().expect("validated");
            mesh_io::read_mesh_file(path, &cfg.geometry.gmsh_tags)
        }
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?)
}

pub fn run(cli: Cli) -> Result<PathBuf> {
    let cfg = cli.common.resolve()?;
    let root = cfg.output_root(None);
    let name = match &cli.command {
        Command::Mesh { .. } => "mesh",
        Command::Solve { .. } => "solve",
        Command::Study => "study",
        Command::Adapt { .. } => "adapt",
        Command::Fit { .. } => "fit",
    };
    let mut out = OutputDir::create(root, Manifest::new(name, &cfg))?;
    match cli.command {
        Command::Mesh { level, refine } => run_mesh(&cfg, level, refine, &mut out)?,
        Command::Solve { level, export_matrices } => run_solve(&cfg, level, export_matrices, &mut out)?,
        Command::Study => run_study(&cfg, cli.common.jobs, &mut out)?,
        Command::Adapt { mode, reference_omega, max_dofs, max_iterations } => {
            let mut cfg = cfg;
            cfg.adapt.mode = mode.unwrap_or(cfg.adapt.mode);
            cfg.adapt.reference_omega = reference_omega.or(cfg.adapt.reference_omega);
            cfg.adapt.max_dofs = max_dofs.unwrap_or(cfg.adapt.max_dofs);
            cfg.adapt.max_iterations = max_iterations.unwrap_or(cfg.adapt.max_iterations);
            cfg.validate()?;
            out.manifest.config = serde_json::to_value(&cfg)?;
            run_adapt(&cfg, cli.common.jobs, &mut out)?
        }
        Command::Fit { input, reference } => run_fit(&input, reference, &mut out)?,
    }
    out.finish()
}

fn run_mesh(cfg: &RunConfig, level: Option<usize>, refine: usize, out: &mut OutputDir) -> Result<()> {
    let mut mesh = load_mesh(cfg, level)?;
    for _ in 0..refine {
        mesh = refine_uniform(&mesh);
    }
    let report = validate(&mesh);
    println!("{} vertices, {} triangles, {} edges", mesh.n_vertices(), mesh.n_triangles(), mesh.n_edges());
    for (tag, count) in output::edge_tag_counts(&mesh) {
        println!("  {tag}: {count} edges");
    }
    print!("{report}");
    out.write("mesh.txt", &mesh_io::write_native(&mesh))?;
    if cfg.output.vtk {
        out.write("mesh.vtk", &vtk::write_vtk(&mesh, "mesh", &vtk::ModeFields::zeros(&mesh), None))?;
    }
    ensure!(report.passed(), "mesh fails validation");
    Ok(())
}

fn run_solve(cfg: &RunConfig, level: Option<usize>, export: bool, out: &mut OutputDir) -> Result<()> {
    let mesh = load_mesh(cfg, level)?;
    let nu = cfg.material.poisson_ratio;
    let materials = cfg.materials(nu);
    let start = Instant::now();
    let system = elastoacoustic::assembly::assemble_system(&mesh, cfg.discretization.family.into(), &materials)?;
    out.manifest.warnings.extend(system.warnings.iter().cloned());
    let report = filter_modes(&solve_pencil(&system, &cfg.solve_options())?, cfg.solver.kernel_tol);
    out.manifest.timings_s.push(("solve".into(), start.elapsed().as_secs_f64()));
    println!("{} dofs, {} physical modes", system.n_dofs(), report.pairs.len());
    for (i, p) in report.pairs.iter().enumerate() {
        println!("  mode {}: omega = {:.6} rad/s (residual {:.1e})", i + 1, p.omega(), p.residual);
    }
    out.write("spectrum.csv", &output::spectrum_csv(&report))?;
    for (i, mode) in report.pairs.iter().enumerate() {
        let ind = estimate(&mesh, &system, mode, &materials, &EstimatorOptions::default())?;
        out.write(&format!("indicators_mode{}.csv", i + 1), &output::indicators_csv(&mesh, &ind))?;
        if cfg.output.vtk {
            let fields = vtk::ModeFields::of_mode(&mesh, &system, &mode.vector);
            let title = format!("mode {} omega {}", i + 1, mode.omega());
            out.write(&format!("mode{}.vtk", i + 1), &vtk::write_vtk(&mesh, &title, &fields, Some(&ind.element_totals)))?;
        }
    }
    if export {
        out.write("A.mtx", &output::matrix_market(&system.a))?;
        out.write("B.mtx", &output::matrix_market(&system.b))?;
        out.write("C.mtx", &output::matrix_market(&system.c))?;
    }
    Ok(())
}

fn run_study(cfg: &RunConfig, jobs: usize, out: &mut OutputDir) -> Result<()> {
    let nus = cfg.poisson_values();
    let studies = nus.iter().map(|&nu| cfg.study_config(nu)).collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> =
        (0..studies.len()).flat_map(|s| studies[s].levels.iter().map(move |&n| (s, n))).collect();
    let start = Instant::now();
    let rows: Vec<Result<StudyRow, _>> = pool(jobs)?.install(|| tasks.par_iter().map(|&(s, n)| solve_level(&studies[s], n)).collect());
    out.manifest.timings_s.push(("study".into(), start.elapsed().as_secs_f64()));
    let mut rows = rows.into_iter();
    for (study, nu) in studies.iter().zip(&nus) {
        let mine = rows.by_ref().take(study.levels.len()).collect::<Result<Vec<_>, _>>()?;
        let table = tabulate(mine, study.n_modes);
        let tag = nu_tag(*nu);
        println!("nu = {nu}");
        for r in &table.rows {
            let w: Vec<String> = r.omegas.iter().map(|w| format!("{w:.4}")).collect();
            println!("  N = {:>3} ({:>7} dofs): {}", r.level, r.dofs, w.join("  "));
        }
        for (m, f) in table.fits.iter().enumerate() {
            if let Some(f) = f {
                println!("  mode {}: order {:.2}, omega_extr {:.4}", m + 1, f.order, f.omega);
            }
        }
        out.write(&format!("study_{tag}.csv"), &output::study_csv(&table))?;
        out.write(&format!("fits_{tag}.csv"), &output::fits_csv(&table))?;
    }
    Ok(())
}

fn run_adapt(cfg: &RunConfig, jobs: usize, out: &mut OutputDir) -> Result<()> {
    let nus = cfg.poisson_values();
    let configs = nus.iter().map(|&nu| cfg.adaptive_config(nu)).collect::<Result<Vec<_>>>()?;
    let histories: Vec<_> = pool(jobs)?.install(|| configs.par_iter().map(adaptive_solve).collect());
    let geometry = format!("{:?}", cfg.geometry.preset).to_lowercase();
    for (h, nu) in histories.into_iter().zip(&nus) {
        let h = h.with_context(|| format!("adaptive run at nu = {nu}"))?;
        let stem = format!("{geometry}_{}_mode{}", nu_tag(*nu), cfg.adapt.mode);
        for r in &h.records {
            println!(
                "nu = {nu} it {:>2}: {:>7} dofs, omega {:.6}, eta2 {:.3e}{}",
                r.iteration,
                r.dofs,
                r.omega,
                r.eta2,
                r.eff.map(|e| format!(", eff {e:.3}")).unwrap_or_default()
            );
            out.manifest.timings_s.push((format!("{stem} it {}", r.iteration), r.wall_time.as_secs_f64()));
        }
        out.manifest.warnings.extend(h.warnings.iter().map(|w| format!("{stem}: {w}")));
        out.write(&format!("history_{stem}.csv"), &output::history_csv(&h))?;
        if cfg.output.vtk {
            let m = &h.final_mesh;
            out.write(&format!("mesh_{stem}.vtk"), &vtk::write_vtk(m, &stem, &vtk::ModeFields::zeros(m), None))?;
        }
    }
    Ok(())
}

/// Level column and mode columns of a study CSV.
pub fn read_study_csv(path: &Path) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let level_col = headers.iter().position(|h| h == "N").context("no `N` column")?;
    let mode_cols: Vec<usize> = headers.iter().enumerate().filter(|(_, h)| h.starts_with("omega")).map(|(i, _)| i).collect();
    ensure!(!mode_cols.is_empty(), "no `omega*` columns");
    let mut levels = Vec::new();
    let mut cols = vec![Vec::new(); mode_cols.len()];
    for rec in rdr.records() {
        let rec = rec?;
        levels.push(rec[level_col].trim().parse::<f64>()?);
        for (k, &c) in mode_cols.iter().enumerate() {
            cols[k].push(rec[c].trim().parse::<f64>()?);
        }
    }
    Ok((levels, cols))
}

fn run_fit(input: &Path, reference: Option<f64>, out: &mut OutputDir) -> Result<()> {
    let (levels, cols) = read_study_csv(input)?;
    let mut rows = vec!["mode,order,omega_extr,constant,converged".to_string()];
    for (m, col) in cols.iter().enumerate() {
        let f = extrapolate(&levels, col)?;
        println!("mode {}: order {:.4}, omega_extr {:.6}, C {:.4e}{}", m + 1, f.order, f.omega, f.constant, if f.converged { "" } else { " (not converged)" });
        rows.push(format!(
            "{},{},{},{},{}",
            m + 1,
            output::fmt_float(f.order),
            output::fmt_float(f.omega),
            output::fmt_float(f.constant),
            u8::from(f.converged)
        ));
    }
    if let Some(w) = reference {
        let h: Vec<f64> = levels.iter().map(|n| 1.0 / n).collect();
        let err: Vec<f64> = cols[0].iter().map(|wh| (wh * wh - w * w).abs()).collect();
        if err.iter().any(|e| *e == 0.0) {
            bail!("a tabulated value equals the reference exactly");
        }
        println!("rate of |omega_h^2 - omega^2| in h: {:.4}", fit_rate(&h, &err)?);
    }
    out.write("fits.csv", &(rows.join("\n") + "\n"))?;
    Ok(())
}
