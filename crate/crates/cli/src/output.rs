//! CSV tables, Matrix Market export and the run manifest.
//!
//! Floats are written in scientific notation with 17 significant digits so
//! that identical runs produce identical files.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use elastoacoustic::adaptivity::AdaptiveHistory;
use elastoacoustic::estimator::IndicatorSet;
use elastoacoustic::sparse::CsrMatrix;
use elastoacoustic::study::ConvergenceTable;
use elastoacoustic::{EdgeTag, Mesh, SpectrumReport};
use serde::Serialize;

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn to_string(records: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.write_record(&r).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("csv output is UTF-8")
}

/// Columns `mode_index, kappa, omega, residual, kernel_flag`: physical modes
/// first (1-based), then the kernel pairs with index 0.
pub fn spectrum_csv(report: &SpectrumReport) -> String {
    let mut rows = vec![["mode_index", "kappa", "omega", "residual", "kernel_flag"].map(String::from).to_vec()];
    for (i, p) in report.pairs.iter().enumerate() {
        rows.push(vec![(i + 1).to_string(), fmt_float(p.kappa), fmt_float(p.omega()), fmt_float(p.residual), "0".into()]);
    }
    for p in &report.kernel {
        rows.push(vec!["0".into(), fmt_float(p.kappa), fmt_float(p.omega()), fmt_float(p.residual), "1".into()]);
    }
    to_string(rows)
}

/// Columns `N, dofs, omega_1, …`.
pub fn study_csv(table: &ConvergenceTable) -> String {
    let n_modes = table.fits.len();
    let mut header = vec!["N".to_string(), "dofs".to_string()];
    header.extend((1..=n_modes).map(|m| format!("omega_{m}")));
    let mut rows = vec![header];
    for r in &table.rows {
        let mut row = vec![r.level.to_string(), r.dofs.to_string()];
        row.extend(r.omegas.iter().map(|w| fmt_float(*w)));
        rows.push(row);
    }
    to_string(rows)
}

/// Columns `mode, order, omega_extr, constant, converged, rms`; empty fields
/// where a fit was not possible.
pub fn fits_csv(table: &ConvergenceTable) -> String {
    let mut rows = vec![["mode", "order", "omega_extr", "constant", "converged", "rms"].map(String::from).to_vec()];
    for (m, fit) in table.fits.iter().enumerate() {
        rows.push(match fit {
            Some(f) => vec![
                (m + 1).to_string(),
                fmt_float(f.order),
                fmt_float(f.omega),
                fmt_float(f.constant),
                u8::from(f.converged).to_string(),
                fmt_float(f.rms),
            ],
            None => vec![(m + 1).to_string(), String::new(), String::new(), String::new(), String::new(), String::new()],
        });
    }
    to_string(rows)
}

/// One row per adaptive iteration. Wall time is left out so that the file is
/// reproducible; it goes to the manifest instead.
pub fn history_csv(history: &AdaptiveHistory) -> String {
    let mut rows = vec![[
        "iteration",
        "dofs",
        "cells",
        "omega",
        "eta2",
        "theta2",
        "err",
        "eff",
        "n_marked",
        "marked_near_singular",
        "overlap",
    ]
    .map(String::from)
    .to_vec()];
    for r in &history.records {
        rows.push(vec![
            r.iteration.to_string(),
            r.dofs.to_string(),
            r.cells.to_string(),
            fmt_float(r.omega),
            fmt_float(r.eta2),
            fmt_float(r.theta2),
            fmt_opt(r.err),
            fmt_opt(r.eff),
            r.n_marked.to_string(),
            fmt_float(r.marked_near_singular),
            fmt_opt(r.overlap),
        ]);
    }
    to_string(rows)
}

/// Per-triangle indicator contributions. `edges` is the share of edge and
/// interface terms attributed to the triangle for marking.
pub fn indicators_csv(mesh: &Mesh, ind: &IndicatorSet) -> String {
    let mut rows = vec![["element", "subdomain", "solid_cell", "oscillation", "fluid_cell", "edges", "total"].map(String::from).to_vec()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let edges = ind.element_totals[t] - ind.solid_cell[t] - ind.fluid_cell[t];
        rows.push(vec![
            t.to_string(),
            tri.subdomain.to_string(),
            fmt_float(ind.solid_cell[t]),
            fmt_float(ind.solid_oscillation[t]),
            fmt_float(ind.fluid_cell[t]),
            fmt_float(edges),
            fmt_float(ind.element_totals[t]),
        ]);
    }
    to_string(rows)
}

/// Matrix Market coordinate format, general real, 1-based indices.
pub fn matrix_market(m: &CsrMatrix) -> String {
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    s.push_str(&format!("{} {} {}\n", m.nrows(), m.ncols(), m.nnz()));
    for (i, j, v) in m.triplets() {
        s.push_str(&format!("{} {} {}\n", i + 1, j + 1, fmt_float(v)));
    }
    s
}

/// Counts of boundary edges per tag, for mesh summaries.
pub fn edge_tag_counts(mesh: &Mesh) -> Vec<(EdgeTag, usize)> {
    [EdgeTag::GammaD, EdgeTag::GammaN, EdgeTag::Gamma0, EdgeTag::Interface, EdgeTag::Interior]
        .into_iter()
        .map(|t| (t, mesh.edges_tagged(t).count()))
        .collect()
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub timings_s: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &impl Serialize) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: elastoacoustic::VERSION,
            command: command.to_string(),
            config: serde_json::to_value(config).expect("configuration serializes"),
            outputs: Vec::new(),
            timings_s: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

/// Writes files under one output directory and records them in the manifest.
pub struct OutputDir {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl OutputDir {
    pub fn create(root: PathBuf, manifest: Manifest) -> Result<Self> {
        std::fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutputDir { root, manifest })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn finish(self) -> Result<PathBuf> {
        let path = self.root.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}
