//! Residual-based a posteriori indicators for one eigenmode.
//!
//! All squared edge terms use the first power of the edge length and the
//! interior-edge jumps carry a factor 1/2 inside the norm. Indicator vectors
//! are indexed by global triangle or edge id and are zero outside their part.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use thiserror::Error;

use crate::assembly::{AssemblyError, BlockSystem, MaterialField, Spaces};
use crate::eigen::EigenPair;
use crate::fe::{edge_point, eval_bdm, ElementKind, ElementMap};
use crate::mesh::{EdgeTag, Mesh, Subdomain};
use crate::quadrature::{quadrature, segment_rule, QuadratureError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("system carries no finite element spaces")]
    MissingSpaces,
    #[error("mode vector has length {got}, expected {expected}")]
    WrongLength { got: usize, expected: usize },
    #[error("fluid indicators need ω_h > 0, got κ_h = {0}")]
    KernelMode(f64),
    #[error("indicator parts come from different modes")]
    ModeMismatch,
    #[error("projected shear modulus is not positive on triangle {0}")]
    NonPositiveModulus(usize),
    #[error(transparent)]
    Material(#[from] AssemblyError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    /// Quadrature degree for element and edge integrals.
    pub quadrature_degree: usize,
    /// Degree (0 or 1) of the elementwise L² projection of μ.
    pub projection_degree: usize,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions { quadrature_degree: 5, projection_degree: 1 }
    }
}

/// Solid weights at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolidWeights {
    pub rho1: f64,
    pub rho2: f64,
    pub rho_edge: f64,
}

impl SolidWeights {
    pub fn new(mu_h: f64, lambda_inv: f64) -> Self {
        let inv = 1.0 / (2.0 * mu_h);
        SolidWeights { rho1: inv.sqrt(), rho2: 1.0 / (inv + lambda_inv), rho_edge: inv.sqrt() / 2f64.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidWeights {
    pub rho: f64,
    pub rho_edge: f64,
}

impl FluidWeights {
    pub fn new(materials: &MaterialField, kappa: f64) -> Result<Self, EstimatorError> {
        if !(kappa > 0.0) {
            return Err(EstimatorError::KernelMode(kappa));
        }
        let rho = materials.fluid_bulk().powf(-0.5);
        let rho_edge = rho.min((kappa * materials.fluid_density).powf(-0.5)) / 2f64.sqrt();
        Ok(FluidWeights { rho, rho_edge })
    }
}

/// `∂v₂/∂x₁ − ∂v₁/∂x₂` from a gradient `g[i][j] = ∂_j v_i`.
pub fn rot(g: [[f64; 2]; 2]) -> f64 {
    g[1][0] - g[0][1]
}

/// Identifies the mode an indicator part was computed from.
pub fn mode_fingerprint(mode: &EigenPair) -> u64 {
    let mut h = DefaultHasher::new();
    mode.kappa.to_bits().hash(&mut h);
    mode.vector.len().hash(&mut h);
    for v in &mode.vector {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolidPart {
    pub fingerprint: u64,
    pub cell: Vec<f64>,
    pub oscillation: Vec<f64>,
    pub edge: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidPart {
    pub fingerprint: u64,
    pub cell: Vec<f64>,
    pub edge: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfacePart {
    pub fingerprint: u64,
    pub edge: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSet {
    pub fingerprint: u64,
    pub solid_cell: Vec<f64>,
    pub solid_oscillation: Vec<f64>,
    pub solid_edge: Vec<f64>,
    pub fluid_cell: Vec<f64>,
    pub fluid_edge: Vec<f64>,
    pub interface_edge: Vec<f64>,
    pub eta2: f64,
    pub theta2: f64,
    /// Per-triangle totals used for marking.
    pub element_totals: Vec<f64>,
}

/// Shape-resolved view of a mode on the spaces of its system.
struct Fields<'a> {
    spaces: &'a Spaces,
    ux: Vec<f64>,
    uy: Vec<f64>,
    w: &'a [f64],
    p: &'a [f64],
}

impl<'a> Fields<'a> {
    fn new(system: &'a BlockSystem, mode: &'a EigenPair) -> Result<Self, EstimatorError> {
        let spaces = system.spaces.as_ref().ok_or(EstimatorError::MissingSpaces)?;
        let layout = &system.layout;
        let x = &mode.vector;
        if x.len() != layout.total() {
            return Err(EstimatorError::WrongLength { got: x.len(), expected: layout.total() });
        }
        Ok(Fields {
            spaces,
            ux: layout.displacement_component(x, 0),
            uy: layout.displacement_component(x, 1),
            w: layout.fluid_part(x),
            p: layout.pressure_part(x),
        })
    }

    /// Displacement gradient `g[c][j] = ∂_j u_c`, its second derivatives,
    /// value, and pressure value/gradient at a reference point of solid `t`.
    fn solid_at(&self, em: &ElementMap, t: usize, l: [f64; 3]) -> SolidPoint {
        let disp = &self.spaces.displacement;
        let phi = em.scalar_basis(disp.kind, l);
        let psi = em.scalar_basis(ElementKind::P1, l);
        let mut sp = SolidPoint::default();
        for (a, &d) in disp.dofs(t).iter().enumerate() {
            let c = [self.ux[d], self.uy[d]];
            for i in 0..2 {
                sp.u[i] += c[i] * phi.values[a];
                for j in 0..2 {
                    sp.grad[i][j] += c[i] * phi.grads[a][j];
                    for k in 0..2 {
                        sp.hess[i][j][k] += c[i] * phi.hessians[a][j][k];
                    }
                }
            }
        }
        for (a, &d) in self.spaces.pressure.dofs(t).iter().enumerate() {
            sp.p += self.p[d] * psi.values[a];
            sp.grad_p[0] += self.p[d] * psi.grads[a][0];
            sp.grad_p[1] += self.p[d] * psi.grads[a][1];
        }
        sp
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct SolidPoint {
    u: [f64; 2],
    grad: [[f64; 2]; 2],
    hess: [[[f64; 2]; 2]; 2],
    p: f64,
    grad_p: [f64; 2],
}

impl SolidPoint {
    fn strain(&self) -> [[f64; 2]; 2] {
        let g = self.grad;
        let off = 0.5 * (g[0][1] + g[1][0]);
        [[g[0][0], off], [off, g[1][1]]]
    }

    fn traction(&self, mu_h: f64, n: [f64; 2]) -> [f64; 2] {
        let e = self.strain();
        let s = [[2.0 * mu_h * e[0][0] - self.p, 2.0 * mu_h * e[0][1]], [2.0 * mu_h * e[1][0], 2.0 * mu_h * e[1][1] - self.p]];
        [s[0][0] * n[0] + s[0][1] * n[1], s[1][0] * n[0] + s[1][1] * n[1]]
    }
}

/// Elementwise projection `μ_h = Σ m_i λ_i` of the shear modulus.
struct ProjectedModulus {
    coeffs: Vec<[f64; 3]>,
}

impl ProjectedModulus {
    fn new(mesh: &Mesh, spaces: &Spaces, materials: &MaterialField, degree: usize) -> Result<Self, EstimatorError> {
        let q = quadrature(8)?;
        let mut coeffs = vec![[0.0; 3]; mesh.n_triangles()];
        for &t in spaces.displacement.cells() {
            let em = ElementMap::of(mesh, t);
            let mut mean = 0.0;
            let mut b = [0.0; 3];
            for (l, w) in q.points.iter().zip(&q.weights) {
                let (mu, _) = materials.lame_from(em.to_physical(*l))?;
                mean += w * mu;
                for i in 0..3 {
                    b[i] += w * mu * l[i];
                }
            }
            // reference weights sum to 1/2; the reference P1 mass matrix is (I + J)/24
            coeffs[t] = if degree == 0 {
                [2.0 * mean; 3]
            } else {
                let s = b[0] + b[1] + b[2];
                [24.0 * b[0] - 6.0 * s, 24.0 * b[1] - 6.0 * s, 24.0 * b[2] - 6.0 * s]
            };
            if coeffs[t].iter().any(|&m| !(m > 0.0)) {
                return Err(EstimatorError::NonPositiveModulus(t));
            }
        }
        Ok(ProjectedModulus { coeffs })
    }

    fn at(&self, t: usize, l: [f64; 3]) -> f64 {
        let m = self.coeffs[t];
        m[0] * l[0] + m[1] * l[1] + m[2] * l[2]
    }

    fn grad(&self, em: &ElementMap, t: usize) -> [f64; 2] {
        let b = em.scalar_basis(ElementKind::P1, [1.0 / 3.0; 3]);
        let m = self.coeffs[t];
        let mut g = [0.0; 2];
        for i in 0..3 {
            g[0] += m[i] * b.grads[i][0];
            g[1] += m[i] * b.grads[i][1];
        }
        g
    }
}

/// Barycentric point on the edge `e` of triangle `t` at global edge
/// parameter `s` (measured from the lower-numbered vertex).
fn edge_point_of(mesh: &Mesh, t: usize, e: usize, s: f64) -> [f64; 3] {
    let i = mesh.local_edge_index(t, e).expect("edge belongs to triangle");
    let first = mesh.triangles()[t].vertices[(i + 1) % 3];
    let local_s = if first == mesh.edges()[e].vertices[0] { s } else { 1.0 - s };
    edge_point(i, local_s)
}

fn solid_neighbours(mesh: &Mesh, e: usize) -> Vec<usize> {
    mesh.edges()[e].neighbours().filter(|&t| mesh.triangles()[t].subdomain == Subdomain::Solid).collect()
}

fn fluid_neighbours(mesh: &Mesh, e: usize) -> Vec<usize> {
    mesh.edges()[e].neighbours().filter(|&t| mesh.triangles()[t].subdomain == Subdomain::Fluid).collect()
}

fn norm2sq(v: [f64; 2]) -> f64 {
    v[0] * v[0] + v[1] * v[1]
}

pub fn solid_indicators(
    mesh: &Mesh,
    system: &BlockSystem,
    mode: &EigenPair,
    materials: &MaterialField,
    opts: &EstimatorOptions,
) -> Result<SolidPart, EstimatorError> {
    let f = Fields::new(system, mode)?;
    let mu_h = ProjectedModulus::new(mesh, f.spaces, materials, opts.projection_degree)?;
    let q = quadrature(opts.quadrature_degree)?;
    let rho_s = materials.solid_density;
    let mut cell = vec![0.0; mesh.n_triangles()];
    let mut oscillation = vec![0.0; mesh.n_triangles()];
    for &t in f.spaces.displacement.cells() {
        let em = ElementMap::of(mesh, t);
        let h = mesh.diameter(t);
        let jw = em.det.abs();
        let gmu = mu_h.grad(&em, t);
        let (mut r1, mut r2, mut osc) = (0.0, 0.0, 0.0);
        for (l, w) in q.points.iter().zip(&q.weights) {
            let x = em.to_physical(*l);
            let (mu, lambda_inv) = materials.lame_from(x)?;
            let m = mu_h.at(t, *l);
            let wt = SolidWeights::new(m, lambda_inv);
            let sp = f.solid_at(&em, t, *l);
            let eps = sp.strain();
            let div_u = sp.grad[0][0] + sp.grad[1][1];
            let mut res = [0.0; 2];
            for i in 0..2 {
                // Σ_j ∂_j ε_ij = (Δu_i + ∂_i div u) / 2
                let lap = sp.hess[i][0][0] + sp.hess[i][1][1];
                let grad_div = sp.hess[0][0][i] + sp.hess[1][1][i];
                let div_eps = 0.5 * (lap + grad_div);
                let eps_grad_mu = eps[i][0] * gmu[0] + eps[i][1] * gmu[1];
                res[i] = 2.0 * eps_grad_mu + 2.0 * m * div_eps - sp.grad_p[i] + mode.kappa * rho_s * sp.u[i];
            }
            let r2v = div_u + lambda_inv * sp.p;
            let wq = w * jw;
            r1 += wq * wt.rho1 * wt.rho1 * norm2sq(res);
            r2 += wq * wt.rho2 * r2v * r2v;
            let eps2 = eps[0][0].powi(2) + 2.0 * eps[0][1].powi(2) + eps[1][1].powi(2);
            osc += wq * wt.rho1 * wt.rho1 * (mu - m).powi(2) * eps2;
        }
        cell[t] = h * h * r1 + r2;
        oscillation[t] = osc;
    }

    let (sx, sw) = segment_rule(opts.quadrature_degree);
    let mut edge = vec![0.0; mesh.n_edges()];
    for (e, ed) in mesh.edges().iter().enumerate() {
        let neighbours = match ed.tag {
            EdgeTag::Interior | EdgeTag::GammaN => solid_neighbours(mesh, e),
            _ => continue,
        };
        if neighbours.is_empty() {
            continue;
        }
        let n = mesh.edge_normal(e);
        let len = mesh.edge_length(e);
        let maps: Vec<ElementMap> = neighbours.iter().map(|&t| ElementMap::of(mesh, t)).collect();
        let mut acc = 0.0;
        for (&s, &w) in sx.iter().zip(&sw) {
            let mut jump = [0.0; 2];
            let mut mu_sum = 0.0;
            for (k, (&t, em)) in neighbours.iter().zip(&maps).enumerate() {
                let l = edge_point_of(mesh, t, e, s);
                let m = mu_h.at(t, l);
                mu_sum += m;
                let tr = f.solid_at(em, t, l).traction(m, n);
                let sign = if k == 0 { 1.0 } else { -1.0 };
                jump[0] += sign * tr[0];
                jump[1] += sign * tr[1];
            }
            let mu_e = mu_sum / neighbours.len() as f64;
            let factor = if neighbours.len() == 2 { 0.5 } else { 1.0 };
            let rho_e = SolidWeights::new(mu_e, 0.0).rho_edge;
            acc += w * len * (rho_e * factor).powi(2) * norm2sq(jump);
        }
        edge[e] = len * acc;
    }
    Ok(SolidPart { fingerprint: mode_fingerprint(mode), cell, oscillation, edge })
}

pub fn fluid_indicators(
    mesh: &Mesh,
    system: &BlockSystem,
    mode: &EigenPair,
    materials: &MaterialField,
    opts: &EstimatorOptions,
) -> Result<FluidPart, EstimatorError> {
    let f = Fields::new(system, mode)?;
    let wt = FluidWeights::new(materials, mode.kappa)?;
    let q = quadrature(opts.quadrature_degree)?;
    let fluid = &f.spaces.fluid;
    let bulk = materials.fluid_bulk();
    let kr = mode.kappa * materials.fluid_density;
    let mut cell = vec![0.0; mesh.n_triangles()];
    for &t in fluid.cells() {
        let em = ElementMap::of(mesh, t);
        let h = mesh.diameter(t);
        let mut acc = 0.0;
        for (l, w) in q.points.iter().zip(&q.weights) {
            // div w_h is constant per element, so ∇(div w_h) vanishes
            let (v, g, _) = eval_bdm(mesh, fluid, f.w, t, *l);
            let r1 = [kr * v[0], kr * v[1]];
            let r2 = kr * rot(g);
            acc += w * em.det.abs() * (norm2sq(r1) + r2 * r2);
        }
        cell[t] = h * h * wt.rho * wt.rho * acc;
    }

    let g_rho = materials.gravity * materials.fluid_density;
    let (sx, sw) = segment_rule(opts.quadrature_degree);
    let mut edge = vec![0.0; mesh.n_edges()];
    for (e, ed) in mesh.edges().iter().enumerate() {
        if !matches!(ed.tag, EdgeTag::Interior | EdgeTag::Gamma0) {
            continue;
        }
        let neighbours = fluid_neighbours(mesh, e);
        if neighbours.is_empty() {
            continue;
        }
        let n = mesh.edge_normal(e);
        let len = mesh.edge_length(e);
        let mut acc = 0.0;
        for (&s, &w) in sx.iter().zip(&sw) {
            let (mut j1, mut j2) = (0.0, 0.0);
            for (k, &t) in neighbours.iter().enumerate() {
                let (v, _, d) = eval_bdm(mesh, fluid, f.w, t, edge_point_of(mesh, t, e, s));
                let sign = if k == 0 { 1.0 } else { -1.0 };
                let mut flux = bulk * d;
                if ed.tag == EdgeTag::Gamma0 {
                    let no = mesh.outward_normal(t, e);
                    flux += g_rho * (v[0] * no[0] + v[1] * no[1]);
                }
                j1 += sign * flux;
                j2 += sign * kr * (v[0] * n[1] - v[1] * n[0]);
            }
            let factor = if neighbours.len() == 2 { 0.5 } else { 1.0 };
            acc += w * len * (wt.rho_edge * factor).powi(2) * (j1 * j1 + j2 * j2);
        }
        edge[e] = len * acc;
    }
    Ok(FluidPart { fingerprint: mode_fingerprint(mode), cell, edge })
}

pub fn interface_indicators(
    mesh: &Mesh,
    system: &BlockSystem,
    mode: &EigenPair,
    materials: &MaterialField,
    opts: &EstimatorOptions,
) -> Result<InterfacePart, EstimatorError> {
    let f = Fields::new(system, mode)?;
    let fw = FluidWeights::new(materials, mode.kappa)?;
    let mu_h = ProjectedModulus::new(mesh, f.spaces, materials, opts.projection_degree)?;
    let bulk = materials.fluid_bulk();
    let kr = mode.kappa * materials.fluid_density;
    let (sx, sw) = segment_rule(opts.quadrature_degree);
    let mut edge = vec![0.0; mesh.n_edges()];
    for e in mesh.edges_tagged(EdgeTag::Interface) {
        let ts = solid_neighbours(mesh, e)[0];
        let tf = fluid_neighbours(mesh, e)[0];
        let n = mesh.outward_normal(tf, e);
        let len = mesh.edge_length(e);
        let em = ElementMap::of(mesh, ts);
        let (mut a, mut b) = (0.0, 0.0);
        for (&s, &w) in sx.iter().zip(&sw) {
            let ls = edge_point_of(mesh, ts, e, s);
            let m = mu_h.at(ts, ls);
            let tr = f.solid_at(&em, ts, ls).traction(m, n);
            let (v, _, d) = eval_bdm(mesh, &f.spaces.fluid, f.w, tf, edge_point_of(mesh, tf, e, s));
            let r = [tr[0] - bulk * d * n[0], tr[1] - bulk * d * n[1]];
            let rho_i = fw.rho_edge.min(SolidWeights::new(m, 0.0).rho_edge);
            let tang = kr * (v[0] * n[1] - v[1] * n[0]);
            a += w * len * rho_i * rho_i * norm2sq(r);
            b += w * len * fw.rho_edge * fw.rho_edge * tang * tang;
        }
        edge[e] = len * (a + b);
    }
    Ok(InterfacePart { fingerprint: mode_fingerprint(mode), edge })
}

/// Sums all parts and attributes edge terms to triangles for marking: half
/// of an interior edge to each neighbour, boundary and interface edges in
/// full to every neighbour.
pub fn global_estimate(
    mesh: &Mesh,
    solid: SolidPart,
    fluid: FluidPart,
    interface: InterfacePart,
) -> Result<IndicatorSet, EstimatorError> {
    if solid.fingerprint != fluid.fingerprint || solid.fingerprint != interface.fingerprint {
        return Err(EstimatorError::ModeMismatch);
    }
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    let eta2 = sum(&solid.cell) + sum(&solid.edge) + sum(&fluid.cell) + sum(&fluid.edge) + sum(&interface.edge);
    let theta2 = sum(&solid.oscillation);
    let mut totals: Vec<f64> = solid.cell.iter().zip(&fluid.cell).map(|(a, b)| a + b).collect();
    for (e, ed) in mesh.edges().iter().enumerate() {
        let share = match ed.tag {
            EdgeTag::Interior => 0.5,
            _ => 1.0,
        };
        let v = solid.edge[e] + fluid.edge[e] + interface.edge[e];
        for t in ed.neighbours() {
            totals[t] += share * v;
        }
    }
    Ok(IndicatorSet {
        fingerprint: solid.fingerprint,
        solid_cell: solid.cell,
        solid_oscillation: solid.oscillation,
        solid_edge: solid.edge,
        fluid_cell: fluid.cell,
        fluid_edge: fluid.edge,
        interface_edge: interface.edge,
        eta2,
        theta2,
        element_totals: totals,
    })
}

/// All three parts and their aggregate for one mode.
pub fn estimate(
    mesh: &Mesh,
    system: &BlockSystem,
    mode: &EigenPair,
    materials: &MaterialField,
    opts: &EstimatorOptions,
) -> Result<IndicatorSet, EstimatorError> {
    let s = solid_indicators(mesh, system, mode, materials, opts)?;
    let f = fluid_indicators(mesh, system, mode, materials, opts)?;
    let i = interface_indicators(mesh, system, mode, materials, opts)?;
    global_estimate(mesh, s, f, i)
}
