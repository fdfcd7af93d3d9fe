//! Sparse assembly of the stiffness `Ã`, mass `B` and interface constraint `C`.
//!
//! The unknown is ordered `[u_x, u_y, w, p]`: displacement components (clamped
//! dofs removed), BDM1 fluid displacement, solid pressure. The pencil solved
//! downstream is `Ã x = κ B x` restricted to `ker C`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::fe::{build_dofmap, edge_point, eval_bdm, DofMap, ElementKind, ElementMap};
use crate::mesh::{validate, EdgeTag, Mesh, Subdomain};
use crate::quadrature::{quadrature, segment_rule, QuadratureRule};
use crate::sparse::{CsrMatrix, TripletBuilder};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("Poisson ratio {0} outside (0, 1/2]")]
    PoissonOutOfRange(f64),
    #[error("Young modulus must be positive, got {0}")]
    NonPositiveModulus(f64),
    #[error("material constant `{0}` must be positive, got {1}")]
    NonPositiveConstant(&'static str, f64),
    #[error("mesh fails validation:\n{0}")]
    InvalidMesh(String),
}

/// A scalar coefficient field on the plane.
#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    /// `c0 + cx x + cy y`.
    Affine { c0: f64, cx: f64, cy: f64 },
    Custom(Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>),
}

impl ScalarField {
    pub fn at(&self, p: [f64; 2]) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Affine { c0, cx, cy } => c0 + cx * p[0] + cy * p[1],
            ScalarField::Custom(f) => f(p),
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self {
            ScalarField::Constant(c) => Some(*c),
            _ => None,
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Constant(c) => write!(f, "Constant({c})"),
            ScalarField::Affine { c0, cx, cy } => write!(f, "Affine({c0} + {cx} x + {cy} y)"),
            ScalarField::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl From<f64> for ScalarField {
    fn from(c: f64) -> Self {
        ScalarField::Constant(c)
    }
}

/// Material data of the solid and the fluid (SI units).
#[derive(Debug, Clone)]
pub struct MaterialField {
    pub youngs_modulus: ScalarField,
    pub poisson_ratio: ScalarField,
    pub solid_density: f64,
    pub fluid_density: f64,
    pub sound_speed: f64,
    pub gravity: f64,
}

impl MaterialField {
    /// Steel vessel filled with water.
    pub fn steel_water() -> Self {
        MaterialField {
            youngs_modulus: ScalarField::Constant(1.44e11),
            poisson_ratio: ScalarField::Constant(0.35),
            solid_density: 7700.0,
            fluid_density: 1000.0,
            sound_speed: 1430.0,
            gravity: 9.8,
        }
    }

    pub fn with_poisson(mut self, nu: f64) -> Self {
        self.poisson_ratio = ScalarField::Constant(nu);
        self
    }

    pub fn check(&self) -> Result<(), AssemblyError> {
        for (name, v) in [
            ("solid_density", self.solid_density),
            ("fluid_density", self.fluid_density),
            ("sound_speed", self.sound_speed),
            ("gravity", self.gravity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AssemblyError::NonPositiveConstant(name, v));
            }
        }
        if let Some(nu) = self.poisson_ratio.constant_value() {
            check_poisson(nu)?;
        }
        if let Some(e) = self.youngs_modulus.constant_value() {
            if !(e > 0.0) {
                return Err(AssemblyError::NonPositiveModulus(e));
            }
        }
        Ok(())
    }

    /// `(μ, λ⁻¹)` at `x`; `λ⁻¹ = 0` exactly when `ν = 1/2`.
    pub fn lame_from(&self, x: [f64; 2]) -> Result<(f64, f64), AssemblyError> {
        let e = self.youngs_modulus.at(x);
        let nu = self.poisson_ratio.at(x);
        check_poisson(nu)?;
        if !(e > 0.0) {
            return Err(AssemblyError::NonPositiveModulus(e));
        }
        let mu = e / (2.0 * (1.0 + nu));
        let lambda_inv = (1.0 + nu) * (1.0 - 2.0 * nu) / (e * nu);
        Ok((mu, lambda_inv))
    }

    /// `c² ρ_f`.
    pub fn fluid_bulk(&self) -> f64 {
        self.sound_speed * self.sound_speed * self.fluid_density
    }
}

fn check_poisson(nu: f64) -> Result<(), AssemblyError> {
    if nu > 0.0 && nu <= 0.5 {
        Ok(())
    } else {
        Err(AssemblyError::PoissonOutOfRange(nu))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// P1 + bubble displacement, continuous P1 pressure.
    Mini,
    /// P2 displacement, continuous P1 pressure.
    TaylorHood,
}

impl Family {
    pub fn displacement_kind(self) -> ElementKind {
        match self {
            Family::Mini => ElementKind::P1Bubble,
            Family::TaylorHood => ElementKind::P2,
        }
    }

    /// Quadrature degree exact for the displacement mass matrix.
    pub fn quadrature_degree(self) -> usize {
        (2 * self.displacement_kind().degree()).max(4)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Mini => "mini",
            Family::TaylorHood => "taylor-hood",
        })
    }
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['_', ' ', '+'], "-").as_str() {
            "mini" | "mini-bdm1" => Ok(Family::Mini),
            "taylor-hood" | "taylorhood" | "th" | "taylorhood-bdm1" | "taylor-hood-bdm1" | "p2p1" => Ok(Family::TaylorHood),
            other => Err(format!("unknown element family `{other}`")),
        }
    }
}

/// Scalar displacement, BDM1 fluid and P1 pressure dof maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Spaces {
    pub family: Family,
    pub displacement: DofMap,
    pub fluid: DofMap,
    pub pressure: DofMap,
}

impl Spaces {
    pub fn new(mesh: &Mesh, family: Family) -> Self {
        Spaces {
            family,
            displacement: build_dofmap(mesh, family.displacement_kind(), Subdomain::Solid),
            fluid: build_dofmap(mesh, ElementKind::BDM1, Subdomain::Fluid),
            pressure: build_dofmap(mesh, ElementKind::P1, Subdomain::Solid),
        }
    }
}

/// Positions of the unknown blocks in the global vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    pub n_u: usize,
    pub n_w: usize,
    pub n_p: usize,
    /// `u_index[c * n_scalar + a]`: global index of component `c` of scalar
    /// displacement dof `a`, or `None` if clamped.
    u_index: Vec<Option<usize>>,
    n_scalar: usize,
}

impl BlockLayout {
    fn new(mesh: &Mesh, spaces: &Spaces) -> Self {
        let disp = &spaces.displacement;
        let n_scalar = disp.n_dofs();
        let mut clamped = vec![false; n_scalar];
        for e in mesh.edges_tagged(EdgeTag::GammaD) {
            let t = mesh.edges()[e].triangles[0].expect("boundary edge has a neighbour");
            let i = mesh.local_edge_index(t, e).expect("edge belongs to its neighbour");
            let dofs = disp.dofs(t);
            clamped[dofs[(i + 1) % 3]] = true;
            clamped[dofs[(i + 2) % 3]] = true;
            if disp.kind == ElementKind::P2 {
                clamped[dofs[3 + i]] = true;
            }
        }
        let mut u_index = vec![None; 2 * n_scalar];
        let mut next = 0;
        for c in 0..2 {
            for a in 0..n_scalar {
                if !clamped[a] {
                    u_index[c * n_scalar + a] = Some(next);
                    next += 1;
                }
            }
        }
        BlockLayout { n_u: next, n_w: spaces.fluid.n_dofs(), n_p: spaces.pressure.n_dofs(), u_index, n_scalar }
    }

    pub fn total(&self) -> usize {
        self.n_u + self.n_w + self.n_p
    }

    pub fn w_offset(&self) -> usize {
        self.n_u
    }

    pub fn p_offset(&self) -> usize {
        self.n_u + self.n_w
    }

    pub fn u_dof(&self, component: usize, scalar: usize) -> Option<usize> {
        self.u_index[component * self.n_scalar + scalar]
    }

    pub fn w_dof(&self, i: usize) -> usize {
        self.n_u + i
    }

    pub fn p_dof(&self, i: usize) -> usize {
        self.n_u + self.n_w + i
    }

    pub fn n_scalar_displacement(&self) -> usize {
        self.n_scalar
    }

    /// Scalar displacement coefficients of component `c` (zero on clamped dofs).
    pub fn displacement_component(&self, x: &[f64], c: usize) -> Vec<f64> {
        (0..self.n_scalar).map(|a| self.u_dof(c, a).map_or(0.0, |i| x[i])).collect()
    }

    pub fn fluid_part<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.n_u..self.n_u + self.n_w]
    }

    pub fn pressure_part<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.n_u + self.n_w..]
    }
}

/// The constrained symmetric pencil of one mesh.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub a: CsrMatrix,
    pub b: CsrMatrix,
    pub c: CsrMatrix,
    pub layout: BlockLayout,
    pub spaces: Option<Spaces>,
    /// Interface edge of each pair of constraint rows.
    pub interface_edges: Vec<usize>,
    pub warnings: Vec<String>,
}

impl BlockSystem {
    /// A bare pencil without finite-element context, mainly for tests.
    pub fn from_matrices(a: CsrMatrix, b: CsrMatrix, c: Option<CsrMatrix>) -> Self {
        let n = a.nrows();
        let c = c.unwrap_or_else(|| CsrMatrix::zeros(0, n));
        let layout = BlockLayout { n_u: n, n_w: 0, n_p: 0, u_index: Vec::new(), n_scalar: 0 };
        BlockSystem { a, b, c, layout, spaces: None, interface_edges: Vec::new(), warnings: Vec::new() }
    }

    pub fn n_dofs(&self) -> usize {
        self.a.nrows()
    }

    fn spaces(&self) -> &Spaces {
        self.spaces.as_ref().expect("system assembled from a mesh")
    }

    /// Displacement of the state `x` at barycentric point `l` of solid triangle `t`.
    pub fn displacement_at(&self, mesh: &Mesh, x: &[f64], t: usize, l: [f64; 3]) -> [f64; 2] {
        let disp = &self.spaces().displacement;
        let phi = ElementMap::of(mesh, t).scalar_basis(disp.kind, l);
        let mut u = [0.0; 2];
        for (a, &d) in disp.dofs(t).iter().enumerate() {
            for (c, uc) in u.iter_mut().enumerate() {
                if let Some(i) = self.layout.u_dof(c, d) {
                    *uc += x[i] * phi.values[a];
                }
            }
        }
        u
    }

    /// Solid pressure of `x` at barycentric point `l` of solid triangle `t`.
    pub fn pressure_at(&self, mesh: &Mesh, x: &[f64], t: usize, l: [f64; 3]) -> f64 {
        let pressure = &self.spaces().pressure;
        let phi = ElementMap::of(mesh, t).scalar_basis(ElementKind::P1, l);
        pressure.dofs(t).iter().enumerate().map(|(a, &d)| x[self.layout.p_dof(d)] * phi.values[a]).sum()
    }

    /// Fluid displacement of `x` at barycentric point `l` of fluid triangle `t`.
    pub fn flux_at(&self, mesh: &Mesh, x: &[f64], t: usize, l: [f64; 3]) -> [f64; 2] {
        eval_bdm(mesh, &self.spaces().fluid, self.layout.fluid_part(x), t, l).0
    }
}

/// Assembles `Ã`, `B` and `C` for `mesh`.
pub fn assemble_system(mesh: &Mesh, family: Family, materials: &MaterialField) -> Result<BlockSystem, AssemblyError> {
    materials.check()?;
    let report = validate(mesh);
    if !report.passed() {
        return Err(AssemblyError::InvalidMesh(report.to_string()));
    }
    let spaces = Spaces::new(mesh, family);
    let layout = BlockLayout::new(mesh, &spaces);
    let mut warnings = Vec::new();
    if mesh.count_subdomain(Subdomain::Solid) > 0 && mesh.edges_tagged(EdgeTag::GammaD).next().is_none() {
        warnings.push("no clamped boundary: rigid motions are in the solid space".to_string());
    }
    let a = assemble_stiffness(mesh, &spaces, &layout, materials)?;
    let b = assemble_mass(mesh, &spaces, &layout, materials);
    let (c, interface_edges) = assemble_interface(mesh, &spaces, &layout);
    Ok(BlockSystem { a, b, c, layout, spaces: Some(spaces), interface_edges, warnings })
}

fn rule(family: Family) -> QuadratureRule {
    quadrature(family.quadrature_degree()).expect("supported degree")
}

/// Pushes a symmetric local matrix (upper triangle mirrored) through `map`.
fn scatter_symmetric(tb: &mut TripletBuilder, local: &[f64], n: usize, map: &[Option<usize>]) {
    for i in 0..n {
        let Some(gi) = map[i] else { continue };
        for j in 0..n {
            let Some(gj) = map[j] else { continue };
            let v = if i <= j { local[i * n + j] } else { local[j * n + i] };
            tb.push(gi, gj, v);
        }
    }
}

pub fn assemble_stiffness(mesh: &Mesh, spaces: &Spaces, layout: &BlockLayout, materials: &MaterialField) -> Result<CsrMatrix, AssemblyError> {
    let n = layout.total();
    let mut tb = TripletBuilder::new(n, n);
    let q = rule(spaces.family);
    let disp = &spaces.displacement;
    let nl = disp.n_local();
    // local ordering: [u_x (nl), u_y (nl), p (3)]
    let ns = 2 * nl + 3;
    let mut local = vec![0.0; ns * ns];
    let mut map = vec![None; ns];
    for &t in disp.cells() {
        local.iter_mut().for_each(|v| *v = 0.0);
        let em = ElementMap::of(mesh, t);
        let jw = em.det.abs();
        for (l, w) in q.points.iter().zip(&q.weights) {
            let x = em.to_physical(*l);
            let (mu, lambda_inv) = materials.lame_from(x)?;
            let phi = em.scalar_basis(disp.kind, *l);
            let psi = em.scalar_basis(ElementKind::P1, *l);
            let wq = w * jw;
            for ci in 0..2 {
                for a in 0..nl {
                    let r = ci * nl + a;
                    let ga = phi.grads[a];
                    for cj in 0..2 {
                        for b in 0..nl {
                            let s = cj * nl + b;
                            if s < r {
                                continue;
                            }
                            let gb = phi.grads[b];
                            // 2μ ε(φa e_ci):ε(φb e_cj)
                            let mut v = ga[cj] * gb[ci];
                            if ci == cj {
                                v += ga[0] * gb[0] + ga[1] * gb[1];
                            }
                            local[r * ns + s] += wq * mu * v;
                        }
                    }
                    for c in 0..3 {
                        local[r * ns + 2 * nl + c] -= wq * psi.values[c] * ga[ci];
                    }
                }
            }
            for c in 0..3 {
                for d in c..3 {
                    local[(2 * nl + c) * ns + 2 * nl + d] -= wq * lambda_inv * psi.values[c] * psi.values[d];
                }
            }
        }
        let dofs = disp.dofs(t);
        for ci in 0..2 {
            for a in 0..nl {
                map[ci * nl + a] = layout.u_dof(ci, dofs[a]);
            }
        }
        for (c, &pd) in spaces.pressure.dofs(t).iter().enumerate() {
            map[2 * nl + c] = Some(layout.p_dof(pd));
        }
        scatter_symmetric(&mut tb, &local, ns, &map);
    }

    let fluid = &spaces.fluid;
    let bulk = materials.fluid_bulk();
    let mut local = [0.0; 36];
    for &t in fluid.cells() {
        let em = ElementMap::of(mesh, t);
        let basis = em.bdm_basis([1.0 / 3.0; 3]);
        let sg = fluid.signs(t);
        // divergences are constant on each element
        for r in 0..6 {
            for s in r..6 {
                local[r * 6 + s] = bulk * em.area() * sg[r] * basis.divs[r] * sg[s] * basis.divs[s];
            }
        }
        let map: Vec<Option<usize>> = fluid.dofs(t).iter().map(|&d| Some(layout.w_dof(d))).collect();
        scatter_symmetric(&mut tb, &local, 6, &map);
    }

    let g_rho = materials.gravity * materials.fluid_density;
    let (sx, sw) = segment_rule(4);
    for e in mesh.edges_tagged(EdgeTag::Gamma0) {
        let t = mesh.edges()[e].triangles[0].expect("boundary edge has a neighbour");
        let i = mesh.local_edge_index(t, e).expect("edge belongs to its neighbour");
        let em = ElementMap::of(mesh, t);
        let n = mesh.outward_normal(t, e);
        let len = mesh.edge_length(e);
        let sg = fluid.signs(t);
        local.iter_mut().for_each(|v| *v = 0.0);
        for (&s, &w) in sx.iter().zip(&sw) {
            let b = em.bdm_basis(edge_point(i, s));
            let nn: Vec<f64> = (0..6).map(|r| sg[r] * (b.values[r][0] * n[0] + b.values[r][1] * n[1])).collect();
            for r in 0..6 {
                for s2 in r..6 {
                    local[r * 6 + s2] += g_rho * w * len * nn[r] * nn[s2];
                }
            }
        }
        let map: Vec<Option<usize>> = fluid.dofs(t).iter().map(|&d| Some(layout.w_dof(d))).collect();
        scatter_symmetric(&mut tb, &local, 6, &map);
    }
    Ok(tb.build())
}

pub fn assemble_mass(mesh: &Mesh, spaces: &Spaces, layout: &BlockLayout, materials: &MaterialField) -> CsrMatrix {
    let n = layout.total();
    let mut tb = TripletBuilder::new(n, n);
    let q = rule(spaces.family);
    let disp = &spaces.displacement;
    let nl = disp.n_local();
    let mut local = vec![0.0; nl * nl];
    for &t in disp.cells() {
        local.iter_mut().for_each(|v| *v = 0.0);
        let em = ElementMap::of(mesh, t);
        for (l, w) in q.points.iter().zip(&q.weights) {
            let phi = em.scalar_basis(disp.kind, *l);
            let wq = w * em.det.abs() * materials.solid_density;
            for a in 0..nl {
                for b in a..nl {
                    local[a * nl + b] += wq * phi.values[a] * phi.values[b];
                }
            }
        }
        let dofs = disp.dofs(t);
        for c in 0..2 {
            let map: Vec<Option<usize>> = dofs.iter().map(|&d| layout.u_dof(c, d)).collect();
            scatter_symmetric(&mut tb, &local, nl, &map);
        }
    }
    let fluid = &spaces.fluid;
    let q2 = quadrature(2).expect("supported degree");
    let mut local = [0.0; 36];
    for &t in fluid.cells() {
        local.iter_mut().for_each(|v| *v = 0.0);
        let em = ElementMap::of(mesh, t);
        let sg = fluid.signs(t);
        for (l, w) in q2.points.iter().zip(&q2.weights) {
            let b = em.bdm_basis(*l);
            let wq = w * em.det.abs() * materials.fluid_density;
            for r in 0..6 {
                for s in r..6 {
                    let v = b.values[r][0] * b.values[s][0] + b.values[r][1] * b.values[s][1];
                    local[r * 6 + s] += wq * sg[r] * sg[s] * v;
                }
            }
        }
        let map: Vec<Option<usize>> = fluid.dofs(t).iter().map(|&d| Some(layout.w_dof(d))).collect();
        scatter_symmetric(&mut tb, &local, 6, &map);
    }
    tb.build()
}

/// Two rows per interface edge `E`: `∫_E (v·n_E − τ·n_E) ζ_k = 0`, `k = 0, 1`.
///
/// By the BDM1 dof identity the fluid part of row `(E, k)` is exactly `−1` on
/// the dof `w_{E,k}`.
pub fn assemble_interface(mesh: &Mesh, spaces: &Spaces, layout: &BlockLayout) -> (CsrMatrix, Vec<usize>) {
    let edges: Vec<usize> = mesh.edges_tagged(EdgeTag::Interface).collect();
    let mut tb = TripletBuilder::new(2 * edges.len(), layout.total());
    let disp = &spaces.displacement;
    let fluid = &spaces.fluid;
    let (sx, sw) = segment_rule(6);
    for (row, &e) in edges.iter().enumerate() {
        let edge = mesh.edges()[e];
        let (ts, tf) = {
            let [a, b] = [edge.triangles[0].unwrap(), edge.triangles[1].unwrap()];
            if mesh.triangles()[a].subdomain == Subdomain::Solid { (a, b) } else { (b, a) }
        };
        let i = mesh.local_edge_index(ts, e).expect("edge belongs to its neighbour");
        let tri = mesh.triangles()[ts];
        let same = tri.vertices[(i + 1) % 3] == edge.vertices[0];
        let em = ElementMap::of(mesh, ts);
        let n = mesh.edge_normal(e);
        let len = mesh.edge_length(e);
        let dofs = disp.dofs(ts);
        for k in 0..2 {
            let mut coef = vec![0.0; disp.n_local()];
            for (&s, &w) in sx.iter().zip(&sw) {
                let sl = if same { s } else { 1.0 - s };
                let phi = em.scalar_basis(disp.kind, edge_point(i, sl));
                let z = crate::fe::edge_moment_weight(k, s) / len.sqrt();
                for (a, c) in coef.iter_mut().enumerate() {
                    *c += w * len * phi.values[a] * z;
                }
            }
            for (a, &c) in coef.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                for comp in 0..2 {
                    if let Some(g) = layout.u_dof(comp, dofs[a]) {
                        tb.push(2 * row + k, g, c * n[comp]);
                    }
                }
            }
            let fl = mesh.local_edge_index(tf, e).expect("edge belongs to its neighbour");
            let wd = fluid.dofs(tf)[2 * fl + k];
            tb.push(2 * row + k, layout.w_dof(wd), -1.0);
        }
    }
    (tb.build(), edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::{bdm_interpolate, eval_bdm};
    use crate::mesh::{build_cavity_mesh, refine_uniform, GeometrySpec};
    use approx::assert_relative_eq;

    fn unit_material(e: f64, nu: f64) -> MaterialField {
        MaterialField {
            youngs_modulus: e.into(),
            poisson_ratio: nu.into(),
            solid_density: 1.0,
            fluid_density: 1.0,
            sound_speed: 1.0,
            gravity: 1.0,
        }
    }

    fn free_square(sub: Subdomain) -> Mesh {
        let m = Mesh::from_raw(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            &[([0, 1, 2], sub), ([0, 2, 3], sub)],
            |_, _| None,
        )
        .unwrap();
        refine_uniform(&refine_uniform(&m))
    }

    #[test]
    fn lame_examples() {
        let m = MaterialField::steel_water();
        let (mu, li) = m.lame_from([0.0, 0.0]).unwrap();
        assert_relative_eq!(mu, 1.44e11 / 2.7, max_relative = 1e-15);
        assert_relative_eq!(mu, 5.333_333_333_333_333e10, max_relative = 1e-14);
        assert_relative_eq!(1.0 / li, 1.244_444_444_444_444e11, max_relative = 1e-14);
        let (mu, li) = unit_material(1.0, 0.5).lame_from([0.3, 0.3]).unwrap();
        assert_relative_eq!(mu, 1.0 / 3.0);
        assert_eq!(li, 0.0);
        let mut m = unit_material(1.0, 0.25);
        m.youngs_modulus = ScalarField::Affine { c0: 2.0, cx: 1.0, cy: 0.0 };
        let (mu, li) = m.lame_from([1.0, 0.0]).unwrap();
        assert_relative_eq!(mu, 1.2, max_relative = 1e-15);
        assert_relative_eq!(li, 5.0 / 6.0, max_relative = 1e-15);
        assert!(matches!(unit_material(1.0, 0.6).lame_from([0.0; 2]), Err(AssemblyError::PoissonOutOfRange(_))));
        assert!(unit_material(1.0, 0.0).lame_from([0.0; 2]).is_err());
    }

    #[test]
    fn single_triangle_strain_energy_is_area() {
        let m = Mesh::from_raw(vec![[0.0, 0.0], [2.0, 0.0], [0.5, 1.5]], &[([0, 1, 2], Subdomain::Solid)], |_, _| None).unwrap();
        // μ = E / (2 (1 + ν)) = 1/2
        let sys = assemble_system(&m, Family::Mini, &unit_material(1.25, 0.25)).unwrap();
        let l = &sys.layout;
        let mut x = vec![0.0; l.total()];
        for (a, v) in m.vertices().iter().enumerate() {
            x[l.u_dof(0, a).unwrap()] = v[0];
        }
        assert_relative_eq!(sys.a.bilinear(&x, &x), m.area(0), max_relative = 1e-13);
    }

    #[test]
    fn rigid_motions_have_no_energy() {
        for family in [Family::Mini, Family::TaylorHood] {
            let m = free_square(Subdomain::Solid);
            let sys = assemble_system(&m, family, &unit_material(3.0, 0.3)).unwrap();
            assert!(!sys.warnings.is_empty());
            let l = &sys.layout;
            let spaces = sys.spaces.as_ref().unwrap();
            let nodes = nodal_points(&m, &spaces.displacement);
            for f in [|_: [f64; 2]| [1.0, 1.0], |p: [f64; 2]| [-p[1], p[0]]] {
                let mut x = vec![0.0; l.total()];
                for (a, p) in nodes.iter().enumerate() {
                    if let Some(p) = p {
                        let v = f(*p);
                        x[l.u_dof(0, a).unwrap()] = v[0];
                        x[l.u_dof(1, a).unwrap()] = v[1];
                    }
                }
                assert!(sys.a.bilinear(&x, &x).abs() < 1e-12, "{family}");
            }
        }
    }

    /// Interpolation points of nodal dofs (`None` for bubbles).
    fn nodal_points(m: &Mesh, dm: &DofMap) -> Vec<Option<[f64; 2]>> {
        dm.locations()
            .iter()
            .map(|loc| match *loc {
                crate::fe::DofLocation::Vertex(v) => Some(m.vertices()[v]),
                crate::fe::DofLocation::Edge(e) => Some(m.edge_midpoint(e)),
                crate::fe::DofLocation::Cell(_) => None,
            })
            .collect()
    }

    /// Independent BDM1 element: physical monomial basis, global moments.
    #[test]
    fn bdm_divdiv_matches_direct_construction() {
        use faer::linalg::solvers::DenseSolveCore;
        let m = Mesh::from_raw(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &[([0, 1, 2], Subdomain::Fluid)], |_, _| None).unwrap();
        let sys = assemble_system(&m, Family::Mini, &unit_material(1.0, 0.3)).unwrap();
        let (sx, sw) = segment_rule(4);
        let mono = |j: usize, p: [f64; 2]| -> [f64; 2] {
            let v = [1.0, p[0], p[1]][j % 3];
            if j < 3 { [v, 0.0] } else { [0.0, v] }
        };
        let mono_div = [0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        // functional (E, k) applied to monomial j, with the global edge orientation
        let dof = faer::Mat::<f64>::from_fn(6, 6, |r, j| {
            let e = r / 2;
            let [a, b] = m.edges()[e].vertices;
            let (p, q) = (m.vertices()[a], m.vertices()[b]);
            let len = m.edge_length(e);
            let n = m.edge_normal(e);
            sx.iter()
                .zip(&sw)
                .map(|(&s, &w)| {
                    let f = mono(j, [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
                    let z = if r % 2 == 0 { 1.0 } else { 3f64.sqrt() * (2.0 * s - 1.0) } / len.sqrt();
                    w * len * (f[0] * n[0] + f[1] * n[1]) * z
                })
                .sum()
        });
        let coef = dof.partial_piv_lu().inverse();
        let div: Vec<f64> = (0..6).map(|r| (0..6).map(|j| coef[(j, r)] * mono_div[j]).sum()).collect();
        for r in 0..6 {
            for s in 0..6 {
                // the free-surface term is the identity: normal traces on an
                // edge are the orthonormal moment polynomials
                let expect = 0.5 * div[r] * div[s] + if r == s { 1.0 } else { 0.0 };
                assert_relative_eq!(sys.a.get(r, s), expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn p1_vertex_mass_block() {
        let m = Mesh::from_raw(vec![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]], &[([0, 1, 2], Subdomain::Solid)], |_, _| None).unwrap();
        let sys = assemble_system(&m, Family::Mini, &unit_material(1.0, 0.3)).unwrap();
        let l = &sys.layout;
        for a in 0..3 {
            for b in 0..3 {
                let expect = if a == b { 2.0 / 12.0 } else { 1.0 / 12.0 };
                let (i, j) = (l.u_dof(0, a).unwrap(), l.u_dof(0, b).unwrap());
                assert_relative_eq!(sys.b.get(i, j), expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn total_solid_mass() {
        let m = free_square(Subdomain::Solid);
        let mut mat = unit_material(1.0, 0.3);
        mat.solid_density = 7.0;
        for family in [Family::Mini, Family::TaylorHood] {
            let sys = assemble_system(&m, family, &mat).unwrap();
            let nodes = nodal_points(&m, &sys.spaces.as_ref().unwrap().displacement);
            let mut x = vec![0.0; sys.layout.total()];
            for (a, p) in nodes.iter().enumerate() {
                if p.is_some() {
                    x[sys.layout.u_dof(0, a).unwrap()] = 1.0;
                }
            }
            assert_relative_eq!(sys.b.bilinear(&x, &x), 7.0, max_relative = 1e-13);
        }
    }

    #[test]
    fn pressure_block_of_mass_is_zero() {
        let m = build_cavity_mesh(&GeometrySpec::omega1(), 2).unwrap();
        let sys = assemble_system(&m, Family::TaylorHood, &MaterialField::steel_water()).unwrap();
        let p0 = sys.layout.p_offset();
        for (r, c, v) in sys.b.triplets() {
            assert!(r < p0 && c < p0 || v == 0.0);
        }
        let fluid = &sys.spaces.as_ref().unwrap().fluid;
        let w = bdm_interpolate(&m, fluid, |_| [1.0, 0.0]);
        let mut x = vec![0.0; sys.layout.total()];
        x[sys.layout.w_offset()..sys.layout.p_offset()].copy_from_slice(&w);
        let fluid_area = m.subdomain_area(Subdomain::Fluid);
        assert_relative_eq!(sys.b.bilinear(&x, &x), 1000.0 * fluid_area, max_relative = 1e-12);
    }

    #[test]
    fn exact_symmetry_and_incompressible_limit() {
        let m = build_cavity_mesh(&GeometrySpec::omega2(), 2).unwrap();
        for family in [Family::Mini, Family::TaylorHood] {
            let sys = assemble_system(&m, family, &MaterialField::steel_water().with_poisson(0.5)).unwrap();
            assert_eq!(sys.a.max_asymmetry(), 0.0);
            assert_eq!(sys.b.max_asymmetry(), 0.0);
            let p0 = sys.layout.p_offset();
            for (r, c, v) in sys.a.triplets() {
                if r >= p0 && c >= p0 {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn constant_fields_satisfy_constraint() {
        let m = build_cavity_mesh(&GeometrySpec::omega1(), 2).unwrap();
        for family in [Family::Mini, Family::TaylorHood] {
            let sys = assemble_system(&m, family, &MaterialField::steel_water()).unwrap();
            assert_eq!(sys.c.nrows(), 2 * m.edges_tagged(EdgeTag::Interface).count());
            let spaces = sys.spaces.as_ref().unwrap();
            let nodes = nodal_points(&m, &spaces.displacement);
            let l = &sys.layout;
            let mut x = vec![0.0; l.total()];
            for (a, p) in nodes.iter().enumerate() {
                if let (Some(_), Some(i)) = (p, l.u_dof(0, a)) {
                    x[i] = 1.0;
                }
            }
            let w = bdm_interpolate(&m, &spaces.fluid, |_| [1.0, 0.0]);
            x[l.w_offset()..l.p_offset()].copy_from_slice(&w);
            for (k, v) in x[l.p_offset()..].iter_mut().enumerate() {
                *v = (k as f64).sin();
            }
            let cx = sys.c.mul_vec(&x);
            assert!(cx.iter().all(|v| v.abs() < 1e-12), "{family}");
            // rows touch only dofs attached to their interface edge
            for (r, col, _) in sys.c.triplets() {
                let e = sys.interface_edges[r / 2];
                let [va, vb] = m.edges()[e].vertices;
                let attached = |loc: crate::fe::DofLocation| match loc {
                    crate::fe::DofLocation::Vertex(v) => v == va || v == vb,
                    crate::fe::DofLocation::Edge(x) => x == e,
                    crate::fe::DofLocation::Cell(_) => false,
                };
                let ok = if col >= l.w_offset() {
                    attached(spaces.fluid.location(col - l.w_offset()))
                } else {
                    (0..l.n_scalar_displacement())
                        .any(|a| (l.u_dof(0, a) == Some(col) || l.u_dof(1, a) == Some(col)) && attached(spaces.displacement.location(a)))
                };
                assert!(ok, "row {r} touches column {col}");
            }
        }
    }

    #[test]
    fn quadratic_trace_residual() {
        // solid below, fluid above a unit interface edge on y = 0
        let m = Mesh::from_raw(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]],
            &[([0, 2, 1], Subdomain::Solid), ([0, 1, 3], Subdomain::Fluid)],
            |_, _| None,
        )
        .unwrap();
        let sys = assemble_system(&m, Family::TaylorHood, &unit_material(1.0, 0.3)).unwrap();
        let spaces = sys.spaces.as_ref().unwrap();
        let l = &sys.layout;
        let e = sys.interface_edges[0];
        // u_y = x(1 − x) on the edge: zero at the vertices, 1/4 at the midpoint
        let mut x = vec![0.0; l.total()];
        let mid = spaces.displacement.locations().iter().position(|&d| d == crate::fe::DofLocation::Edge(e)).unwrap();
        x[l.u_dof(1, mid).unwrap()] = 0.25;
        // solve C x = 0 for the two interface moments, other fluid dofs arbitrary
        for (k, v) in x[l.w_offset()..l.p_offset()].iter_mut().enumerate() {
            *v = 0.1 * k as f64;
        }
        let r = sys.c.mul_vec(&x);
        let fl = spaces.fluid.dofs(1);
        let le = m.local_edge_index(1, e).unwrap();
        for k in 0..2 {
            x[l.w_dof(fl[2 * le + k])] += r[k];
        }
        assert!(sys.c.mul_vec(&x).iter().all(|v| v.abs() < 1e-14));
        let w = l.fluid_part(&x).to_vec();
        let n = m.edge_normal(e);
        let (sx, sw) = segment_rule(10);
        let mut err2 = 0.0;
        for (&s, &wq) in sx.iter().zip(&sw) {
            let p = [s, 0.0];
            let (v, _, _) = eval_bdm(&m, &spaces.fluid, &w, 1, m.barycentric(1, p));
            let tn = v[0] * n[0] + v[1] * n[1];
            let un = s * (1.0 - s) * n[1];
            err2 += wq * (un - tn).powi(2);
        }
        assert_relative_eq!(err2.sqrt(), 1.0 / 180f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn density_scaling() {
        let m = build_cavity_mesh(&GeometrySpec::omega1(), 1).unwrap();
        let base = MaterialField::steel_water();
        let mut scaled = base.clone();
        scaled.solid_density *= 3.0;
        scaled.fluid_density *= 3.0;
        let s0 = assemble_system(&m, Family::Mini, &base).unwrap();
        let s1 = assemble_system(&m, Family::Mini, &scaled).unwrap();
        let scale = s0.b.max_abs();
        for ((_, _, a), (_, _, b)) in s0.b.triplets().zip(s1.b.triplets()) {
            assert!((3.0 * a - b).abs() <= 1e-14 * scale);
        }
    }

    /// Smallest nonzero generalized singular value of the divergence block,
    /// `min (D A⁻¹ Dᵀ q, q) / (M q, q)` over pressures orthogonal to constants.
    fn inf_sup(mesh: &Mesh, family: Family) -> f64 {
        use faer::linalg::solvers::DenseSolveCore;
        use faer::{Mat, Side};
        let sys = assemble_system(mesh, family, &unit_material(1.25, 0.25)).unwrap();
        let l = &sys.layout;
        let dense = sys.a.to_dense();
        let n = l.total();
        let (nu, np, p0) = (l.n_u, l.n_p, l.p_offset());
        let a = Mat::<f64>::from_fn(nu, nu, |i, j| dense[i * n + j]);
        let d = Mat::<f64>::from_fn(np, nu, |i, j| dense[(p0 + i) * n + j]);
        // λ⁻¹ = 2 for E = 1.25, ν = 1/4
        let m = Mat::<f64>::from_fn(np, np, |i, j| -dense[(p0 + i) * n + p0 + j] / 2.0);
        let s = &d * a.partial_piv_lu().inverse() * d.transpose();
        let em = m.self_adjoint_eigen(Side::Lower).unwrap();
        let half = Mat::<f64>::from_fn(np, np, |i, j| if i == j { 1.0 / em.S()[i].sqrt() } else { 0.0 });
        let mh = em.U() * &half * em.U().transpose();
        let g = &mh * &s * &mh;
        let g = Mat::<f64>::from_fn(np, np, |i, j| 0.5 * (g[(i, j)] + g[(j, i)]));
        let ev = g.self_adjoint_eigenvalues(Side::Lower).unwrap();
        // ev[0] is the constant pressure of the fully clamped square
        assert!(ev[0].abs() < 1e-10 * ev[np - 1]);
        ev[1].sqrt()
    }

    #[test]
    fn inf_sup_does_not_degenerate() {
        for family in [Family::Mini, Family::TaylorHood] {
            let betas: Vec<f64> =
                [2, 4, 8].iter().map(|&n| inf_sup(&build_cavity_mesh(&GeometrySpec::unit_square_solid(), n).unwrap(), family)).collect();
            assert!(betas.iter().all(|&b| b > 0.5 * betas[0] && b > 0.05), "{family}: {betas:?}");
        }
    }
}
