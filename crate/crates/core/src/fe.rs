//! Reference bases, affine element maps and degree-of-freedom numbering.
//!
//! Reference coordinates are `(x, y) = (λ1, λ2)` on the triangle
//! `(0,0), (1,0), (0,1)`. Local edge `i` is opposite local vertex `i` and runs
//! from vertex `i+1` to vertex `i+2`.
//!
//! BDM1 dofs are normal moments against the orthonormal Legendre pair
//! `ζ0 = 1/√|E|`, `ζ1 = √3 (2s − 1)/√|E|` on each edge. Physical basis
//! functions are the contravariant Piola images `J φ̂ / det J`, rescaled by
//! `√(|E|/|ê|)` so that the physical moment matrix is the identity, then
//! multiplied by the sign stored in the [`DofMap`] to agree with the global
//! edge orientation.

use std::sync::OnceLock;

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use thiserror::Error;

use crate::mesh::{Mesh, Subdomain};
use crate::quadrature::segment_rule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeError {
    #[error("point {0:?} lies outside the reference triangle")]
    PointOutside([f64; 3]),
    #[error("{0:?} is not a vector element")]
    NotVector(ElementKind),
    #[error("{0:?} is not a scalar element")]
    NotScalar(ElementKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    P1,
    P2,
    /// P1 plus the cubic bubble `27 λ0 λ1 λ2`.
    P1Bubble,
    DG0,
    DG1,
    BDM1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueRank {
    Scalar,
    Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conformity {
    C0,
    HDiv,
    L2,
}

impl ElementKind {
    pub fn value_rank(self) -> ValueRank {
        match self {
            ElementKind::BDM1 => ValueRank::Vector,
            _ => ValueRank::Scalar,
        }
    }

    pub fn conformity(self) -> Conformity {
        match self {
            ElementKind::P1 | ElementKind::P2 | ElementKind::P1Bubble => Conformity::C0,
            ElementKind::BDM1 => Conformity::HDiv,
            ElementKind::DG0 | ElementKind::DG1 => Conformity::L2,
        }
    }

    pub fn n_local(self) -> usize {
        match self {
            ElementKind::DG0 => 1,
            ElementKind::P1 | ElementKind::DG1 => 3,
            ElementKind::P1Bubble => 4,
            ElementKind::P2 | ElementKind::BDM1 => 6,
        }
    }

    /// Polynomial degree of the highest basis function.
    pub fn degree(self) -> usize {
        match self {
            ElementKind::DG0 => 0,
            ElementKind::P1 | ElementKind::DG1 | ElementKind::BDM1 => 1,
            ElementKind::P2 => 2,
            ElementKind::P1Bubble => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarBasis {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
    /// Symmetric Hessians `[[∂xx, ∂xy], [∂xy, ∂yy]]`.
    pub hessians: Vec<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorBasis {
    pub values: Vec<[f64; 2]>,
    /// `grads[r][i][j] = ∂_j φ_r,i`.
    pub grads: Vec<[[f64; 2]; 2]>,
    pub divs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceBasis {
    Scalar(ScalarBasis),
    Vector(VectorBasis),
}

const DLAMBDA: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

fn outer_sym(a: [f64; 2], b: [f64; 2]) -> [[f64; 2]; 2] {
    [[2.0 * a[0] * b[0], a[0] * b[1] + a[1] * b[0]], [a[0] * b[1] + a[1] * b[0], 2.0 * a[1] * b[1]]]
}

fn scale2(m: [[f64; 2]; 2], s: f64) -> [[f64; 2]; 2] {
    [[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]]
}

fn add2(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]]
}

fn check_point(l: [f64; 3]) -> Result<(), FeError> {
    let tol = 1e-12;
    if l.iter().any(|&x| x < -tol) || (l[0] + l[1] + l[2] - 1.0).abs() > tol {
        return Err(FeError::PointOutside(l));
    }
    Ok(())
}

/// `λi λj` with gradient and Hessian.
fn pair(l: [f64; 3], i: usize, j: usize) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let (di, dj) = (DLAMBDA[i], DLAMBDA[j]);
    let g = [l[i] * dj[0] + l[j] * di[0], l[i] * dj[1] + l[j] * di[1]];
    (l[i] * l[j], g, outer_sym(di, dj))
}

fn bubble(l: [f64; 3]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let d = DLAMBDA;
    let g = [
        27.0 * (l[1] * l[2] * d[0][0] + l[0] * l[2] * d[1][0] + l[0] * l[1] * d[2][0]),
        27.0 * (l[1] * l[2] * d[0][1] + l[0] * l[2] * d[1][1] + l[0] * l[1] * d[2][1]),
    ];
    let h = add2(
        add2(scale2(outer_sym(d[0], d[1]), l[2]), scale2(outer_sym(d[0], d[2]), l[1])),
        scale2(outer_sym(d[1], d[2]), l[0]),
    );
    (27.0 * l[0] * l[1] * l[2], g, scale2(h, 27.0))
}

fn scalar_reference(kind: ElementKind, l: [f64; 3]) -> ScalarBasis {
    let zero = [[0.0; 2]; 2];
    let mut b = ScalarBasis { values: Vec::new(), grads: Vec::new(), hessians: Vec::new() };
    let mut push = |v: f64, g: [f64; 2], h: [[f64; 2]; 2]| {
        b.values.push(v);
        b.grads.push(g);
        b.hessians.push(h);
    };
    match kind {
        ElementKind::DG0 => push(1.0, [0.0; 2], zero),
        ElementKind::P1 | ElementKind::DG1 => (0..3).for_each(|i| push(l[i], DLAMBDA[i], zero)),
        ElementKind::P1Bubble => {
            (0..3).for_each(|i| push(l[i], DLAMBDA[i], zero));
            let (v, g, h) = bubble(l);
            push(v, g, h);
        }
        ElementKind::P2 => {
            for i in 0..3 {
                // λ(2λ − 1) = 2λ² − λ
                let (v, g, h) = pair(l, i, i);
                push(2.0 * v - l[i], [2.0 * g[0] - DLAMBDA[i][0], 2.0 * g[1] - DLAMBDA[i][1]], scale2(h, 2.0));
            }
            for i in 0..3 {
                let (v, g, h) = pair(l, (i + 1) % 3, (i + 2) % 3);
                push(4.0 * v, [4.0 * g[0], 4.0 * g[1]], scale2(h, 4.0));
            }
        }
        ElementKind::BDM1 => unreachable!("vector element"),
    }
    b
}

/// Reference BDM1 edges: start, end, outward unit normal, length.
fn reference_edges() -> [([f64; 2], [f64; 2], [f64; 2], f64); 3] {
    let v: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    std::array::from_fn(|i| {
        let a = v[(i + 1) % 3];
        let b = v[(i + 2) % 3];
        let t = [b[0] - a[0], b[1] - a[1]];
        let len = t[0].hypot(t[1]);
        (a, b, [t[1] / len, -t[0] / len], len)
    })
}

/// Orthonormal edge polynomial `k` at edge parameter `s ∈ [0, 1]`, times `√|E|`.
pub fn edge_moment_weight(k: usize, s: f64) -> f64 {
    match k {
        0 => 1.0,
        _ => 3f64.sqrt() * (2.0 * s - 1.0),
    }
}

/// Coefficients of the reference BDM1 basis in the monomials
/// `(1,0), (x,0), (y,0), (0,1), (0,x), (0,y)`; column `r` is basis function `r`.
fn bdm_coefficients() -> &'static [[f64; 6]; 6] {
    static COEFFS: OnceLock<[[f64; 6]; 6]> = OnceLock::new();
    COEFFS.get_or_init(|| {
        let monomial = |j: usize, p: [f64; 2]| -> [f64; 2] {
            let m = [1.0, p[0], p[1]];
            if j < 3 {
                [m[j], 0.0]
            } else {
                [0.0, m[j - 3]]
            }
        };
        let (sx, sw) = segment_rule(4);
        let edges = reference_edges();
        let dof = Mat::<f64>::from_fn(6, 6, |r, j| {
            let (a, b, n, len) = edges[r / 2];
            let k = r % 2;
            sx.iter()
                .zip(&sw)
                .map(|(&s, &w)| {
                    let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                    let m = monomial(j, p);
                    w * len * (m[0] * n[0] + m[1] * n[1]) * edge_moment_weight(k, s) / len.sqrt()
                })
                .sum()
        });
        let inv = dof.partial_piv_lu().inverse();
        let mut out = [[0.0; 6]; 6];
        for (j, row) in out.iter_mut().enumerate() {
            for (r, c) in row.iter_mut().enumerate() {
                *c = inv[(j, r)];
            }
        }
        out
    })
}

fn bdm_reference(l: [f64; 3]) -> VectorBasis {
    let a = bdm_coefficients();
    let (x, y) = (l[1], l[2]);
    let mut b = VectorBasis { values: Vec::with_capacity(6), grads: Vec::with_capacity(6), divs: Vec::with_capacity(6) };
    for r in 0..6 {
        let c = |j: usize| a[j][r];
        b.values.push([c(0) + c(1) * x + c(2) * y, c(3) + c(4) * x + c(5) * y]);
        b.grads.push([[c(1), c(2)], [c(4), c(5)]]);
        b.divs.push(c(1) + c(5));
    }
    b
}

/// Basis values and reference derivatives at a barycentric point.
pub fn reference_basis(kind: ElementKind, point: [f64; 3]) -> Result<ReferenceBasis, FeError> {
    check_point(point)?;
    Ok(match kind {
        ElementKind::BDM1 => ReferenceBasis::Vector(bdm_reference(point)),
        _ => ReferenceBasis::Scalar(scalar_reference(kind, point)),
    })
}

/// Affine map from the reference triangle onto a physical triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementMap {
    pub coords: [[f64; 2]; 3],
    /// Columns are `p1 − p0` and `p2 − p0`.
    pub jac: [[f64; 2]; 2],
    pub jinv: [[f64; 2]; 2],
    pub det: f64,
}

impl ElementMap {
    pub fn new(coords: [[f64; 2]; 3]) -> Self {
        let [p0, p1, p2] = coords;
        let jac = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let jinv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        ElementMap { coords, jac, jinv, det }
    }

    pub fn of(mesh: &Mesh, t: usize) -> Self {
        Self::new(mesh.triangle_coords(t))
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det.abs()
    }

    pub fn to_physical(&self, l: [f64; 3]) -> [f64; 2] {
        let c = self.coords;
        [
            l[0] * c[0][0] + l[1] * c[1][0] + l[2] * c[2][0],
            l[0] * c[0][1] + l[1] * c[1][1] + l[2] * c[2][1],
        ]
    }

    /// `J⁻ᵀ ĝ`.
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        let k = self.jinv;
        [k[0][0] * g[0] + k[1][0] * g[1], k[0][1] * g[0] + k[1][1] * g[1]]
    }

    /// `J⁻ᵀ Ĥ J⁻¹`.
    pub fn hessian(&self, h: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let k = self.jinv;
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, o) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        s += k[a][i] * h[a][b] * k[b][j];
                    }
                }
                *o = s;
            }
        }
        out
    }

    pub fn edge_length(&self, i: usize) -> f64 {
        let a = self.coords[(i + 1) % 3];
        let b = self.coords[(i + 2) % 3];
        (b[0] - a[0]).hypot(b[1] - a[1])
    }

    /// Physical scalar basis at a reference point.
    pub fn scalar_basis(&self, kind: ElementKind, l: [f64; 3]) -> ScalarBasis {
        let mut b = scalar_reference(kind, l);
        for g in &mut b.grads {
            *g = self.grad(*g);
        }
        for h in &mut b.hessians {
            *h = self.hessian(*h);
        }
        b
    }

    /// Physical BDM1 basis (before the global orientation signs).
    pub fn bdm_basis(&self, l: [f64; 3]) -> VectorBasis {
        let mut b = bdm_reference(l);
        let j = self.jac;
        let ref_len = [2f64.sqrt(), 1.0, 1.0];
        for r in 0..6 {
            let s = (self.edge_length(r / 2) / ref_len[r / 2]).sqrt() / self.det;
            let v = b.values[r];
            b.values[r] = [s * (j[0][0] * v[0] + j[0][1] * v[1]), s * (j[1][0] * v[0] + j[1][1] * v[1])];
            // J Ĝ J⁻¹
            let g = b.grads[r];
            let mut jg = [[0.0; 2]; 2];
            for (p, row) in jg.iter_mut().enumerate() {
                for (q, o) in row.iter_mut().enumerate() {
                    *o = j[p][0] * g[0][q] + j[p][1] * g[1][q];
                }
            }
            let k = self.jinv;
            for p in 0..2 {
                b.grads[r][p] = [s * (jg[p][0] * k[0][0] + jg[p][1] * k[1][0]), s * (jg[p][0] * k[0][1] + jg[p][1] * k[1][1])];
            }
            b.divs[r] *= s;
        }
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofLocation {
    Vertex(usize),
    Edge(usize),
    Cell(usize),
}

/// Local-to-global numbering of a scalar space (or BDM1) on one subdomain.
///
/// Global numbering is vertex dofs by ascending vertex id, then edge dofs by
/// ascending edge id, then cell dofs by ascending triangle id.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub kind: ElementKind,
    pub subdomain: Subdomain,
    cells: Vec<usize>,
    cell_slot: Vec<Option<usize>>,
    local_to_global: Vec<usize>,
    signs: Vec<f64>,
    locations: Vec<DofLocation>,
}

impl DofMap {
    pub fn n_dofs(&self) -> usize {
        self.locations.len()
    }

    pub fn n_local(&self) -> usize {
        self.kind.n_local()
    }

    /// Triangles covered by this map, ascending.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn covers(&self, t: usize) -> bool {
        self.cell_slot.get(t).is_some_and(Option::is_some)
    }

    pub fn dofs(&self, t: usize) -> &[usize] {
        let s = self.cell_slot[t].expect("triangle outside the subdomain of this dof map");
        let n = self.n_local();
        &self.local_to_global[s * n..(s + 1) * n]
    }

    /// Orientation signs of the local basis (all `1.0` except for BDM1).
    pub fn signs(&self, t: usize) -> &[f64] {
        let s = self.cell_slot[t].expect("triangle outside the subdomain of this dof map");
        let n = self.n_local();
        &self.signs[s * n..(s + 1) * n]
    }

    pub fn location(&self, dof: usize) -> DofLocation {
        self.locations[dof]
    }

    pub fn locations(&self) -> &[DofLocation] {
        &self.locations
    }
}

pub fn build_dofmap(mesh: &Mesh, kind: ElementKind, subdomain: Subdomain) -> DofMap {
    let cells: Vec<usize> = mesh.triangles_in(subdomain).collect();
    let mut cell_slot = vec![None; mesh.n_triangles()];
    for (s, &t) in cells.iter().enumerate() {
        cell_slot[t] = Some(s);
    }
    let mut locations = Vec::new();
    let mut vertex_dof = vec![usize::MAX; mesh.n_vertices()];
    let mut edge_dof = vec![usize::MAX; mesh.n_edges()];
    let mut cell_dof = vec![usize::MAX; mesh.n_triangles()];
    let (per_vertex, per_edge, per_cell) = match kind {
        ElementKind::P1 => (1, 0, 0),
        ElementKind::P2 => (1, 1, 0),
        ElementKind::P1Bubble => (1, 0, 1),
        ElementKind::DG0 => (0, 0, 1),
        ElementKind::DG1 => (0, 0, 3),
        ElementKind::BDM1 => (0, 2, 0),
    };
    if per_vertex > 0 {
        for v in mesh.subdomain_vertices(subdomain) {
            vertex_dof[v] = locations.len();
            locations.push(DofLocation::Vertex(v));
        }
    }
    if per_edge > 0 {
        for e in mesh.subdomain_edges(subdomain) {
            edge_dof[e] = locations.len();
            for _ in 0..per_edge {
                locations.push(DofLocation::Edge(e));
            }
        }
    }
    if per_cell > 0 {
        for &t in &cells {
            cell_dof[t] = locations.len();
            for _ in 0..per_cell {
                locations.push(DofLocation::Cell(t));
            }
        }
    }
    let n = kind.n_local();
    let mut local_to_global = Vec::with_capacity(cells.len() * n);
    let mut signs = Vec::with_capacity(cells.len() * n);
    for &t in &cells {
        let tri = mesh.triangles()[t];
        let te = mesh.triangle_edges(t);
        match kind {
            ElementKind::P1 => local_to_global.extend(tri.vertices.map(|v| vertex_dof[v])),
            ElementKind::P2 => {
                local_to_global.extend(tri.vertices.map(|v| vertex_dof[v]));
                local_to_global.extend(te.map(|e| edge_dof[e]));
            }
            ElementKind::P1Bubble => {
                local_to_global.extend(tri.vertices.map(|v| vertex_dof[v]));
                local_to_global.push(cell_dof[t]);
            }
            ElementKind::DG0 => local_to_global.push(cell_dof[t]),
            ElementKind::DG1 => local_to_global.extend((0..3).map(|k| cell_dof[t] + k)),
            ElementKind::BDM1 => {
                for (i, &e) in te.iter().enumerate() {
                    local_to_global.push(edge_dof[e]);
                    local_to_global.push(edge_dof[e] + 1);
                    let start = tri.vertices[(i + 1) % 3];
                    let reversed = start != mesh.edges()[e].vertices[0];
                    signs.extend(if reversed { [-1.0, 1.0] } else { [1.0, 1.0] });
                }
                continue;
            }
        }
        signs.extend(std::iter::repeat(1.0).take(n));
    }
    DofMap { kind, subdomain, cells, cell_slot, local_to_global, signs, locations }
}

/// BDM1 interpolant: the global edge moments `∫_E (f·n_E) ζ_k`.
pub fn bdm_interpolate(mesh: &Mesh, dofmap: &DofMap, field: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    assert_eq!(dofmap.kind, ElementKind::BDM1);
    let (sx, sw) = segment_rule(10);
    let mut out = vec![0.0; dofmap.n_dofs()];
    let mut dof = 0;
    while dof < dofmap.n_dofs() {
        let DofLocation::Edge(e) = dofmap.location(dof) else { unreachable!("BDM1 dofs live on edges") };
        let [a, b] = mesh.edges()[e].vertices;
        let (p, q) = (mesh.vertices()[a], mesh.vertices()[b]);
        let n = mesh.edge_normal(e);
        let len = mesh.edge_length(e);
        for k in 0..2 {
            out[dof + k] = sx
                .iter()
                .zip(&sw)
                .map(|(&s, &w)| {
                    let f = field([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
                    w * len * (f[0] * n[0] + f[1] * n[1]) * edge_moment_weight(k, s) / len.sqrt()
                })
                .sum();
        }
        dof += 2;
    }
    out
}

/// Value, gradient and divergence of a BDM1 field at a reference point of `t`.
pub fn eval_bdm(mesh: &Mesh, dofmap: &DofMap, coeffs: &[f64], t: usize, l: [f64; 3]) -> ([f64; 2], [[f64; 2]; 2], f64) {
    let basis = ElementMap::of(mesh, t).bdm_basis(l);
    let mut v = [0.0; 2];
    let mut g = [[0.0; 2]; 2];
    let mut d = 0.0;
    for (r, (&dof, &sg)) in dofmap.dofs(t).iter().zip(dofmap.signs(t)).enumerate() {
        let c = coeffs[dof] * sg;
        v[0] += c * basis.values[r][0];
        v[1] += c * basis.values[r][1];
        for i in 0..2 {
            for j in 0..2 {
                g[i][j] += c * basis.grads[r][i][j];
            }
        }
        d += c * basis.divs[r];
    }
    (v, g, d)
}

/// Barycentric coordinates of edge parameter `s` on local edge `i`.
pub fn edge_point(i: usize, s: f64) -> [f64; 3] {
    let mut l = [0.0; 3];
    l[(i + 1) % 3] = 1.0 - s;
    l[(i + 2) % 3] = s;
    l
}
