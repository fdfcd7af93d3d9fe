//! Conforming triangulations of the coupled solid/fluid domain.
//!
//! A [`Mesh`] is immutable once built. Triangles carry their subdomain and the
//! local index of their refinement edge (used by newest-vertex bisection);
//! edges carry a boundary/interface tag and their one or two neighbours.

mod geometry;
mod refine;
mod validate;

pub use geometry::{build_cavity_mesh, CavityDims, GeometryPreset, GeometrySpec, RectilinearLayout, Segment};
pub use refine::{bisect, bisect_with_parents, refine_uniform};
pub use validate::{validate, CheckResult, Invariant, ValidationReport};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("triangle {tri} references vertex {vertex} but the mesh has {count} vertices")]
    VertexOutOfRange { tri: usize, vertex: usize, count: usize },
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("triangle id {0} does not exist")]
    InvalidTriangle(usize),
    #[error("refinement level must be at least 1")]
    InvalidLevel,
    #[error("unknown tag `{0}`")]
    UnknownTag(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subdomain {
    Solid,
    Fluid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeTag {
    /// Clamped part of the solid boundary.
    GammaD,
    /// Traction-free part of the solid boundary.
    GammaN,
    /// Free surface of the fluid.
    Gamma0,
    /// Solid/fluid interface.
    Interface,
    Interior,
}

impl EdgeTag {
    pub fn is_boundary(self) -> bool {
        matches!(self, EdgeTag::GammaD | EdgeTag::GammaN | EdgeTag::Gamma0)
    }
}

impl fmt::Display for Subdomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subdomain::Solid => "Solid",
            Subdomain::Fluid => "Fluid",
        })
    }
}

impl FromStr for Subdomain {
    type Err = MeshError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Solid" | "solid" => Ok(Subdomain::Solid),
            "Fluid" | "fluid" => Ok(Subdomain::Fluid),
            other => Err(MeshError::UnknownTag(other.to_string())),
        }
    }
}

impl fmt::Display for EdgeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeTag::GammaD => "GammaD",
            EdgeTag::GammaN => "GammaN",
            EdgeTag::Gamma0 => "Gamma0",
            EdgeTag::Interface => "Interface",
            EdgeTag::Interior => "Interior",
        })
    }
}

impl FromStr for EdgeTag {
    type Err = MeshError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "GammaD" => Ok(EdgeTag::GammaD),
            "GammaN" => Ok(EdgeTag::GammaN),
            "Gamma0" => Ok(EdgeTag::Gamma0),
            "Interface" => Ok(EdgeTag::Interface),
            "Interior" => Ok(EdgeTag::Interior),
            other => Err(MeshError::UnknownTag(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub vertices: [usize; 3],
    pub subdomain: Subdomain,
    /// Local index `r` of the refinement edge, i.e. the edge opposite `vertices[r]`.
    pub refinement_edge: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Endpoints, sorted ascending. The global edge orientation runs from
    /// `vertices[0]` to `vertices[1]`.
    pub vertices: [usize; 2],
    pub tag: EdgeTag,
    pub triangles: [Option<usize>; 2],
}

impl Edge {
    pub fn neighbours(&self) -> impl Iterator<Item = usize> + '_ {
        self.triangles.iter().flatten().copied()
    }

    pub fn is_boundary(&self) -> bool {
        self.triangles[1].is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<Triangle>,
    edges: Vec<Edge>,
    /// Local edge `i` of a triangle is opposite its local vertex `i`.
    triangle_edges: Vec<[usize; 3]>,
}

impl Mesh {
    /// Builds a mesh from vertex coordinates and tagged triangles.
    ///
    /// Refinement edges are initialized to the longest edge of each triangle,
    /// ties broken by the smallest opposite-vertex index. Interior edges are
    /// tagged `Interface` or `Interior` from the subdomains of their two
    /// neighbours; boundary edges ask `boundary_tag` and fall back to
    /// `GammaN` (solid) or `Gamma0` (fluid). Orientation is not corrected.
    pub fn from_raw(
        vertices: Vec<[f64; 2]>,
        triangles: &[([usize; 3], Subdomain)],
        boundary_tag: impl FnMut([usize; 2], Subdomain) -> Option<EdgeTag>,
    ) -> Result<Mesh, MeshError> {
        let tris = triangles
            .iter()
            .map(|&(v, subdomain)| Triangle {
                vertices: v,
                subdomain,
                refinement_edge: longest_edge(&vertices, v),
            })
            .collect();
        Self::assemble(vertices, tris, boundary_tag)
    }

    pub(crate) fn assemble(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<Triangle>,
        mut boundary_tag: impl FnMut([usize; 2], Subdomain) -> Option<EdgeTag>,
    ) -> Result<Mesh, MeshError> {
        let nv = vertices.len();
        let mut lookup: HashMap<[usize; 2], usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut edges: Vec<Edge> = Vec::with_capacity(triangles.len() * 3 / 2 + 8);
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0usize; 3];
            for &v in &tri.vertices {
                if v >= nv {
                    return Err(MeshError::VertexOutOfRange { tri: t, vertex: v, count: nv });
                }
            }
            for (i, slot) in te.iter_mut().enumerate() {
                let a = tri.vertices[(i + 1) % 3];
                let b = tri.vertices[(i + 2) % 3];
                if a == b {
                    return Err(MeshError::DegenerateGeometry(format!("triangle {t} repeats vertex {a}")));
                }
                let key = [a.min(b), a.max(b)];
                let id = match lookup.get(&key) {
                    Some(&id) => {
                        let e = &mut edges[id];
                        if e.triangles[1].is_some() {
                            return Err(MeshError::NonManifoldEdge(key[0], key[1]));
                        }
                        e.triangles[1] = Some(t);
                        id
                    }
                    None => {
                        let id = edges.len();
                        edges.push(Edge { vertices: key, tag: EdgeTag::Interior, triangles: [Some(t), None] });
                        lookup.insert(key, id);
                        id
                    }
                };
                *slot = id;
            }
            triangle_edges.push(te);
        }
        for e in &mut edges {
            let t0 = e.triangles[0].expect("every edge has a first neighbour");
            let s0 = triangles[t0].subdomain;
            e.tag = match e.triangles[1] {
                Some(t1) if triangles[t1].subdomain != s0 => EdgeTag::Interface,
                Some(_) => EdgeTag::Interior,
                None => boundary_tag(e.vertices, s0).unwrap_or(match s0 {
                    Subdomain::Solid => EdgeTag::GammaN,
                    Subdomain::Fluid => EdgeTag::Gamma0,
                }),
            };
        }
        Ok(Mesh { vertices, triangles, edges, triangle_edges })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let v = self.triangles[t].vertices;
        [self.vertices[v[0]], self.vertices[v[1]], self.vertices[v[2]]]
    }

    /// Signed area; positive for counter-clockwise vertex order.
    pub fn signed_area(&self, t: usize) -> f64 {
        signed_area(self.triangle_coords(t))
    }

    pub fn area(&self, t: usize) -> f64 {
        self.signed_area(t).abs()
    }

    /// `h_T`, the longest edge of the triangle.
    pub fn diameter(&self, t: usize) -> f64 {
        self.triangle_edges[t].iter().map(|&e| self.edge_length(e)).fold(0.0, f64::max)
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].vertices;
        dist(self.vertices[a], self.vertices[b])
    }

    pub fn edge_midpoint(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e].vertices;
        let (p, q) = (self.vertices[a], self.vertices[b]);
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }

    /// Unit normal of the global edge orientation: the tangent from
    /// `vertices[0]` to `vertices[1]` rotated clockwise.
    pub fn edge_normal(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e].vertices;
        let (p, q) = (self.vertices[a], self.vertices[b]);
        let (tx, ty) = (q[0] - p[0], q[1] - p[1]);
        let l = tx.hypot(ty);
        [ty / l, -tx / l]
    }

    /// Unit normal of edge `e` pointing out of triangle `t`.
    pub fn outward_normal(&self, t: usize, e: usize) -> [f64; 2] {
        let n = self.edge_normal(e);
        let c = self.centroid(t);
        let m = self.edge_midpoint(e);
        if (m[0] - c[0]) * n[0] + (m[1] - c[1]) * n[1] >= 0.0 {
            n
        } else {
            [-n[0], -n[1]]
        }
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let c = self.triangle_coords(t);
        [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0]
    }

    /// Local index of global edge `e` inside triangle `t`.
    pub fn local_edge_index(&self, t: usize, e: usize) -> Option<usize> {
        self.triangle_edges[t].iter().position(|&x| x == e)
    }

    pub fn triangles_in(&self, s: Subdomain) -> impl Iterator<Item = usize> + '_ {
        (0..self.triangles.len()).filter(move |&t| self.triangles[t].subdomain == s)
    }

    pub fn count_subdomain(&self, s: Subdomain) -> usize {
        self.triangles_in(s).count()
    }

    pub fn subdomain_area(&self, s: Subdomain) -> f64 {
        self.triangles_in(s).map(|t| self.area(t)).sum()
    }

    /// Vertices touched by at least one triangle of `s`, ascending.
    pub fn subdomain_vertices(&self, s: Subdomain) -> Vec<usize> {
        let mut seen = vec![false; self.vertices.len()];
        for t in self.triangles_in(s) {
            for &v in &self.triangles[t].vertices {
                seen[v] = true;
            }
        }
        (0..self.vertices.len()).filter(|&v| seen[v]).collect()
    }

    /// Edges touched by at least one triangle of `s`, ascending.
    pub fn subdomain_edges(&self, s: Subdomain) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&e| self.edges[e].neighbours().any(|t| self.triangles[t].subdomain == s))
            .collect()
    }

    pub fn edges_tagged(&self, tag: EdgeTag) -> impl Iterator<Item = usize> + '_ {
        (0..self.edges.len()).filter(move |&e| self.edges[e].tag == tag)
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.diameter(t)).fold(0.0, f64::max)
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    pub fn diameter_of_domain(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        dist(lo, hi)
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.triangle_coords(t);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Points where the solution is expected to be singular: clamped/free
    /// transitions on the solid boundary and re-entrant corners of either
    /// subdomain.
    pub fn singular_points(&self) -> Vec<[f64; 2]> {
        let nv = self.vertices.len();
        let mut has_d = vec![false; nv];
        let mut has_n = vec![false; nv];
        for e in &self.edges {
            for &v in &e.vertices {
                match e.tag {
                    EdgeTag::GammaD => has_d[v] = true,
                    EdgeTag::GammaN | EdgeTag::Interface => has_n[v] = true,
                    _ => {}
                }
            }
        }
        let mut out: Vec<usize> = (0..nv).filter(|&v| has_d[v] && has_n[v]).collect();
        for s in [Subdomain::Solid, Subdomain::Fluid] {
            let angles = self.vertex_angle_sums(s);
            let pi = std::f64::consts::PI;
            for (v, &a) in angles.iter().enumerate() {
                if a > pi + 1e-8 && a < 2.0 * pi - 1e-8 {
                    out.push(v);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out.into_iter().map(|v| self.vertices[v]).collect()
    }

    /// Sum of interior angles of the triangles of `s` meeting at each vertex.
    pub fn vertex_angle_sums(&self, s: Subdomain) -> Vec<f64> {
        let mut sums = vec![0.0; self.vertices.len()];
        for t in self.triangles_in(s) {
            let c = self.triangle_coords(t);
            let v = self.triangles[t].vertices;
            for i in 0..3 {
                let p = c[i];
                let q = c[(i + 1) % 3];
                let r = c[(i + 2) % 3];
                let u = [q[0] - p[0], q[1] - p[1]];
                let w = [r[0] - p[0], r[1] - p[1]];
                let ang = (u[0] * w[1] - u[1] * w[0]).abs().atan2(u[0] * w[0] + u[1] * w[1]);
                sums[v[i]] += ang;
            }
        }
        sums
    }
}

pub(crate) fn signed_area(c: [[f64; 2]; 3]) -> f64 {
    0.5 * ((c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1]))
}

pub(crate) fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    (q[0] - p[0]).hypot(q[1] - p[1])
}

/// Longest edge, ties broken by the smallest opposite-vertex index.
fn longest_edge(vertices: &[[f64; 2]], v: [usize; 3]) -> u8 {
    let mut best = 0usize;
    let mut best_len = 0.0;
    for i in 0..3 {
        let (a, b) = (v[(i + 1) % 3], v[(i + 2) % 3]);
        if a >= vertices.len() || b >= vertices.len() {
            return 0;
        }
        let len = dist(vertices[a], vertices[b]);
        if i == 0 {
            best_len = len;
            continue;
        }
        let tol = 1e-12 * len.max(best_len);
        if len > best_len + tol || ((len - best_len).abs() <= tol && v[i] < v[best]) {
            best = i;
            best_len = len;
        }
    }
    best as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_square() -> Mesh {
        Mesh::from_raw(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            &[([0, 1, 2], Subdomain::Solid), ([0, 2, 3], Subdomain::Solid)],
            |_, _| None,
        )
        .unwrap()
    }

    #[test]
    fn square_topology() {
        let m = unit_square();
        assert_eq!(m.n_edges(), 5);
        assert_eq!(m.edges().iter().filter(|e| e.is_boundary()).count(), 4);
        assert!(m.edges().iter().filter(|e| e.is_boundary()).all(|e| e.tag == EdgeTag::GammaN));
        // the diagonal is the refinement edge of both triangles
        for t in 0..2 {
            let r = m.triangles()[t].refinement_edge as usize;
            let e = m.triangle_edges(t)[r];
            assert_eq!(m.edges()[e].vertices, [0, 2]);
        }
        assert!((m.subdomain_area(Subdomain::Solid) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normals_point_outward() {
        let m = unit_square();
        for t in 0..m.n_triangles() {
            let c = m.centroid(t);
            for e in m.triangle_edges(t) {
                let n = m.outward_normal(t, e);
                let mid = m.edge_midpoint(e);
                assert!((mid[0] - c[0]) * n[0] + (mid[1] - c[1]) * n[1] > 0.0);
            }
        }
    }

    #[test]
    fn out_of_range_vertex_rejected() {
        let r = Mesh::from_raw(vec![[0.0, 0.0], [1.0, 0.0]], &[([0, 1, 2], Subdomain::Solid)], |_, _| None);
        assert!(matches!(r, Err(MeshError::VertexOutOfRange { .. })));
    }

    #[test]
    fn tags_roundtrip_through_strings() {
        for tag in [EdgeTag::GammaD, EdgeTag::GammaN, EdgeTag::Gamma0, EdgeTag::Interface, EdgeTag::Interior] {
            assert_eq!(tag.to_string().parse::<EdgeTag>().unwrap(), tag);
        }
        assert!("Wall".parse::<EdgeTag>().is_err());
    }
}
