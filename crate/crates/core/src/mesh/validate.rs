use std::collections::HashMap;
use std::fmt;

use super::{EdgeTag, Mesh, Subdomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Invariant {
    Orientation,
    EdgeAdjacency,
    InterfaceConformity,
    TagConsistency,
    NoHangingVertices,
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Invariant::Orientation => "orientation",
            Invariant::EdgeAdjacency => "edge adjacency",
            Invariant::InterfaceConformity => "interface conformity",
            Invariant::TagConsistency => "tag/subdomain consistency",
            Invariant::NoHangingVertices => "no hanging vertices",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub invariant: Invariant,
    /// Human-readable description of each violation (empty on success).
    pub failures: Vec<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = Invariant> + '_ {
        self.checks.iter().filter(|c| !c.passed()).map(|c| c.invariant)
    }

    pub fn check(&self, inv: Invariant) -> &CheckResult {
        self.checks.iter().find(|c| c.invariant == inv).expect("every invariant is checked")
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            if c.passed() {
                writeln!(f, "pass: {}", c.invariant)?;
            } else {
                writeln!(f, "fail: {} ({} violations)", c.invariant, c.failures.len())?;
                for msg in c.failures.iter().take(5) {
                    writeln!(f, "  {msg}")?;
                }
            }
        }
        Ok(())
    }
}

pub fn validate(mesh: &Mesh) -> ValidationReport {
    let checks = vec![
        orientation(mesh),
        adjacency(mesh),
        interface_conformity(mesh),
        tag_consistency(mesh),
        hanging_vertices(mesh),
    ];
    ValidationReport { checks }
}

fn orientation(mesh: &Mesh) -> CheckResult {
    let failures = (0..mesh.n_triangles())
        .filter_map(|t| {
            let a = mesh.signed_area(t);
            (a <= 0.0).then(|| format!("triangle {t} has signed area {a:e}"))
        })
        .collect();
    CheckResult { invariant: Invariant::Orientation, failures }
}

fn adjacency(mesh: &Mesh) -> CheckResult {
    let mut failures = Vec::new();
    for (e, edge) in mesh.edges().iter().enumerate() {
        let n = edge.neighbours().count();
        let expected = if edge.tag.is_boundary() { 1 } else { 2 };
        if n != expected {
            failures.push(format!("{} edge {e} has {n} neighbours", edge.tag));
        }
    }
    CheckResult { invariant: Invariant::EdgeAdjacency, failures }
}

fn interface_conformity(mesh: &Mesh) -> CheckResult {
    let mut failures = Vec::new();
    let tris = mesh.triangles();
    for (e, edge) in mesh.edges().iter().enumerate() {
        let subs: Vec<Subdomain> = edge.neighbours().map(|t| tris[t].subdomain).collect();
        let mixed = subs.len() == 2 && subs[0] != subs[1];
        if edge.tag == EdgeTag::Interface && !mixed {
            failures.push(format!("interface edge {e} does not separate solid from fluid"));
        }
        if mixed && edge.tag != EdgeTag::Interface {
            failures.push(format!("edge {e} separates solid from fluid but is tagged {}", edge.tag));
        }
    }
    CheckResult { invariant: Invariant::InterfaceConformity, failures }
}

fn tag_consistency(mesh: &Mesh) -> CheckResult {
    let mut failures = Vec::new();
    let tris = mesh.triangles();
    for (e, edge) in mesh.edges().iter().enumerate() {
        let allowed = match edge.tag {
            EdgeTag::GammaD | EdgeTag::GammaN => Some(Subdomain::Solid),
            EdgeTag::Gamma0 => Some(Subdomain::Fluid),
            _ => None,
        };
        if let Some(s) = allowed {
            for t in edge.neighbours() {
                if tris[t].subdomain != s {
                    failures.push(format!("{} edge {e} borders {} triangle {t}", edge.tag, tris[t].subdomain));
                }
            }
        }
        if edge.tag == EdgeTag::Interior {
            let subs: Vec<Subdomain> = edge.neighbours().map(|t| tris[t].subdomain).collect();
            if subs.windows(2).any(|w| w[0] != w[1]) {
                failures.push(format!("interior edge {e} separates different subdomains"));
            }
        }
    }
    CheckResult { invariant: Invariant::TagConsistency, failures }
}

/// A hanging vertex shows up as a vertex in the relative interior of an edge
/// that has only one neighbour.
fn hanging_vertices(mesh: &Mesh) -> CheckResult {
    let mut failures = Vec::new();
    let verts = mesh.vertices();
    if verts.is_empty() || mesh.n_triangles() == 0 {
        return CheckResult { invariant: Invariant::NoHangingVertices, failures };
    }
    let (lo, hi) = mesh.bounding_box();
    let cell = (mesh.max_diameter()).max(1e-300);
    let key = |p: [f64; 2]| (((p[0] - lo[0]) / cell).floor() as i64, ((p[1] - lo[1]) / cell).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (v, &p) in verts.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(v);
    }
    let scale = (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
    for (e, edge) in mesh.edges().iter().enumerate() {
        if !edge.is_boundary() {
            continue;
        }
        let [a, b] = edge.vertices;
        let (p, q) = (verts[a], verts[b]);
        let (ka, kb) = (key(p), key(q));
        let d = [q[0] - p[0], q[1] - p[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        for i in ka.0.min(kb.0)..=ka.0.max(kb.0) {
            for j in ka.1.min(kb.1)..=ka.1.max(kb.1) {
                for &v in buckets.get(&(i, j)).map(Vec::as_slice).unwrap_or(&[]) {
                    if v == a || v == b {
                        continue;
                    }
                    let r = [verts[v][0] - p[0], verts[v][1] - p[1]];
                    let s = (r[0] * d[0] + r[1] * d[1]) / len2;
                    let off = (r[0] * d[1] - r[1] * d[0]).abs() / len2.sqrt();
                    if s > 1e-12 && s < 1.0 - 1e-12 && off <= 1e-12 * scale {
                        failures.push(format!("vertex {v} hangs on edge {e}"));
                    }
                }
            }
        }
    }
    CheckResult { invariant: Invariant::NoHangingVertices, failures }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    fn square(tris: &[([usize; 3], Subdomain)], tag: impl FnMut([usize; 2], Subdomain) -> Option<EdgeTag>) -> Mesh {
        Mesh::from_raw(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], tris, tag).unwrap()
    }

    #[test]
    fn square_passes() {
        let m = square(&[([0, 1, 2], Subdomain::Solid), ([0, 2, 3], Subdomain::Solid)], |_, _| None);
        let r = validate(&m);
        assert!(r.passed(), "{r}");
        assert_eq!(r.checks.len(), 5);
    }

    #[test]
    fn flipped_triangle_fails_orientation() {
        let m = square(&[([0, 2, 1], Subdomain::Solid), ([0, 2, 3], Subdomain::Solid)], |_, _| None);
        let r = validate(&m);
        assert_eq!(r.failed().collect::<Vec<_>>(), vec![Invariant::Orientation]);
    }

    #[test]
    fn fluid_gamma_d_fails_tag_consistency() {
        let m = square(&[([0, 1, 2], Subdomain::Fluid), ([0, 2, 3], Subdomain::Fluid)], |e, _| {
            (e == [0, 1]).then_some(EdgeTag::GammaD)
        });
        let r = validate(&m);
        assert_eq!(r.failed().collect::<Vec<_>>(), vec![Invariant::TagConsistency]);
        assert_eq!(r.check(Invariant::TagConsistency).failures.len(), 1);
    }

    #[test]
    fn hanging_vertex_detected() {
        // triangle 0 is split at the midpoint of the diagonal, triangle 1 is not
        let m = Mesh::from_raw(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]],
            &[([0, 1, 4], Subdomain::Solid), ([4, 1, 2], Subdomain::Solid), ([0, 2, 3], Subdomain::Solid)],
            |_, _| None,
        )
        .unwrap();
        let r = validate(&m);
        assert!(!r.check(Invariant::NoHangingVertices).passed());
    }

    #[test]
    fn interface_between_solid_and_fluid() {
        let m = square(&[([0, 1, 2], Subdomain::Solid), ([0, 2, 3], Subdomain::Fluid)], |_, _| None);
        let r = validate(&m);
        assert!(r.passed(), "{r}");
        assert_eq!(m.edges_tagged(EdgeTag::Interface).count(), 1);
    }
}
