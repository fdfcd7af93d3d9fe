use std::collections::HashMap;

use super::{EdgeTag, Mesh, MeshError, Triangle};

/// Newest-vertex bisection of the marked triangles plus conforming closure.
pub fn bisect(mesh: &Mesh, marked: &[usize]) -> Result<Mesh, MeshError> {
    bisect_with_parents(mesh, marked).map(|(m, _)| m)
}

/// Bisects every triangle once.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    let all: Vec<usize> = (0..mesh.n_triangles()).collect();
    bisect(mesh, &all).expect("all ids are valid")
}

/// Like [`bisect`], also returning the parent triangle of every new triangle.
pub fn bisect_with_parents(mesh: &Mesh, marked: &[usize]) -> Result<(Mesh, Vec<usize>), MeshError> {
    let nt = mesh.n_triangles();
    if let Some(&bad) = marked.iter().find(|&&t| t >= nt) {
        return Err(MeshError::InvalidTriangle(bad));
    }
    let ref_edge = |t: usize| mesh.triangle_edges(t)[mesh.triangles()[t].refinement_edge as usize];

    let mut split = vec![false; mesh.n_edges()];
    let mut queue = Vec::new();
    for &t in marked {
        let e = ref_edge(t);
        if !split[e] {
            split[e] = true;
            queue.push(e);
        }
    }
    while let Some(e) = queue.pop() {
        for t in mesh.edges()[e].neighbours() {
            let r = ref_edge(t);
            if !split[r] {
                split[r] = true;
                queue.push(r);
            }
        }
    }

    let mut vertices = mesh.vertices().to_vec();
    let mut midpoint = vec![usize::MAX; mesh.n_edges()];
    for e in 0..mesh.n_edges() {
        if split[e] {
            midpoint[e] = vertices.len();
            vertices.push(mesh.edge_midpoint(e));
        }
    }

    let mut triangles = Vec::with_capacity(nt * 2);
    let mut parents = Vec::with_capacity(nt * 2);
    for t in 0..nt {
        let tri = mesh.triangles()[t];
        let te = mesh.triangle_edges(t);
        let r = tri.refinement_edge as usize;
        // Rotate so the refinement edge is opposite local vertex 0.
        let v = [tri.vertices[r], tri.vertices[(r + 1) % 3], tri.vertices[(r + 2) % 3]];
        let e = [te[r], te[(r + 1) % 3], te[(r + 2) % 3]];
        let start = triangles.len();
        split_recursive(v, e, &split, &midpoint, tri, &mut triangles);
        parents.extend(std::iter::repeat(t).take(triangles.len() - start));
    }

    let mut boundary_tags: HashMap<[usize; 2], EdgeTag> = HashMap::new();
    for (e, edge) in mesh.edges().iter().enumerate() {
        if !edge.is_boundary() {
            continue;
        }
        let [a, b] = edge.vertices;
        if split[e] {
            let m = midpoint[e];
            boundary_tags.insert([a.min(m), a.max(m)], edge.tag);
            boundary_tags.insert([b.min(m), b.max(m)], edge.tag);
        } else {
            boundary_tags.insert([a, b], edge.tag);
        }
    }
    let refined = Mesh::assemble(vertices, triangles, |key, _| boundary_tags.get(&key).copied())?;
    Ok((refined, parents))
}

/// `v[0]` is opposite the refinement edge; `e[i]` is the parent-level edge
/// opposite `v[i]`, or `usize::MAX` for edges created inside this triangle.
fn split_recursive(v: [usize; 3], e: [usize; 3], split: &[bool], midpoint: &[usize], proto: Triangle, out: &mut Vec<Triangle>) {
    if e[0] == usize::MAX || !split[e[0]] {
        out.push(Triangle { vertices: v, subdomain: proto.subdomain, refinement_edge: 0 });
        return;
    }
    let m = midpoint[e[0]];
    // Children (m, a, b) and (m, c, a); the new vertex is opposite the
    // children's refinement edges ab and ca.
    split_recursive([m, v[0], v[1]], [e[2], usize::MAX, usize::MAX], split, midpoint, proto, out);
    split_recursive([m, v[2], v[0]], [e[1], usize::MAX, usize::MAX], split, midpoint, proto, out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cavity_mesh, validate, GeometrySpec, Subdomain};

    fn square() -> Mesh {
        Mesh::from_raw(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            &[([0, 1, 2], Subdomain::Solid), ([0, 2, 3], Subdomain::Solid)],
            |_, _| None,
        )
        .unwrap()
    }

    #[test]
    fn single_mark_with_closure() {
        let m = bisect(&square(), &[0]).unwrap();
        assert!((4..=5).contains(&m.n_triangles()), "{}", m.n_triangles());
        assert!(validate(&m).passed());
    }

    #[test]
    fn uniform_bisection_halves_areas() {
        let base = build_cavity_mesh(&GeometrySpec::omega2(), 2).unwrap();
        let (fine, parents) = bisect_with_parents(&base, &(0..base.n_triangles()).collect::<Vec<_>>()).unwrap();
        assert_eq!(fine.n_triangles(), 2 * base.n_triangles());
        for (t, &p) in parents.iter().enumerate() {
            assert!((fine.area(t) - 0.5 * base.area(p)).abs() < 1e-14 * base.area(p).max(1.0));
            assert!(fine.signed_area(t) > 0.0);
        }
        assert!(validate(&fine).passed());
    }

    #[test]
    fn children_lie_in_parent() {
        let base = build_cavity_mesh(&GeometrySpec::omega1(), 2).unwrap();
        let (fine, parents) = bisect_with_parents(&base, &[0, 7, 11]).unwrap();
        for (t, &p) in parents.iter().enumerate() {
            for q in fine.triangle_coords(t) {
                let l = base.barycentric(p, q);
                assert!(l.iter().all(|&x| x > -1e-12), "{l:?}");
            }
            assert_eq!(fine.triangles()[t].subdomain, base.triangles()[p].subdomain);
        }
    }

    #[test]
    fn interface_refinement_halves_interface_edges() {
        let base = build_cavity_mesh(&GeometrySpec::omega1(), 2).unwrap();
        let marked: Vec<usize> = (0..base.n_triangles())
            .filter(|&t| base.triangle_edges(t).iter().any(|&e| base.edges()[e].tag == EdgeTag::Interface))
            .collect();
        let mut m = base.clone();
        let mut marked = marked;
        // two rounds of newest-vertex bisection bisect every edge of a marked triangle
        for _ in 0..2 {
            let (next, parents) = bisect_with_parents(&m, &marked).unwrap();
            let prev = marked.clone();
            marked = (0..next.n_triangles()).filter(|&t| prev.contains(&parents[t])).collect();
            m = next;
        }
        assert!(validate(&m).passed());
        let old: f64 = base.edges_tagged(EdgeTag::Interface).map(|e| base.edge_length(e)).sum();
        let new: f64 = m.edges_tagged(EdgeTag::Interface).map(|e| m.edge_length(e)).sum();
        assert!((old - new).abs() < 1e-12);
        assert_eq!(m.edges_tagged(EdgeTag::Interface).count(), 2 * base.edges_tagged(EdgeTag::Interface).count());
        let max_old = base.edges_tagged(EdgeTag::Interface).map(|e| base.edge_length(e)).fold(0.0, f64::max);
        for e in m.edges_tagged(EdgeTag::Interface) {
            assert!(m.edge_length(e) <= 0.5 * max_old + 1e-12);
        }
    }

    #[test]
    fn deterministic_and_area_preserving() {
        let base = build_cavity_mesh(&GeometrySpec::omega2(), 2).unwrap();
        let marked = [3, 5, 40, 41];
        let a = bisect(&base, &marked).unwrap();
        let b = bisect(&base, &marked).unwrap();
        assert_eq!(a, b);
        for s in [Subdomain::Solid, Subdomain::Fluid] {
            assert!((a.subdomain_area(s) - base.subdomain_area(s)).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_id_rejected() {
        assert_eq!(bisect(&square(), &[2]), Err(MeshError::InvalidTriangle(2)));
    }

    #[test]
    fn boundary_tags_inherited() {
        let base = build_cavity_mesh(&GeometrySpec::omega1(), 2).unwrap();
        let fine = refine_uniform(&refine_uniform(&base));
        for tag in [EdgeTag::GammaD, EdgeTag::GammaN, EdgeTag::Gamma0] {
            let lb: f64 = base.edges_tagged(tag).map(|e| base.edge_length(e)).sum();
            let lf: f64 = fine.edges_tagged(tag).map(|e| fine.edge_length(e)).sum();
            assert!((lb - lf).abs() < 1e-12, "{tag}");
        }
    }
}
