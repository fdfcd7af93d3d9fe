//! VTK legacy ASCII output of meshes and modes.

use std::fmt::Write as _;

use elastoacoustic::{BlockSystem, Mesh, Subdomain};

/// Point and cell values of one mode, ready for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeFields {
    /// Solid displacement at each vertex (zero off the solid).
    pub u: Vec<[f64; 2]>,
    /// Solid pressure at each vertex (zero off the solid).
    pub p: Vec<f64>,
    /// Cell average of the fluid displacement (zero on solid cells).
    pub w: Vec<[f64; 2]>,
}

impl ModeFields {
    pub fn zeros(mesh: &Mesh) -> Self {
        ModeFields { u: vec![[0.0; 2]; mesh.n_vertices()], p: vec![0.0; mesh.n_vertices()], w: vec![[0.0; 2]; mesh.n_triangles()] }
    }

    pub fn of_mode(mesh: &Mesh, system: &BlockSystem, x: &[f64]) -> Self {
        let mut f = Self::zeros(mesh);
        for (t, tri) in mesh.triangles().iter().enumerate() {
            match tri.subdomain {
                Subdomain::Solid => {
                    for (i, &v) in tri.vertices.iter().enumerate() {
                        let mut l = [0.0; 3];
                        l[i] = 1.0;
                        f.u[v] = system.displacement_at(mesh, x, t, l);
                        f.p[v] = system.pressure_at(mesh, x, t, l);
                    }
                }
                Subdomain::Fluid => f.w[t] = system.flux_at(mesh, x, t, [1.0 / 3.0; 3]),
            }
        }
        f
    }
}

fn g(x: f64) -> String {
    format!("{x:.16e}")
}

/// Unstructured grid with `u`, `p` point data and `subdomain`, `w` and
/// optionally `eta2` cell data.
pub fn write_vtk(mesh: &Mesh, title: &str, fields: &ModeFields, eta2: Option<&[f64]>) -> String {
    let (nv, nt) = (mesh.n_vertices(), mesh.n_triangles());
    let mut s = String::new();
    writeln!(s, "# vtk DataFile Version 3.0").unwrap();
    writeln!(s, "{}", title.lines().next().unwrap_or("")).unwrap();
    writeln!(s, "ASCII\nDATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(s, "POINTS {nv} double").unwrap();
    for v in mesh.vertices() {
        writeln!(s, "{} {} 0", g(v[0]), g(v[1])).unwrap();
    }
    writeln!(s, "CELLS {nt} {}", 4 * nt).unwrap();
    for t in mesh.triangles() {
        writeln!(s, "3 {} {} {}", t.vertices[0], t.vertices[1], t.vertices[2]).unwrap();
    }
    writeln!(s, "CELL_TYPES {nt}").unwrap();
    for _ in 0..nt {
        writeln!(s, "5").unwrap();
    }
    writeln!(s, "POINT_DATA {nv}").unwrap();
    writeln!(s, "VECTORS u double").unwrap();
    for u in &fields.u {
        writeln!(s, "{} {} 0", g(u[0]), g(u[1])).unwrap();
    }
    writeln!(s, "SCALARS p double 1\nLOOKUP_TABLE default").unwrap();
    for p in &fields.p {
        writeln!(s, "{}", g(*p)).unwrap();
    }
    writeln!(s, "CELL_DATA {nt}").unwrap();
    writeln!(s, "SCALARS subdomain int 1\nLOOKUP_TABLE default").unwrap();
    for t in mesh.triangles() {
        writeln!(s, "{}", if t.subdomain == Subdomain::Solid { 0 } else { 1 }).unwrap();
    }
    writeln!(s, "VECTORS w double").unwrap();
    for w in &fields.w {
        writeln!(s, "{} {} 0", g(w[0]), g(w[1])).unwrap();
    }
    if let Some(eta) = eta2 {
        writeln!(s, "SCALARS eta2 double 1\nLOOKUP_TABLE default").unwrap();
        for e in eta {
            writeln!(s, "{}", g(*e)).unwrap();
        }
    }
    s
}
