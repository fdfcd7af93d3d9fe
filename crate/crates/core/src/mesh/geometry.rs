use std::collections::HashMap;

use super::{EdgeTag, Mesh, MeshError, Subdomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeometryPreset {
    /// Rectangular fluid in a U-shaped solid vessel.
    Omega1,
    /// As `Omega1`, with a solid step in the bottom-right corner of the fluid.
    Omega2,
    /// Unit square of solid, clamped on all sides.
    UnitSquareSolidOnly,
    Custom,
}

/// Dimensions (meters) of the vessel presets.
///
/// The fluid occupies `[0, fluid_width] × [0, fluid_height]`; the walls have
/// thickness `wall_thickness` and stand on a base of thickness
/// `base_thickness`, with their tops flush with the free surface. The vessel
/// is clamped along two feet of width `foot_width` at the outer ends of the
/// bottom face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityDims {
    pub fluid_width: f64,
    pub fluid_height: f64,
    pub wall_thickness: f64,
    pub base_thickness: f64,
    pub foot_width: f64,
    pub step_width: f64,
    pub step_height: f64,
}

impl Default for CavityDims {
    fn default() -> Self {
        CavityDims {
            fluid_width: 5.5,
            fluid_height: 0.5,
            wall_thickness: 0.5,
            base_thickness: 0.5,
            foot_width: 1.0,
            step_width: 1.5,
            step_height: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Segment {
    fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        let d = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let r = [p[0] - self.a[0], p[1] - self.a[1]];
        let s = (r[0] * d[0] + r[1] * d[1]) / len2;
        let cross = (r[0] * d[1] - r[1] * d[0]).abs() / len2.sqrt();
        cross <= tol && s >= -tol && s <= 1.0 + tol
    }
}

/// A union of axis-aligned cells on a tensor grid of breakpoints.
///
/// `cells[j * (xs.len() - 1) + i]` covers `[xs[i], xs[i+1]] × [ys[j], ys[j+1]]`.
/// Solid boundary edges lying on a `dirichlet` segment are clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct RectilinearLayout {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub cells: Vec<Option<Subdomain>>,
    pub dirichlet: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySpec {
    pub preset: GeometryPreset,
    pub dims: CavityDims,
    pub custom: Option<RectilinearLayout>,
}

impl GeometrySpec {
    pub fn omega1() -> Self {
        GeometrySpec { preset: GeometryPreset::Omega1, dims: CavityDims::default(), custom: None }
    }

    pub fn omega2() -> Self {
        GeometrySpec { preset: GeometryPreset::Omega2, dims: CavityDims::default(), custom: None }
    }

    pub fn unit_square_solid() -> Self {
        GeometrySpec { preset: GeometryPreset::UnitSquareSolidOnly, dims: CavityDims::default(), custom: None }
    }

    pub fn custom(layout: RectilinearLayout) -> Self {
        GeometrySpec { preset: GeometryPreset::Custom, dims: CavityDims::default(), custom: Some(layout) }
    }

    pub fn with_dims(mut self, dims: CavityDims) -> Self {
        self.dims = dims;
        self
    }

    pub fn layout(&self) -> Result<RectilinearLayout, MeshError> {
        let layout = match self.preset {
            GeometryPreset::Custom => self
                .custom
                .clone()
                .ok_or_else(|| MeshError::DegenerateGeometry("custom preset without a layout".into()))?,
            GeometryPreset::UnitSquareSolidOnly => {
                let c = |a: [f64; 2], b: [f64; 2]| Segment { a, b };
                RectilinearLayout {
                    xs: vec![0.0, 1.0],
                    ys: vec![0.0, 1.0],
                    cells: vec![Some(Subdomain::Solid)],
                    dirichlet: vec![
                        c([0.0, 0.0], [1.0, 0.0]),
                        c([1.0, 0.0], [1.0, 1.0]),
                        c([0.0, 1.0], [1.0, 1.0]),
                        c([0.0, 0.0], [0.0, 1.0]),
                    ],
                }
            }
            GeometryPreset::Omega1 => vessel_layout(&self.dims, false)?,
            GeometryPreset::Omega2 => vessel_layout(&self.dims, true)?,
        };
        check_layout(&layout)?;
        Ok(layout)
    }
}

fn vessel_layout(d: &CavityDims, step: bool) -> Result<RectilinearLayout, MeshError> {
    let (w, h, t, b, f) = (d.fluid_width, d.fluid_height, d.wall_thickness, d.base_thickness, d.foot_width);
    for (name, v) in [("fluid_width", w), ("fluid_height", h), ("wall_thickness", t), ("base_thickness", b), ("foot_width", f)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(MeshError::DegenerateGeometry(format!("{name} must be positive, got {v}")));
        }
    }
    if 2.0 * f > w + 2.0 * t {
        return Err(MeshError::DegenerateGeometry("clamped feet overlap".into()));
    }
    let mut xs = vec![-t, 0.0, w, w + t, -t + f, w + t - f];
    let mut ys = vec![-b, 0.0, h];
    if step {
        let (sw, sh) = (d.step_width, d.step_height);
        if !(sw > 0.0 && sw < w && sh > 0.0 && sh < h) {
            return Err(MeshError::DegenerateGeometry(format!("step {sw} x {sh} does not fit in the fluid")));
        }
        xs.push(w - sw);
        ys.push(sh);
    }
    let scale = w + h + t + b;
    let xs = sorted_breakpoints(xs, 1e-12 * scale);
    let ys = sorted_breakpoints(ys, 1e-12 * scale);
    let nx = xs.len() - 1;
    let mut cells = Vec::with_capacity(nx * (ys.len() - 1));
    for j in 0..ys.len() - 1 {
        for i in 0..nx {
            let cx = 0.5 * (xs[i] + xs[i + 1]);
            let cy = 0.5 * (ys[j] + ys[j + 1]);
            let in_fluid = cx > 0.0 && cx < w && cy > 0.0 && cy < h;
            let in_step = step && cx > w - d.step_width && cy < d.step_height;
            cells.push(Some(if in_fluid && !in_step { Subdomain::Fluid } else { Subdomain::Solid }));
        }
    }
    let dirichlet = vec![Segment { a: [-t, -b], b: [-t + f, -b] }, Segment { a: [w + t - f, -b], b: [w + t, -b] }];
    Ok(RectilinearLayout { xs, ys, cells, dirichlet })
}

fn sorted_breakpoints(mut v: Vec<f64>, tol: f64) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= tol);
    v
}

fn check_layout(l: &RectilinearLayout) -> Result<(), MeshError> {
    let strictly_increasing = |v: &[f64]| v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0]) && v.iter().all(|x| x.is_finite());
    if !strictly_increasing(&l.xs) || !strictly_increasing(&l.ys) {
        return Err(MeshError::DegenerateGeometry("breakpoints must be finite and strictly increasing".into()));
    }
    if l.cells.len() != (l.xs.len() - 1) * (l.ys.len() - 1) {
        return Err(MeshError::DegenerateGeometry(format!(
            "layout has {} cells, expected {}",
            l.cells.len(),
            (l.xs.len() - 1) * (l.ys.len() - 1)
        )));
    }
    if l.cells.iter().all(Option::is_none) {
        return Err(MeshError::DegenerateGeometry("layout has zero area".into()));
    }
    for s in &l.dirichlet {
        if s.a == s.b {
            return Err(MeshError::DegenerateGeometry("zero-length clamped segment".into()));
        }
    }
    Ok(())
}

/// Uniform subdivision of each breakpoint interval with target size `h`.
fn subdivide(breaks: &[f64], h: f64) -> (Vec<f64>, Vec<usize>) {
    let mut coords = vec![breaks[0]];
    let mut start = vec![0];
    for w in breaks.windows(2) {
        let m = ((w[1] - w[0]) / h).round().max(1.0) as usize;
        for k in 1..=m {
            coords.push(if k == m { w[1] } else { w[0] + (w[1] - w[0]) * k as f64 / m as f64 });
        }
        start.push(coords.len() - 1);
    }
    (coords, start)
}

/// Triangulates the geometry so that its shortest breakpoint interval is split
/// into `n` edges. Every grid cell is cut along a diagonal whose direction
/// alternates in a checkerboard pattern.
pub fn build_cavity_mesh(spec: &GeometrySpec, n: usize) -> Result<Mesh, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidLevel);
    }
    let layout = spec.layout()?;
    let shortest = layout
        .xs
        .windows(2)
        .chain(layout.ys.windows(2))
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let h = shortest / n as f64;
    let (gx, sx) = subdivide(&layout.xs, h);
    let (gy, sy) = subdivide(&layout.ys, h);
    let nxl = layout.xs.len() - 1;
    let (ngx, ngy) = (gx.len() - 1, gy.len() - 1);

    // Map fine grid cells to layout cells.
    let interval_of = |starts: &[usize], idx: usize| starts.partition_point(|&s| s <= idx) - 1;
    let cell_sub = |i: usize, j: usize| layout.cells[interval_of(&sy, j) * nxl + interval_of(&sx, i)];

    let mut vertex_id: HashMap<(usize, usize), usize> = HashMap::new();
    let mut active = vec![false; (ngx + 1) * (ngy + 1)];
    for j in 0..ngy {
        for i in 0..ngx {
            if cell_sub(i, j).is_some() {
                for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    active[(j + dj) * (ngx + 1) + i + di] = true;
                }
            }
        }
    }
    let mut vertices = Vec::new();
    for j in 0..=ngy {
        for i in 0..=ngx {
            if active[j * (ngx + 1) + i] {
                vertex_id.insert((i, j), vertices.len());
                vertices.push([gx[i], gy[j]]);
            }
        }
    }

    let mut triangles = Vec::new();
    for j in 0..ngy {
        for i in 0..ngx {
            let Some(sub) = cell_sub(i, j) else { continue };
            let v = |di: usize, dj: usize| vertex_id[&(i + di, j + dj)];
            let (v00, v10, v01, v11) = (v(0, 0), v(1, 0), v(0, 1), v(1, 1));
            if (i + j) % 2 == 0 {
                triangles.push(([v00, v10, v11], sub));
                triangles.push(([v00, v11, v01], sub));
            } else {
                triangles.push(([v00, v10, v01], sub));
                triangles.push(([v10, v11, v01], sub));
            }
        }
    }

    let tol = 1e-9 * shortest;
    let mesh = Mesh::from_raw(vertices.clone(), &triangles, |[a, b], sub| match sub {
        Subdomain::Fluid => Some(EdgeTag::Gamma0),
        Subdomain::Solid => {
            let m = [0.5 * (vertices[a][0] + vertices[b][0]), 0.5 * (vertices[a][1] + vertices[b][1])];
            let clamped = layout.dirichlet.iter().any(|s| s.contains(m, tol) && s.contains(vertices[a], tol) && s.contains(vertices[b], tol));
            Some(if clamped { EdgeTag::GammaD } else { EdgeTag::GammaN })
        }
    })?;
    for (k, s) in layout.dirichlet.iter().enumerate() {
        let hit = mesh.edges_tagged(EdgeTag::GammaD).any(|e| s.contains(mesh.edge_midpoint(e), tol));
        if !hit {
            return Err(MeshError::DegenerateGeometry(format!(
                "clamped segment {k} ({:?} -> {:?}) does not lie on the solid boundary",
                s.a, s.b
            )));
        }
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::validate;

    #[test]
    fn unit_square_level_one() {
        let m = build_cavity_mesh(&GeometrySpec::unit_square_solid(), 1).unwrap();
        assert_eq!(m.n_triangles(), 2);
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.edges().iter().filter(|e| e.is_boundary()).count(), 4);
        assert!(validate(&m).passed());
    }

    #[test]
    fn omega1_coarse_has_all_tags() {
        let m = build_cavity_mesh(&GeometrySpec::omega1(), 2).unwrap();
        let report = validate(&m);
        assert!(report.passed(), "{report}");
        for tag in [EdgeTag::GammaD, EdgeTag::GammaN, EdgeTag::Gamma0, EdgeTag::Interface, EdgeTag::Interior] {
            assert!(m.edges_tagged(tag).count() > 0, "missing {tag}");
        }
    }

    #[test]
    fn shortest_interval_split_n_times() {
        let spec = GeometrySpec::omega1();
        let m = build_cavity_mesh(&spec, 3).unwrap();
        let t = spec.dims.wall_thickness;
        let total: f64 = m.edges_tagged(EdgeTag::GammaD).map(|e| m.edge_length(e)).sum();
        assert!((total - 2.0 * spec.dims.foot_width).abs() < 1e-12);
        let n = m.edges_tagged(EdgeTag::GammaD).count();
        let per_foot = (spec.dims.foot_width / (t / 3.0)).round() as usize;
        assert_eq!(n, 2 * per_foot);
        let min_len = (0..m.n_edges()).map(|e| m.edge_length(e)).fold(f64::INFINITY, f64::min);
        assert!((min_len - t / 3.0).abs() < 1e-12);
    }

    #[test]
    fn omega2_has_reentrant_fluid_corner() {
        let m = build_cavity_mesh(&GeometrySpec::omega2(), 10).unwrap();
        assert!(validate(&m).passed());
        let pi = std::f64::consts::PI;
        let sums = m.vertex_angle_sums(Subdomain::Fluid);
        let reentrant: Vec<usize> = (0..m.n_vertices()).filter(|&v| sums[v] > pi + 1e-8 && sums[v] < 2.0 * pi - 1e-8).collect();
        assert_eq!(reentrant.len(), 1);
        let d = GeometrySpec::omega2().dims;
        let p = m.vertices()[reentrant[0]];
        assert!((p[0] - (d.fluid_width - d.step_width)).abs() < 1e-12 && (p[1] - d.step_height).abs() < 1e-12);
        assert!((sums[reentrant[0]] - 1.5 * pi).abs() < 1e-12);
    }

    #[test]
    fn subdomain_areas_match_geometry() {
        let spec = GeometrySpec::omega2();
        let d = spec.dims;
        let m = build_cavity_mesh(&spec, 2).unwrap();
        let fluid = d.fluid_width * d.fluid_height - d.step_width * d.step_height;
        let total = (d.fluid_width + 2.0 * d.wall_thickness) * (d.fluid_height + d.base_thickness);
        assert!((m.subdomain_area(Subdomain::Fluid) - fluid).abs() < 1e-10);
        assert!((m.subdomain_area(Subdomain::Solid) - (total - fluid)).abs() < 1e-10);
    }

    #[test]
    fn singular_points_of_vessel() {
        let m = build_cavity_mesh(&GeometrySpec::omega1(), 2).unwrap();
        let pts = m.singular_points();
        // four clamped/free transitions and two re-entrant solid corners
        assert_eq!(pts.len(), 6, "{pts:?}");
    }

    #[test]
    fn degenerate_geometry_rejected() {
        let layout = RectilinearLayout { xs: vec![0.0, 1.0], ys: vec![0.0, 1.0], cells: vec![None], dirichlet: vec![] };
        assert!(matches!(build_cavity_mesh(&GeometrySpec::custom(layout), 1), Err(MeshError::DegenerateGeometry(_))));
        let mut d = CavityDims::default();
        d.wall_thickness = 0.0;
        assert!(build_cavity_mesh(&GeometrySpec::omega1().with_dims(d), 2).is_err());
        let off = RectilinearLayout {
            xs: vec![0.0, 1.0],
            ys: vec![0.0, 1.0],
            cells: vec![Some(Subdomain::Solid)],
            dirichlet: vec![Segment { a: [0.5, 0.2], b: [0.5, 0.8] }],
        };
        assert!(build_cavity_mesh(&GeometrySpec::custom(off), 2).is_err());
        assert_eq!(build_cavity_mesh(&GeometrySpec::omega1(), 0), Err(MeshError::InvalidLevel));
    }

    #[test]
    fn solid_and_fluid_share_exactly_interface() {
        for n in 1..=4 {
            let m = build_cavity_mesh(&GeometrySpec::omega2(), n).unwrap();
            let solid: std::collections::BTreeSet<_> = m.subdomain_edges(Subdomain::Solid).into_iter().collect();
            let fluid: std::collections::BTreeSet<_> = m.subdomain_edges(Subdomain::Fluid).into_iter().collect();
            let shared: Vec<_> = solid.intersection(&fluid).copied().collect();
            let iface: Vec<_> = m.edges_tagged(EdgeTag::Interface).collect();
            assert_eq!(shared, iface);
            let sv: std::collections::BTreeSet<_> = m.subdomain_vertices(Subdomain::Solid).into_iter().collect();
            let fv: std::collections::BTreeSet<_> = m.subdomain_vertices(Subdomain::Fluid).into_iter().collect();
            let mut iv: Vec<usize> = iface.iter().flat_map(|&e| m.edges()[e].vertices).collect();
            iv.sort_unstable();
            iv.dedup();
            assert_eq!(sv.intersection(&fv).copied().collect::<Vec<_>>(), iv);
        }
    }
}
