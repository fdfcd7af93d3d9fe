//! Eigensolver behaviour on assembled cavity problems.

use elastoacoustic::assembly::assemble_system;
use elastoacoustic::eigen::{dense_oracle, filter_modes, solve_pencil, ConstraintMethod};
use elastoacoustic::fe::{eval_bdm, DofLocation};
use elastoacoustic::mesh::{build_cavity_mesh, refine_uniform, RectilinearLayout, Segment};
use elastoacoustic::sparse::CsrMatrix;
use elastoacoustic::{BlockSystem, Family, GeometrySpec, MaterialField, Mesh, SolveOptions, Subdomain};
use faer::Mat;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn cavity(family: Family, level: usize) -> BlockSystem {
    let mesh = build_cavity_mesh(&GeometrySpec::omega1(), level).unwrap();
    assemble_system(&mesh, family, &MaterialField::steel_water()).unwrap()
}

#[test]
fn spectra_agree_across_shifts() {
    let system = cavity(Family::TaylorHood, 3);
    let low = (2.0 * std::f64::consts::PI * 30.0).powi(2);
    let a = solve_pencil(&system, &SolveOptions::default().with_modes(5)).unwrap();
    let b = solve_pencil(&system, &SolveOptions::default().with_shift(low).with_modes(5)).unwrap();
    assert!(a.converged() && b.converged());
    let shared: Vec<f64> = b.kappas().into_iter().filter(|k| *k > a.shift).collect();
    assert!(shared.len() >= 4);
    for (x, y) in shared.iter().zip(a.kappas()) {
        assert!(rel(*x, y) < 1e-8, "{x} vs {y}");
    }
}

#[test]
fn nullspace_and_saddle_point_routes_agree() {
    for family in [Family::Mini, Family::TaylorHood] {
        let system = cavity(family, 2);
        let opts = SolveOptions::default().with_modes(6);
        let ns = solve_pencil(&system, &opts).unwrap();
        let sp = solve_pencil(&system, &opts.clone().with_method(ConstraintMethod::SaddlePoint)).unwrap();
        assert_eq!(ns.pairs.len(), sp.pairs.len());
        for (x, y) in ns.pairs.iter().zip(&sp.pairs) {
            assert!(rel(x.kappa, y.kappa) < 1e-8, "{family:?}: {} vs {}", x.kappa, y.kappa);
            assert!(x.constraint_violation < 1e-10 && y.constraint_violation < 1e-10);
        }
    }
}

#[test]
fn solid_only_problem_has_no_kernel() {
    let mesh = build_cavity_mesh(&GeometrySpec::unit_square_solid(), 4).unwrap();
    let system = assemble_system(&mesh, Family::TaylorHood, &MaterialField::steel_water()).unwrap();
    let report = filter_modes(&solve_pencil(&system, &SolveOptions::default().with_shift(0.0).with_modes(4)).unwrap(), 1e-8);
    assert!(report.kernel.is_empty());
    assert!(!report.pairs.is_empty());
    assert!(report.pairs.iter().all(|p| p.kappa > 0.0));
}

fn fluid_square() -> Mesh {
    let m = Mesh::from_raw(
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        &[([0, 1, 2], Subdomain::Fluid), ([0, 2, 3], Subdomain::Fluid)],
        |_, _| None,
    )
    .unwrap();
    refine_uniform(&refine_uniform(&m))
}

fn rank(m: &Mat<f64>) -> usize {
    let s = m.singular_values().unwrap();
    let smax = s.iter().fold(0.0f64, |a, &b| a.max(b));
    s.iter().filter(|&&x| x > 1e-10 * smax).count()
}

/// With zero normal trace on the whole boundary the zero eigenvalues of the
/// fluid pencil span the discrete divergence-free fields with vanishing
/// normal moments.
#[test]
fn fluid_kernel_dimension_matches_rank_deficit() {
    let mesh = fluid_square();
    let system = assemble_system(&mesh, Family::TaylorHood, &MaterialField::steel_water()).unwrap();
    let fluid = &system.spaces.as_ref().unwrap().fluid;
    let n = system.n_dofs();
    let nw = fluid.n_dofs();
    assert_eq!(n, nw);

    let boundary: Vec<usize> = (0..nw)
        .filter(|&d| matches!(fluid.location(d), DofLocation::Edge(e) if mesh.edges()[e].is_boundary()))
        .collect();
    let mut trace = vec![0.0; boundary.len() * n];
    for (r, &d) in boundary.iter().enumerate() {
        trace[r * n + system.layout.w_dof(d)] = 1.0;
    }
    let trace = CsrMatrix::from_dense(boundary.len(), n, &trace);

    let nt = mesh.n_triangles();
    let mut op = Mat::<f64>::zeros(nt + boundary.len(), nw);
    for d in 0..nw {
        let mut e = vec![0.0; nw];
        e[d] = 1.0;
        for t in 0..nt {
            op[(t, d)] = eval_bdm(&mesh, fluid, &e, t, [1.0 / 3.0; 3]).2 * mesh.area(t);
        }
    }
    for (r, &d) in boundary.iter().enumerate() {
        op[(nt + r, d)] = 1.0;
    }
    let expected = nw - rank(&op);
    assert!(expected > 0);

    let constrained = BlockSystem::from_matrices(system.a.clone(), system.b.clone(), Some(trace));
    let kappas = dense_oracle(&constrained).unwrap();
    let top = kappas.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let zeros = kappas.iter().filter(|k| k.abs() <= 1e-8 * top).count();
    assert_eq!(zeros, expected);
}

#[test]
fn density_scaling_rescales_solid_spectrum() {
    // an asymmetric L-shaped cantilever so that the largest entry is unique
    let layout = RectilinearLayout {
        xs: vec![0.0, 1.0, 2.3],
        ys: vec![0.0, 0.7, 1.0],
        cells: vec![Some(Subdomain::Solid), Some(Subdomain::Solid), Some(Subdomain::Solid), None],
        dirichlet: vec![Segment { a: [0.0, 0.0], b: [0.0, 1.0] }],
    };
    let mesh = build_cavity_mesh(&GeometrySpec::custom(layout), 3).unwrap();
    let base = MaterialField::steel_water();
    let s = 2.5;
    let heavy = MaterialField { solid_density: s * base.solid_density, ..base.clone() };
    let opts = SolveOptions::default().with_shift(0.0).with_modes(3);
    let a = solve_pencil(&assemble_system(&mesh, Family::Mini, &base).unwrap(), &opts).unwrap();
    let b = solve_pencil(&assemble_system(&mesh, Family::Mini, &heavy).unwrap(), &opts).unwrap();
    assert_eq!(a.pairs.len(), b.pairs.len());
    let argmax = |v: &[f64]| (0..v.len()).max_by(|&i, &j| v[i].abs().total_cmp(&v[j].abs())).unwrap();
    for (x, y) in a.pairs.iter().zip(&b.pairs) {
        assert!(rel(y.kappa, x.kappa / s) < 1e-9, "{} vs {}", y.kappa, x.kappa / s);
        assert_eq!(argmax(&x.vector), argmax(&y.vector));
    }
}
