mod common;

use amlmc::fem::{quadrature_points, AssemblyPlan, Problem};
use amlmc::mesh::QuadMesh;
use common::{assembled_stiffness, dense_stiffness, loglog_fit, manufactured_qoi_error, random_refinement};
use proptest::prelude::*;

fn max_diff(a: &[Vec<f64>], b: &nalgebra::DMatrix<f64>) -> f64 {
    let mut d: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            d = d.max((v - b[(i, j)]).abs());
        }
    }
    d
}

#[test]
fn dense_oracle_on_uniform_mesh() {
    let m = QuadMesh::reference_domain(4, 2).unwrap().refine_uniform(2);
    assert!(m.n_free() <= 200);
    let a = |p: [f64; 2]| 1.0 + p[0] * p[0] + 0.5 * p[1];
    let got = assembled_stiffness(&m, a);
    assert!(max_diff(&got, &dense_stiffness(&m, a)) < 1e-10);
}

#[test]
fn manufactured_solution_goal_error_is_second_order() {
    let pts: Vec<(f64, f64)> = [8, 16, 32, 64].iter().map(|&n| manufactured_qoi_error(n)).collect();
    let order = loglog_fit(&pts);
    assert!((order - 2.0).abs() <= 0.2, "order {order}");
}

#[test]
fn rejects_nonpositive_coefficient() {
    let m = QuadMesh::reference_domain(4, 2).unwrap();
    let pts = quadrature_points(&m);
    let mut a = vec![1.0; pts.len()];
    a[5] = 0.0;
    assert!(AssemblyPlan::new(&m).assemble(&a, &pts).is_err());
    assert!(AssemblyPlan::new(&m).assemble(&a[1..], &pts).is_err());
}

#[test]
fn qoi_weight_peaks_inside_its_region() {
    let w = Problem::default().weight;
    let inside = w.eval([0.375, -0.375]);
    assert!(inside > w.eval([-0.5, -0.5]) && inside > w.eval([0.9, -0.1]));
    assert!(inside > 0.0 && inside < 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dense_oracle_on_refined_meshes(seed in any::<u64>(), frac in 0.1f64..0.5, c in 0.2f64..3.0) {
        let base = QuadMesh::reference_domain(4, 2).unwrap();
        let m = random_refinement(&base, 2, frac, seed);
        prop_assume!(m.n_free() <= 200);
        let a = move |p: [f64; 2]| c + (3.0 * p[0]).sin().powi(2) + p[1] * p[1];
        let got = assembled_stiffness(&m, a);
        prop_assert!(max_diff(&got, &dense_stiffness(&m, a)) < 1e-10);
        for i in 0..got.len() {
            prop_assert!(got[i][i] > 0.0);
            for j in 0..i {
                prop_assert!((got[i][j] - got[j][i]).abs() < 1e-13);
            }
        }
    }
}
