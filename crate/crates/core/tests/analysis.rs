use amlmc::analysis::{
    complexity_constants, k4, k5, optimal_h_stochastic, optimal_h_uniform, work_models, ComplexityInputs, DensityStats, Regime,
};
use proptest::prelude::*;

fn densities() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..12, 1usize..6).prop_flat_map(|(cells, samples)| {
        (
            prop::collection::vec(prop::collection::vec(-1e3f64..1e3, cells), samples),
            prop::collection::vec(prop::sample::select(vec![0.5, 0.25, 0.125, 0.0625]), cells),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn work_models_are_ordered((rho, h) in densities(), tol in 1e-4f64..1.0) {
        let stats = DensityStats::new(&rho, &h).unwrap();
        let w = work_models(&stats, tol);
        prop_assert!(w.jensen_slack() <= 1e-12, "{w:?}");
    }

    #[test]
    fn optimal_meshes_hit_the_tolerance((rho, h) in densities(), tol in 1e-4f64..1.0) {
        prop_assume!(rho.iter().all(|r| r.iter().all(|x| x.abs() > 1e-6)));
        let stats = DensityStats::new(&rho, &h).unwrap();
        let r = stats.mean_sqrt_integral();
        // Mean error int |rho| h_opt^2 equals tol, and mean cell count
        // int h_opt^-2 equals the stochastic work model.
        let (mut err, mut cells) = (0.0, 0.0);
        for sample in &rho {
            let hs = optimal_h_stochastic(sample, tol, r);
            for ((x, hk), size) in sample.iter().zip(&hs).zip(&h) {
                err += x.abs() * hk * hk * size * size;
                cells += size * size / (hk * hk);
            }
        }
        let n = rho.len() as f64;
        prop_assert!((err / n - tol).abs() <= 1e-9 * tol);
        let model = work_models(&stats, tol).stochastic;
        prop_assert!((cells / n - model).abs() <= 1e-9 * model);

        let hu = optimal_h_uniform(&stats.l1, tol);
        let err_u: f64 = stats.l1.iter().zip(&hu).map(|(l, h)| l * h * h).sum::<f64>() / n;
        prop_assert!((err_u - tol).abs() <= 1e-9 * tol);
    }
}

fn inputs(d: u32, p: u32) -> ComplexityInputs {
    ComplexityInputs { var_k1: 0.3, mean_k2: 2.0, v0: 5.0, c: 0.25, tol0: 2.0, theta: 0.5, c_xi: 1.96, d, p }
}

#[test]
fn critical_constant_is_inverse_squared_log() {
    let v = k4(Regime::Critical, &inputs(4, 2));
    assert!((v * 4f64.ln().powi(2) - 1.0).abs() < 1e-12);
    assert!((v - 0.5204).abs() < 1e-4);
}

#[test]
fn k5_at_default_parameters() {
    let v = k5(0.25, 0.5, 1.96, 2, 2);
    // (1.96 / 0.5)^2 (4 - 1)^2 (1 + 1/4)
    assert!((v / (15.3664 * 9.0 * 1.25) - 1.0).abs() < 1e-12);
}

#[test]
fn below_critical_constant_by_hand() {
    let x = inputs(2, 2);
    let first = (x.v0 / x.var_k1).sqrt() / (3.0 * 1.25f64.sqrt());
    let second = 2.0 * 0.5 / 0.5;
    let expect = 0.5 * (first + second).powi(2);
    assert!((k4(Regime::Below, &x) - expect).abs() < 1e-12 * expect);
    let c = complexity_constants(&x);
    assert_eq!(c.regime, Regime::Below);
    assert!((c.k - c.k3 * c.k4 * c.k5).abs() < 1e-12 * c.k);
    assert!((c.k3 - 0.6).abs() < 1e-15);
}

#[test]
fn zero_variance_is_degenerate() {
    let c = complexity_constants(&ComplexityInputs { var_k1: 0.0, ..inputs(2, 2) });
    assert!(c.degenerate);
    assert_eq!(c.k, 0.0);
}
