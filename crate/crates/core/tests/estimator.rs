use std::sync::Arc;

use amlmc::mlmc::{optimal_counts, run_estimator, EstimatorConfig, Scheme};
use amlmc::setup::{Example, Setup};
use proptest::prelude::*;

fn stat_error(v: &[f64], m: &[f64], c_xi: f64) -> f64 {
    c_xi * v.iter().zip(m).map(|(v, m)| v / m).sum::<f64>().sqrt()
}

fn work(w: &[f64], m: &[f64]) -> f64 {
    w.iter().zip(m).map(|(w, m)| w * m).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn allocation_meets_budget_and_beats_alternatives(
        profile in prop::collection::vec((1e-6f64..10.0, 1.0f64..1e4), 1..7),
        weights in prop::collection::vec(0.05f64..1.0, 7),
        tol in 1e-3f64..0.1,
    ) {
        let (v, w): (Vec<f64>, Vec<f64>) = profile.into_iter().unzip();
        let (theta, c_xi) = (0.5, 1.96);
        let m: Vec<f64> = optimal_counts(&v, &w, tol, theta, c_xi).unwrap().into_iter().map(|x| x as f64).collect();
        prop_assert!(stat_error(&v, &m, c_xi) <= theta * tol * (1.0 + 1e-12));

        // Any other shape, rescaled to hit the same statistical error, costs
        // at least the unrounded optimum.
        let target = (theta * tol / c_xi).powi(2);
        let shape = &weights[..v.len()];
        let s = v.iter().zip(shape).map(|(v, x)| v / x).sum::<f64>() / target;
        let alt: Vec<f64> = shape.iter().map(|x| x * s).collect();
        let rounding: f64 = w.iter().sum();
        prop_assert!(work(&w, &m) <= work(&w, &alt) + rounding + 1e-9 * work(&w, &alt));
    }
}

fn amlmc_config(setup: &Setup, tol: f64, seed: u64) -> EstimatorConfig {
    let mut c = EstimatorConfig::new(Scheme::Amlmc, tol, setup.sigma2, seed);
    c.warmup = 10;
    c
}

#[test]
fn deterministic_levels_telescope_to_the_finest_mesh() {
    let setup = Setup::new(Example::Deterministic, 0.0);
    let sampler = setup.sampler(Scheme::Amlmc, 3, None).unwrap();
    let config = amlmc_config(&setup, 1.0 / 16.0, 3);
    let res = run_estimator(&config, &sampler).unwrap();
    let finest = res.levels.len() - 1;
    let top = sampler.sample(finest, 0).unwrap();
    assert!((res.estimate - top.q_fine).abs() < 1e-12, "{} vs {}", res.estimate, top.q_fine);
    for r in &res.levels {
        assert_eq!(r.variance(), 0.0, "level {}", r.level);
    }
    for l in 1..=finest {
        assert_eq!(sampler.sample(l, 0).unwrap().k_coarse, Some(sampler.sample(l - 1, 0).unwrap().k_fine));
    }
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let setup = Setup::new(Example::LognormalConstant, 1.0);
    let h = Arc::new(setup.hierarchy().unwrap());
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let sampler = setup.sampler(Scheme::Amlmc, 7, Some(h.clone())).unwrap();
            run_estimator(&amlmc_config(&setup, 0.25, 7), &sampler).unwrap()
        })
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
    assert_eq!(a.levels, b.levels);
}

#[test]
fn fast_path_agrees_with_full_solves() {
    let mut setup = Setup::new(Example::LognormalConstant, 1.0);
    let h = Arc::new(setup.hierarchy().unwrap());
    let fast = setup.sampler(Scheme::Amlmc, 5, Some(h.clone())).unwrap();
    setup.fast_path = false;
    let full = setup.sampler(Scheme::Amlmc, 5, Some(h)).unwrap();
    let tols = setup.level_tolerances();
    for level in 0..3 {
        for n in 0..8 {
            let (a, b) = (fast.sample(level, n).unwrap(), full.sample(level, n).unwrap());
            assert_eq!(a.constant, b.constant);
            assert!((a.q_fine - b.q_fine).abs() < tols.tol(level), "level {level} sample {n}: {} vs {}", a.q_fine, b.q_fine);
            assert!(a.k_fine.abs_diff(b.k_fine) <= 1, "level {level} sample {n}");
        }
    }
}

#[test]
fn smlmc_matches_scaled_unit_solution() {
    let setup = Setup::new(Example::LognormalConstant, 1.0);
    let sampler = setup.sampler(Scheme::Smlmc, 2, None).unwrap();
    let ladder = setup.ladder();
    for level in 0..3 {
        let s = sampler.sample(level, 4).unwrap();
        let a = s.constant.unwrap();
        let unit = ladder.level(level).unwrap().unit_summary(false).unwrap().qoi;
        assert!((s.q_fine - unit / a).abs() < 1e-12 * unit.abs() / a);
    }
}

#[test]
fn coupled_streams_share_the_coefficient() {
    let setup = Setup::new(Example::LognormalConstant, 1.0);
    let sampler = setup.sampler(Scheme::Smlmc, 6, None).unwrap();
    for n in 0..4 {
        assert_eq!(sampler.sample(2, n).unwrap(), sampler.sample_from_stream(2, 2, n).unwrap());
        let a: Vec<_> = (0..3).map(|l| sampler.sample_from_stream(l, 0, n).unwrap().constant).collect();
        assert!(a.iter().all(|x| *x == a[0]));
    }
    let records = amlmc::experiments::coupled_level_records(&sampler, 3, 16).unwrap();
    assert!(records.iter().all(|r| r.count == 16 && r.log.len() == 16));
}

#[test]
fn invalid_configuration_is_rejected() {
    let setup = Setup::new(Example::LognormalConstant, 1.0);
    let sampler = setup.sampler(Scheme::Smlmc, 1, None).unwrap();
    let mut c = EstimatorConfig::new(Scheme::Smlmc, 0.1, 1.0, 1);
    c.theta = 1.5;
    assert!(run_estimator(&c, &sampler).is_err());
    let c = EstimatorConfig::new(Scheme::Amlmc, 0.1, 1.0, 1);
    assert!(run_estimator(&c, &sampler).is_err());
}
