//! Drivers shared by the command line tool and the test suites.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::{MeshHierarchy, UniformLadder};
use crate::analysis::{self, ComplexityConstants, ComplexityInputs, DensityStats, WorkModels};
use crate::context::SolveMode;
use crate::error::{Error, Result};
use crate::field::sample_rng;
use crate::io::{ConvergenceRow, WorkRow};
use crate::mlmc::{run_estimator, sample_level, EstimatorConfig, LevelRecord, MlmcResult, Sampler, Scheme};
use crate::setup::{Example, Setup};

const DENSITY_TAG: u8 = 4;

/// Deterministic solves on the first `adaptive` hierarchy meshes and on
/// `uniform` uniform refinements of the base mesh.
pub fn convergence_table(setup: &Setup, hierarchy: &MeshHierarchy, adaptive: usize, uniform: usize) -> Result<Vec<ConvergenceRow>> {
    let field = setup.hierarchy_field();
    let upper = setup.adapt.upper_bound;
    let ladder = UniformLadder::new(setup.base_mesh(), setup.problem(), 0, setup.hierarchy_tolerances(), uniform.max(1));
    let mut rows = Vec::new();
    for (name, n) in [("adaptive", adaptive), ("uniform", uniform)] {
        for k in 0..n {
            let mesh = if name == "adaptive" { hierarchy.level(k)? } else { ladder.level(k)? };
            let e = mesh.evaluate(&field, SolveMode::Reference, upper)?;
            let m = &mesh.ctx.mesh;
            rows.push(ConvergenceRow {
                ladder: name.into(),
                mesh: k,
                dofs: m.dof_count(),
                cells: m.n_leaves(),
                smallest_cell: m.smallest_cell_size(),
                qoi: e.qoi,
                e_est: e.density.e_est,
                e_est_abs: e.density.e_est_abs,
                l1: e.density.l1,
                l_half: e.density.l_half,
            });
        }
    }
    Ok(rows)
}

/// `n` samples on each of the levels `0..levels`, keeping every sample.
pub fn level_records(sampler: &Sampler, levels: usize, n: u64) -> Result<Vec<LevelRecord>> {
    (0..levels).map(|l| sample_level(sampler, l, 0..n, n as usize)).collect()
}

/// `n` samples on each of the levels `0..levels`, all levels drawing the
/// same `n` coefficients. Ratios between levels are then free of the
/// between-level sampling noise, which dominates for heavy-tailed
/// coefficients.
pub fn coupled_level_records(sampler: &Sampler, levels: usize, n: u64) -> Result<Vec<LevelRecord>> {
    (0..levels)
        .map(|l| {
            let samples = (0..n).into_par_iter().map(|i| sampler.sample_from_stream(l, 0, i)).collect::<Result<Vec<_>>>()?;
            let mut rec = LevelRecord::new(l);
            for s in &samples {
                rec.push(s, n as usize);
            }
            Ok(rec)
        })
        .collect()
}

/// Per-level decay factors of `|E_l|` and `V_l`, from a least-squares fit
/// of their base-2 logarithms over levels `1..`.
pub fn decay_factors(records: &[LevelRecord]) -> (f64, f64) {
    let fit = |f: &dyn Fn(&LevelRecord) -> f64| {
        let pts: Vec<(f64, f64)> = records.iter().skip(1).map(|r| (r.level as f64, f(r).log2())).collect();
        2f64.powf(-analysis::linear_fit(&pts).0)
    };
    (fit(&|r| r.mean.abs()), fit(&LevelRecord::variance))
}

/// `K1 = e_est / TOL_l` of every logged sample on levels `1..`, grouped by
/// level.
pub fn k1_by_level(records: &[LevelRecord], level_tol: impl Fn(usize) -> f64) -> Vec<Vec<f64>> {
    records.iter().skip(1).map(|r| r.log.iter().map(|s| s.e_est / level_tol(s.level)).collect()).collect()
}

/// Mean over levels of the sample variance of `K1`.
pub fn pooled_var_k1(k1: &[Vec<f64>]) -> f64 {
    let v: Vec<f64> = k1.iter().filter(|x| x.len() > 1).map(|x| variance(x)).collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub level: usize,
    pub tol: f64,
    pub measured: f64,
    pub predicted: f64,
    pub ratio: f64,
}

pub fn variance_table(records: &[LevelRecord], level_tol: impl Fn(usize) -> f64, c: f64, var_k1: f64) -> Vec<VarianceRow> {
    records
        .iter()
        .skip(1)
        .map(|r| {
            let tol = level_tol(r.level);
            let predicted = analysis::predicted_level_variance(tol, c, var_k1);
            let measured = r.variance();
            VarianceRow { level: r.level, tol, measured, predicted, ratio: measured / predicted }
        })
        .collect()
}

/// Bounded error densities of `n` coefficient draws on hierarchy mesh `k`.
pub fn sample_densities(setup: &Setup, hierarchy: &MeshHierarchy, k: usize, n: usize, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let coef = setup.coefficient()?;
    let mesh = hierarchy.level(k)?;
    let upper = setup.adapt.upper_bound;
    let rho = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let field = coef.draw(&mut sample_rng(seed, DENSITY_TAG, k as u32, i))?;
            Ok(mesh.evaluate(&field, SolveMode::Reference, upper)?.density.rho_bar)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rho, mesh.ctx.sizes.clone()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub example: Example,
    pub sigma2: f64,
    pub density_mesh: usize,
    pub density_samples: usize,
    pub bias_tol: f64,
    pub work_models: WorkModels,
    pub jensen_slack: f64,
    pub k3_fully_adaptive: f64,
    pub inputs: ComplexityInputs,
    pub constants: ComplexityConstants,
    pub variance: Vec<VarianceRow>,
    pub decay_e: f64,
    pub decay_v: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub density_mesh: usize,
    pub density_samples: usize,
    pub levels: usize,
    pub samples_per_level: u64,
    pub bias_tol: f64,
    pub theta: f64,
    pub c_xi: f64,
    pub seed: u64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { density_mesh: 2, density_samples: 100, levels: 5, samples_per_level: 200, bias_tol: 1.0 / 32.0, theta: 0.5, c_xi: 1.96, seed: 1 }
    }
}

/// Work models and complexity constants from sampled densities, and the
/// measured-versus-model AMLMC level variances.
pub fn model_report(setup: &Setup, hierarchy: Arc<MeshHierarchy>, cfg: &ReportConfig) -> Result<ModelReport> {
    let (rho, h) = sample_densities(setup, &hierarchy, cfg.density_mesh, cfg.density_samples, cfg.seed)?;
    let stats = DensityStats::new(&rho, &h)?;
    let wm = analysis::work_models(&stats, cfg.bias_tol);
    let sampler = setup.sampler(Scheme::Amlmc, cfg.seed, Some(hierarchy.clone()))?;
    let records = level_records(&sampler, cfg.levels, cfg.samples_per_level)?;
    let lt = setup.level_tolerances();
    let k1 = k1_by_level(&records, |l| lt.tol(l));
    let var_k1 = pooled_var_k1(&k1);
    let cells: Vec<usize> = records
        .iter()
        .skip(1)
        .flat_map(|r| r.log.iter().map(|s| hierarchy.level(s.k_fine).map(|m| m.ctx.n_cells() as f64 * lt.tol(s.level))))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .map(|x| x.round() as usize)
        .collect();
    let mean_k2 = cells.iter().sum::<usize>() as f64 / cells.len().max(1) as f64;
    let inputs = ComplexityInputs {
        var_k1,
        mean_k2,
        v0: records.first().map(LevelRecord::variance).unwrap_or(0.0),
        c: lt.ratio,
        tol0: lt.first,
        theta: cfg.theta,
        c_xi: cfg.c_xi,
        d: 2,
        p: 2,
    };
    let (decay_e, decay_v) = decay_factors(&records);
    Ok(ModelReport {
        example: setup.example,
        sigma2: setup.sigma2,
        density_mesh: cfg.density_mesh,
        density_samples: cfg.density_samples,
        bias_tol: cfg.bias_tol,
        jensen_slack: wm.jensen_slack(),
        work_models: wm,
        k3_fully_adaptive: analysis::k3_fully_adaptive(&stats),
        constants: analysis::complexity_constants(&inputs),
        inputs,
        variance: variance_table(&records, |l| lt.tol(l), lt.ratio, var_k1),
        decay_e,
        decay_v,
    })
}

/// Sampler for realization `r` of a sweep; AMLMC re-estimates its scaling
/// denominator with the realization's seed.
pub fn realization_sampler(setup: &Setup, template: &Sampler, seed: u64) -> Result<Sampler> {
    match template.scheme() {
        Scheme::Smlmc => Ok(Sampler { seed, ..template.clone() }),
        Scheme::Amlmc => {
            let crate::mlmc::LevelSource::Adaptive { hierarchy, .. } = &template.source else { unreachable!() };
            setup.sampler(Scheme::Amlmc, seed, Some(hierarchy.clone()))
        }
    }
}

/// Seed of realization `r` in a sweep started from `seed`.
pub fn realization_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add(r as u64)
}

/// Runs `realizations` independent estimators per tolerance.
pub fn sweep(
    setup: &Setup,
    template: &Sampler,
    base: &EstimatorConfig,
    tols: &[f64],
    realizations: usize,
    reference: Option<f64>,
    mut on_result: impl FnMut(usize, usize, &MlmcResult),
) -> Result<Vec<WorkRow>> {
    let mut rows = Vec::new();
    for (i, &tol) in tols.iter().enumerate() {
        for r in 0..realizations {
            let seed = realization_seed(base.seed, r);
            let sampler = realization_sampler(setup, template, seed)?;
            let cfg = EstimatorConfig { tol, seed, ..*base };
            let res = run_estimator(&cfg, &sampler).map_err(|e| match e {
                Error::InvalidParameter(m) => Error::InvalidParameter(format!("tol {tol}, realization {r}: {m}")),
                other => other,
            })?;
            rows.push(WorkRow {
                tol,
                realization: r,
                estimate: res.estimate,
                error: reference.map_or(f64::NAN, |q| res.estimate - q),
                levels: res.levels.len(),
                total_work: res.total_work,
                sqrt_work_tol2: (res.total_work * tol * tol).sqrt(),
            });
            on_result(i, r, &res);
        }
    }
    Ok(rows)
}

/// Goal value of the unit coefficient on hierarchy mesh `k`, corrected by
/// its error estimate.
pub fn unit_reference(hierarchy: &MeshHierarchy, k: usize, upper: bool) -> Result<f64> {
    let u = hierarchy.level(k)?.unit_summary(upper)?;
    Ok(u.qoi + u.e_est)
}

/// Exact mean for the examples whose mean follows from the unit solution:
/// `Q1 / e^2` for example 0 and `Q1 exp(sigma^2 / 2)` for example 1.
pub fn closed_form_mean(setup: &Setup, unit_qoi: f64) -> Option<f64> {
    match setup.example {
        Example::Deterministic => Some(unit_qoi / std::f64::consts::E.powi(2)),
        Example::LognormalConstant => Some(unit_qoi * (0.5 * setup.sigma2).exp()),
        Example::Matern => None,
    }
}
