//! Multilevel Monte Carlo on uniform ladders (SMLMC) and on stochastically
//! accepted adaptive meshes (AMLMC).

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::{LevelMesh, MeshHierarchy, ToleranceSequence, UniformLadder};
use crate::context::{SolveMode, WorkUnits};
use crate::error::{Error, Result};
use crate::field::{sample_rng, Coefficient, FieldSample};

/// Samples are drawn in fixed chunks so that reductions do not depend on
/// the thread count.
const CHUNK: u64 = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Smlmc,
    Amlmc,
}

impl Scheme {
    fn stream_tag(self) -> u8 {
        match self {
            Scheme::Smlmc => 1,
            Scheme::Amlmc => 2,
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "smlmc" => Ok(Scheme::Smlmc),
            "amlmc" => Ok(Scheme::Amlmc),
            _ => Err(Error::InvalidParameter(format!("unknown scheme {s:?}"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Smlmc => "smlmc",
            Scheme::Amlmc => "amlmc",
        })
    }
}

const PILOT_TAG: u8 = 3;

/// Level tolerances `2 4^-l` for moderate variance and `4^(1-l)` above.
pub fn default_level_tolerances(sigma2: f64) -> ToleranceSequence {
    if sigma2 > 1.0 {
        ToleranceSequence { first: 4.0, ratio: 0.25 }
    } else {
        ToleranceSequence { first: 2.0, ratio: 0.25 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub tol: f64,
    /// Share of the tolerance given to the statistical error.
    pub theta: f64,
    pub c_xi: f64,
    pub level_tols: ToleranceSequence,
    pub scheme: Scheme,
    pub warmup: u64,
    pub max_levels: usize,
    pub seed: u64,
    /// Per-sample records kept per level for logging.
    pub sample_log: usize,
}

impl EstimatorConfig {
    pub fn new(scheme: Scheme, tol: f64, sigma2: f64, seed: u64) -> Self {
        Self {
            tol,
            theta: 0.5,
            c_xi: 1.96,
            level_tols: default_level_tolerances(sigma2),
            scheme,
            warmup: 20,
            max_levels: 12,
            seed,
            sample_log: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad("tolerance must be positive");
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad("splitting parameter must lie in (0, 1)");
        }
        if !(self.c_xi > 0.0) {
            return bad("confidence constant must be positive");
        }
        if !(self.level_tols.first > 0.0 && self.level_tols.ratio > 0.0 && self.level_tols.ratio < 1.0) {
            return bad("level tolerance ratio must lie in (0, 1)");
        }
        if self.warmup < 2 {
            return bad("at least two warm-up samples per level are needed");
        }
        if self.max_levels == 0 {
            return bad("max_levels must be positive");
        }
        Ok(())
    }

    pub fn bias_budget(&self) -> f64 {
        (1.0 - self.theta) * self.tol
    }

    /// Number of the finest AMLMC level: the first whose tolerance fits the
    /// bias budget.
    pub fn amlmc_finest_level(&self) -> Result<usize> {
        let budget = self.bias_budget();
        (0..self.max_levels)
            .find(|&l| self.level_tols.tol(l) <= budget)
            .ok_or_else(|| Error::InvalidParameter(format!("tolerance {} needs more than {} levels", self.tol, self.max_levels)))
    }
}

/// One generated difference `Q_l - Q_{l-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub level: usize,
    pub n: u64,
    pub q_fine: f64,
    pub q_coarse: f64,
    /// Auxiliary mesh of the coarse value, absent on level 0.
    pub k_coarse: Option<usize>,
    pub k_fine: usize,
    /// Signed error estimate on the fine mesh.
    pub e_est: f64,
    /// The coefficient value when it is spatially constant.
    pub constant: Option<f64>,
    pub work: WorkUnits,
}

impl Sample {
    pub fn delta(&self) -> f64 {
        self.q_fine - self.q_coarse
    }
}

#[derive(Clone, Copy, Debug)]
struct Outcome {
    qoi: f64,
    e_est: f64,
    numerator: f64,
    work: WorkUnits,
}

fn evaluate(mesh: &LevelMesh, field: &FieldSample, mode: SolveMode, fast: bool, upper: bool) -> Result<Outcome> {
    if let (true, Some(a)) = (fast, field.as_constant()) {
        let u = mesh.unit_summary(upper)?;
        return Ok(Outcome { qoi: u.qoi / a, e_est: u.e_est / a, numerator: u.scaling_numerator / a.sqrt(), work: u.work });
    }
    let e = mesh.evaluate(field, mode, upper)?;
    Ok(Outcome { qoi: e.qoi, e_est: e.density.e_est, numerator: e.density.scaling_numerator, work: e.work })
}

#[derive(Debug, Clone)]
pub enum LevelSource {
    /// Level `l` uses uniform mesh `l` of the ladder.
    Uniform(Arc<UniformLadder>),
    /// Level `l` accepts auxiliary meshes against `level_tols.tol(l)`.
    Adaptive { hierarchy: Arc<MeshHierarchy>, level_tols: ToleranceSequence, r: f64 },
}

/// Draws coupled sample pairs for one coefficient model and level source.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub coefficient: Coefficient,
    pub source: LevelSource,
    pub seed: u64,
    /// Reuse unit-coefficient solutions when the coefficient is constant in
    /// space; the goal value then scales with `1/a`.
    pub constant_fast_path: bool,
    pub upper_bound: bool,
}

/// Mean of the scaling numerator on the first auxiliary mesh.
pub fn pilot_r(hierarchy: &MeshHierarchy, coefficient: &Coefficient, n_pilot: usize, seed: u64, fast: bool) -> Result<f64> {
    if n_pilot == 0 {
        return Err(Error::InvalidParameter("pilot needs at least one sample".into()));
    }
    let mesh = hierarchy.level(0)?;
    let upper = hierarchy.config().params.upper_bound;
    let vals = (0..n_pilot as u64)
        .into_par_iter()
        .map(|n| {
            let mut rng = sample_rng(seed, PILOT_TAG, 0, n);
            let field = coefficient.draw(&mut rng)?;
            Ok(evaluate(&mesh, &field, SolveMode::Reference, fast, upper)?.numerator)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.iter().sum::<f64>() / n_pilot as f64)
}

impl Sampler {
    pub fn smlmc(coefficient: Coefficient, ladder: Arc<UniformLadder>, seed: u64) -> Self {
        Self { coefficient, source: LevelSource::Uniform(ladder), seed, constant_fast_path: true, upper_bound: false }
    }

    /// Builds an AMLMC sampler, estimating the scaling denominator from
    /// `n_pilot` draws on the first auxiliary mesh.
    pub fn amlmc(coefficient: Coefficient, hierarchy: Arc<MeshHierarchy>, level_tols: ToleranceSequence, n_pilot: usize, seed: u64) -> Result<Self> {
        let r = pilot_r(&hierarchy, &coefficient, n_pilot, seed, true)?;
        let upper_bound = hierarchy.config().params.upper_bound;
        Ok(Self { coefficient, source: LevelSource::Adaptive { hierarchy, level_tols, r }, seed, constant_fast_path: true, upper_bound })
    }

    pub fn scheme(&self) -> Scheme {
        match self.source {
            LevelSource::Uniform(_) => Scheme::Smlmc,
            LevelSource::Adaptive { .. } => Scheme::Amlmc,
        }
    }

    pub fn pilot(&self) -> Option<f64> {
        match self.source {
            LevelSource::Adaptive { r, .. } => Some(r),
            LevelSource::Uniform(_) => None,
        }
    }

    /// Sample `n` of level `level`; the same key always gives the same pair.
    pub fn sample(&self, level: usize, n: u64) -> Result<Sample> {
        self.sample_from_stream(level, level, n)
    }

    /// Like [`Sampler::sample`] but draws the coefficient from the stream of
    /// level `stream`. Using one stream for every level couples the levels,
    /// which suits rate diagnostics but not the estimator.
    pub fn sample_from_stream(&self, level: usize, stream: usize, n: u64) -> Result<Sample> {
        let mut rng = sample_rng(self.seed, self.scheme().stream_tag(), stream as u32, n);
        let field = self.coefficient.draw(&mut rng)?;
        let constant = field.as_constant();
        let fast = self.constant_fast_path;
        match &self.source {
            LevelSource::Uniform(ladder) => {
                let fine = evaluate(&*ladder.level(level)?, &field, SolveMode::Reference, fast, self.upper_bound)?;
                let (q_coarse, k_coarse, mut work) = if level == 0 {
                    (0.0, None, WorkUnits::default())
                } else {
                    let c = evaluate(&*ladder.level(level - 1)?, &field, SolveMode::Reference, fast, self.upper_bound)?;
                    (c.qoi, Some(level - 1), c.work)
                };
                work += fine.work;
                Ok(Sample { level, n, q_fine: fine.qoi, q_coarse, k_coarse, k_fine: level, e_est: fine.e_est, constant, work })
            }
            LevelSource::Adaptive { hierarchy, level_tols, r } => {
                let tol_fine = level_tols.tol(level);
                let tol_coarse = if level > 0 { Some(level_tols.tol(level - 1)) } else { None };
                let mut coarse: Option<(f64, usize)> = None;
                let mut prev_scale = f64::NAN;
                let mut work = WorkUnits::default();
                for k in 0.. {
                    let mesh = hierarchy.level(k).map_err(|e| match e {
                        Error::HierarchyExhausted { depth, .. } => {
                            Error::HierarchyExhausted { depth, key: format!("seed {} level {level} sample {n}", self.seed) }
                        }
                        other => other,
                    })?;
                    let mode = if k == 0 { SolveMode::Reference } else { SolveMode::Iterative { tol_iter: prev_scale * tol_fine / 10.0 } };
                    let out = evaluate(&mesh, &field, mode, fast, self.upper_bound)?;
                    work += out.work;
                    let scale = out.numerator / r;
                    if !out.qoi.is_finite() || !scale.is_finite() {
                        return Err(Error::NonFinite(format!("sample {n} on level {level}, mesh {k}")));
                    }
                    if let (None, Some(tc)) = (coarse, tol_coarse) {
                        if out.e_est.abs() < scale * tc {
                            coarse = Some((out.qoi, k));
                        }
                    }
                    if out.e_est.abs() < scale * tol_fine {
                        let (q_coarse, k_coarse) = match coarse {
                            Some((q, kc)) => (q, Some(kc)),
                            None => (0.0, None),
                        };
                        return Ok(Sample { level, n, q_fine: out.qoi, q_coarse, k_coarse, k_fine: k, e_est: out.e_est, constant, work });
                    }
                    prev_scale = scale;
                }
                unreachable!("acceptance loop only exits by returning")
            }
        }
    }
}

/// Streaming statistics of one level. Merging is a fixed-order reduction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub count: u64,
    pub mean: f64,
    /// Sum of squared deviations from the mean.
    pub m2: f64,
    pub work: WorkUnits,
    /// Counts of `(coarse mesh, fine mesh)` pairs; level 0 records `None`.
    pub pairs: BTreeMap<(Option<usize>, usize), u64>,
    /// Samples whose difference is exactly zero.
    pub zeros: u64,
    pub log: Vec<Sample>,
}

impl LevelRecord {
    pub fn new(level: usize) -> Self {
        Self { level, ..Default::default() }
    }

    pub fn push(&mut self, s: &Sample, keep: usize) {
        let x = s.delta();
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
        self.work += s.work;
        *self.pairs.entry((s.k_coarse, s.k_fine)).or_insert(0) += 1;
        if x == 0.0 {
            self.zeros += 1;
        }
        if self.log.len() < keep {
            self.log.push(s.clone());
        }
    }

    pub fn merge(&mut self, o: &LevelRecord, keep: usize) {
        if o.count == 0 {
            return;
        }
        if self.count == 0 {
            let level = self.level;
            *self = o.clone();
            self.level = level;
            self.log.truncate(keep);
            return;
        }
        let (na, nb) = (self.count as f64, o.count as f64);
        let n = na + nb;
        let d = o.mean - self.mean;
        self.mean += d * nb / n;
        self.m2 += o.m2 + d * d * na * nb / n;
        self.count += o.count;
        self.work += o.work;
        for (k, v) in &o.pairs {
            *self.pairs.entry(*k).or_insert(0) += v;
        }
        self.zeros += o.zeros;
        let room = keep.saturating_sub(self.log.len());
        self.log.extend(o.log.iter().take(room).cloned());
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn mean_work(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.work.total() / self.count as f64
        }
    }
}

/// Draws samples `range` of one level and reduces them in chunk order.
pub fn sample_level(sampler: &Sampler, level: usize, range: std::ops::Range<u64>, keep: usize) -> Result<LevelRecord> {
    let chunks: Vec<(u64, u64)> = (range.start..range.end)
        .step_by(CHUNK as usize)
        .map(|s| (s, (s + CHUNK).min(range.end)))
        .collect();
    let parts = chunks
        .par_iter()
        .map(|&(a, b)| {
            let mut rec = LevelRecord::new(level);
            for n in a..b {
                rec.push(&sampler.sample(level, n)?, keep);
            }
            Ok(rec)
        })
        .collect::<Result<Vec<LevelRecord>>>()?;
    let mut out = LevelRecord::new(level);
    for p in &parts {
        out.merge(p, keep);
    }
    Ok(out)
}

/// `M_l = ceil((c_xi / (theta tol))^2 sqrt(V_l / W_l) sum_k sqrt(W_k V_k))`,
/// at least one.
pub fn optimal_counts(v: &[f64], w: &[f64], tol: f64, theta: f64, c_xi: f64) -> Result<Vec<u64>> {
    if v.len() != w.len() {
        return Err(Error::Dimension { expected: v.len(), got: w.len() });
    }
    if v.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::NonFinite("level variances must be finite and nonnegative, work positive".into()));
    }
    let sum: f64 = v.iter().zip(w).map(|(v, w)| (v * w).sqrt()).sum();
    let c = (c_xi / (theta * tol)).powi(2);
    Ok(v.iter().zip(w).map(|(v, w)| ((c * (v / w).sqrt() * sum).ceil() as u64).max(1)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    pub mean: f64,
    /// `|mean|`.
    pub e: f64,
    pub v: f64,
    pub w: f64,
    pub m: u64,
    pub mean_ci: (f64, f64),
    pub v_ci: (f64, f64),
}

/// Sample means and variances with normal-approximation 95% intervals.
pub fn level_stats(records: &[LevelRecord]) -> Vec<LevelStats> {
    const Z: f64 = 1.96;
    records
        .iter()
        .map(|r| {
            let v = r.variance();
            let m = r.count.max(1) as f64;
            let half = Z * (v / m).sqrt();
            let v_half = if r.count > 1 { Z * v * (2.0 / (m - 1.0)).sqrt() } else { 0.0 };
            LevelStats {
                level: r.level,
                mean: r.mean,
                e: r.mean.abs(),
                v,
                w: r.mean_work(),
                m: r.count,
                mean_ci: (r.mean - half, r.mean + half),
                v_ci: ((v - v_half).max(0.0), v + v_half),
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlmcResult {
    pub scheme: Scheme,
    pub tol: f64,
    pub estimate: f64,
    pub levels: Vec<LevelRecord>,
    /// Work units actually spent on all samples.
    pub total_work: f64,
    /// `c_xi sqrt(sum V_l / M_l)`.
    pub stat_error: f64,
    /// Bias bound used to choose the finest level.
    pub bias_bound: f64,
    pub pilot: Option<f64>,
}

/// Extrapolated bias `|E[Q - Q_L]|` from the two finest level means,
/// assuming geometric decay at their observed rate.
pub fn extrapolated_bias(e: &[f64]) -> Option<f64> {
    let [.., prev, last] = e else { return None };
    if e.len() < 3 || *prev <= 0.0 || *last <= 0.0 {
        return None;
    }
    let q = (last / prev).clamp(2f64.powi(-4), 2f64.powf(-0.25));
    Some(last * q / (1.0 - q))
}

/// Full estimator: choose the finest level, warm up, allocate once, top up.
pub fn run_estimator(config: &EstimatorConfig, sampler: &Sampler) -> Result<MlmcResult> {
    config.validate()?;
    if sampler.scheme() != config.scheme {
        return Err(Error::InvalidParameter(format!("sampler scheme {} does not match {}", sampler.scheme(), config.scheme)));
    }
    let keep = config.sample_log;
    let warm = |l: usize| sample_level(sampler, l, 0..config.warmup, keep);
    let mut records: Vec<LevelRecord> = Vec::new();
    let bias_bound;
    match config.scheme {
        Scheme::Amlmc => {
            let finest = config.amlmc_finest_level()?;
            for l in 0..=finest {
                records.push(warm(l)?);
            }
            bias_bound = config.level_tols.tol(finest);
        }
        Scheme::Smlmc => {
            for l in 0..3.min(config.max_levels) {
                records.push(warm(l)?);
            }
            loop {
                let e: Vec<f64> = records.iter().map(|r| r.mean.abs()).collect();
                let bias = extrapolated_bias(&e).unwrap_or(f64::INFINITY);
                if bias <= config.bias_budget() {
                    bias_bound = bias;
                    break;
                }
                if records.len() >= config.max_levels {
                    return Err(Error::InvalidParameter(format!(
                        "bias estimate {bias:.3e} above budget {:.3e} with {} levels",
                        config.bias_budget(),
                        records.len()
                    )));
                }
                records.push(warm(records.len())?);
            }
        }
    }
    let v: Vec<f64> = records.iter().map(LevelRecord::variance).collect();
    let w: Vec<f64> = records.iter().map(|r| r.mean_work().max(f64::MIN_POSITIVE)).collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("warm-up variance".into()));
    }
    let m = optimal_counts(&v, &w, config.tol, config.theta, config.c_xi)?;
    for (l, rec) in records.iter_mut().enumerate() {
        if m[l] > rec.count {
            let extra = sample_level(sampler, l, rec.count..m[l], keep)?;
            rec.merge(&extra, keep);
        }
    }
    let estimate = records.iter().map(|r| r.mean).sum();
    let total_work = records.iter().map(|r| r.work.total()).sum();
    let var: f64 = records.iter().map(|r| r.variance() / r.count as f64).sum();
    Ok(MlmcResult {
        scheme: config.scheme,
        tol: config.tol,
        estimate,
        levels: records,
        total_work,
        stat_error: config.c_xi * var.sqrt(),
        bias_bound,
        pilot: sampler.pilot(),
    })
}
