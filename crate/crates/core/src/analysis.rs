//! Closed-form mesh, work and complexity models evaluated on sampled error
//! densities. All expectations are plain Monte Carlo means. The models are
//! written for order `p = 2` elements in `d = 2` dimensions unless a
//! function takes the dimensions explicitly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares line through `(x, y)` points, returned as `(slope, intercept)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).collect();
    linear_fit(&pts).0
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Densities of several samples on one common mesh.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityStats {
    /// Cell sizes of the common mesh.
    pub h: Vec<f64>,
    pub area: f64,
    /// `int |rho|^(1/2)` per sample.
    pub sqrt_integrals: Vec<f64>,
    /// `int |rho|` per sample.
    pub l1: Vec<f64>,
    /// Sample mean of `|rho|` per cell.
    pub mean_abs: Vec<f64>,
}

impl DensityStats {
    pub fn new(samples: &[Vec<f64>], h: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("no density samples".into()));
        }
        let mut mean_abs = vec![0.0; h.len()];
        let mut sqrt_integrals = Vec::with_capacity(samples.len());
        let mut l1 = Vec::with_capacity(samples.len());
        for rho in samples {
            if rho.len() != h.len() {
                return Err(Error::Dimension { expected: h.len(), got: rho.len() });
            }
            let mut s = 0.0;
            let mut a = 0.0;
            for ((r, h), m) in rho.iter().zip(h).zip(mean_abs.iter_mut()) {
                s += r.abs().sqrt() * h * h;
                a += r.abs() * h * h;
                *m += r.abs() / samples.len() as f64;
            }
            sqrt_integrals.push(s);
            l1.push(a);
        }
        let area = h.iter().map(|h| h * h).sum();
        Ok(Self { h: h.to_vec(), area, sqrt_integrals, l1, mean_abs })
    }

    /// `int E[|rho|^(1/2)]`, the scaling denominator.
    pub fn mean_sqrt_integral(&self) -> f64 {
        mean(&self.sqrt_integrals)
    }
}

/// Optimal sample-dependent mesh size for one density sample.
pub fn optimal_h_stochastic(rho: &[f64], tol: f64, mean_sqrt_integral: f64) -> Vec<f64> {
    let scale = (tol / mean_sqrt_integral).sqrt();
    rho.iter().map(|r| scale * r.abs().powf(-0.25)).collect()
}

/// Optimal uniform mesh size per sample from the sampled `int |rho|`.
pub fn optimal_h_uniform(l1: &[f64], tol: f64) -> Vec<f64> {
    let m = mean(&l1.iter().map(|x| x.sqrt()).collect::<Vec<_>>());
    l1.iter().map(|x| tol.sqrt() * x.powf(-0.25) / m.sqrt()).collect()
}

/// Expected cell counts of the four optimal strategies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkModels {
    /// Sample-dependent adaptive meshes.
    pub stochastic: f64,
    /// Sample-dependent uniform meshes.
    pub uniform_stochastic: f64,
    /// One adaptive mesh for all samples.
    pub deterministic: f64,
    /// One uniform mesh for all samples.
    pub uniform_deterministic: f64,
}

impl WorkModels {
    /// Largest relative violation of the ordering
    /// `stochastic <= {uniform_stochastic, deterministic} <= uniform_deterministic`.
    pub fn jensen_slack(&self) -> f64 {
        let rel = |a: f64, b: f64| ((a - b) / b.abs().max(f64::MIN_POSITIVE)).max(0.0);
        rel(self.stochastic, self.uniform_stochastic)
            .max(rel(self.stochastic, self.deterministic))
            .max(rel(self.uniform_stochastic, self.uniform_deterministic))
            .max(rel(self.deterministic, self.uniform_deterministic))
    }
}

pub fn work_models(stats: &DensityStats, tol: f64) -> WorkModels {
    let stochastic = stats.mean_sqrt_integral().powi(2) / tol;
    let uniform_stochastic = mean(&stats.l1.iter().map(|x| x.sqrt()).collect::<Vec<_>>()).powi(2) * stats.area / tol;
    let det: f64 = stats.mean_abs.iter().zip(&stats.h).map(|(m, h)| m.sqrt() * h * h).sum();
    let deterministic = det * det / tol;
    let uniform_deterministic = mean(&stats.l1) * stats.area / tol;
    WorkModels { stochastic, uniform_stochastic, deterministic, uniform_deterministic }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `d < 2p`: work `TOL^-2`.
    Below,
    /// `d = 2p`: work `TOL^-2 log(1/TOL)^2`.
    Critical,
    /// `d > 2p`: work `TOL^-d/p`.
    Above,
}

impl Regime {
    pub fn from_dims(d: u32, p: u32) -> Self {
        match d.cmp(&(2 * p)) {
            std::cmp::Ordering::Less => Regime::Below,
            std::cmp::Ordering::Equal => Regime::Critical,
            std::cmp::Ordering::Greater => Regime::Above,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityInputs {
    pub var_k1: f64,
    pub mean_k2: f64,
    /// Variance of the level-0 goal value.
    pub v0: f64,
    pub c: f64,
    pub tol0: f64,
    pub theta: f64,
    pub c_xi: f64,
    pub d: u32,
    pub p: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityConstants {
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k: f64,
    pub regime: Regime,
    /// Zero variance of `K1`, e.g. a deterministic coefficient.
    pub degenerate: bool,
}

pub fn k4(regime: Regime, x: &ComplexityInputs) -> f64 {
    let dp = x.d as f64 / x.p as f64;
    match regime {
        Regime::Below => {
            let e = 1.0 - dp / 2.0;
            let first = if x.var_k1 > 0.0 { (x.v0 / x.var_k1).sqrt() / ((1.0 / x.c - 1.0) * (1.0 + x.c.powf(dp)).sqrt()) } else { f64::INFINITY };
            x.tol0.powf(-dp) * (first + x.tol0 * x.c.powf(e) / (1.0 - x.c.powf(e))).powi(2)
        }
        Regime::Critical => x.c.ln().powi(-2),
        Regime::Above => (1.0 - x.theta).powf(2.0 - dp) * (1.0 - x.c.powf(dp / 2.0 - 1.0)).powi(-2),
    }
}

pub fn k5(c: f64, theta: f64, c_xi: f64, d: u32, p: u32) -> f64 {
    let dp = d as f64 / p as f64;
    (c_xi / theta).powi(2) * (1.0 / c - 1.0).powi(2) * (1.0 + c.powf(dp))
}

pub fn complexity_constants(x: &ComplexityInputs) -> ComplexityConstants {
    let regime = Regime::from_dims(x.d, x.p);
    let k3 = x.mean_k2 * x.var_k1;
    let degenerate = x.var_k1 == 0.0;
    let k4v = if degenerate { 0.0 } else { k4(regime, x) };
    let k5v = k5(x.c, x.theta, x.c_xi, x.d, x.p);
    ComplexityConstants { k3, k4: k4v, k5: k5v, k: k3 * k4v * k5v, regime, degenerate }
}

/// `Var[K1]` and `E[K2]` from accepted samples: `K1 = e_est / tol` and
/// `K2 = cells * tol`, since mesh sizes scale as `tol^(1/2) f`.
pub fn k_moments(e_est: &[f64], cells: &[usize], tol: f64) -> (f64, f64) {
    let k1: Vec<f64> = e_est.iter().map(|e| e / tol).collect();
    let k2 = cells.iter().map(|&n| n as f64 * tol).sum::<f64>() / cells.len().max(1) as f64;
    (variance(&k1), k2)
}

/// Model variance of `Q_l - Q_{l-1}` for tolerance ratio `c`.
pub fn predicted_level_variance(tol_l: f64, c: f64, var_k1: f64) -> f64 {
    tol_l * tol_l * (1.0 / c - 1.0).powi(2) * var_k1
}

/// `K3` for sample-dependent adaptive meshes,
/// `||rho||_{L1/2(D x Omega)} cV(Y)^2` with `Y = int |rho|^(1/2)`. In two
/// dimensions with `p = 2` this collapses to `Var[Y]`.
pub fn k3_fully_adaptive(stats: &DensityStats) -> f64 {
    variance(&stats.sqrt_integrals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 3.0 - 2.0 * i as f64)).collect();
        let (s, c) = linear_fit(&pts);
        assert!((s + 2.0).abs() < 1e-12 && (c - 3.0).abs() < 1e-12);
    }

    #[test]
    fn k5_reference_value() {
        let v = k5(0.25, 0.5, 1.96, 2, 2);
        assert!((v - 172.872).abs() < 1e-3, "{v}");
    }

    #[test]
    fn critical_k4() {
        let x = ComplexityInputs { var_k1: 1.0, mean_k2: 1.0, v0: 1.0, c: 0.25, tol0: 2.0, theta: 0.5, c_xi: 1.96, d: 4, p: 2 };
        assert!((k4(Regime::Critical, &x) - 0.5204).abs() < 1e-4);
        assert_eq!(Regime::from_dims(2, 2), Regime::Below);
        assert_eq!(Regime::from_dims(4, 2), Regime::Critical);
        assert_eq!(Regime::from_dims(3, 1), Regime::Above);
    }

    #[test]
    fn constant_density_models_coincide() {
        let h = vec![0.5; 8];
        let stats = DensityStats::new(&[vec![2.0; 8], vec![2.0; 8]], &h).unwrap();
        let w = work_models(&stats, 0.1);
        for v in [w.uniform_stochastic, w.deterministic, w.uniform_deterministic] {
            assert!((v - w.stochastic).abs() < 1e-12 * v);
        }
        let hs = optimal_h_stochastic(&[2.0; 8], 0.1, stats.mean_sqrt_integral());
        let expect = (0.1f64 / (2.0 * 2.0)).sqrt();
        assert!(hs.iter().all(|x| (x - expect).abs() < 1e-12));
    }

    #[test]
    fn variance_model_scales_quadratically() {
        assert_eq!(predicted_level_variance(0.5, 0.25, 0.0), 0.0);
        let a = predicted_level_variance(0.1, 0.25, 2.0);
        let b = predicted_level_variance(0.4, 0.25, 2.0);
        assert!((b / a - 16.0).abs() < 1e-12);
    }
}
