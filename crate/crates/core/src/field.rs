//! Diffusivity coefficients: constants, lognormal constants and lognormal
//! Matérn fields represented by a truncated Fourier series.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::mesh::Rect;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub sigma2: f64,
    pub nu: f64,
    pub corr_len: f64,
    /// Number of Fourier terms kept.
    pub modes: usize,
    /// Side of the periodic box the covariance is extended to.
    pub period: f64,
    /// Samples per side of the periodic box for the transform.
    pub grid: usize,
}

impl MaternParams {
    pub fn new(sigma2: f64) -> Self {
        Self { sigma2, nu: 6.5, corr_len: 1.0, modes: 256, period: 8.0, grid: 64 }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.sigma2 > 0.0 && self.nu > 0.0 && self.corr_len > 0.0 && self.modes >= 1;
        if !ok || self.grid < 4 || !(self.period > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid Matérn parameters {self:?}")));
        }
        Ok(())
    }
}

/// `z^nu K_nu(z)` by the trapezoid rule on `int_0^inf exp(-z cosh t) cosh(nu t) dt`.
pub fn scaled_bessel_k(nu: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return f64::INFINITY;
    }
    let ln_z = z.ln();
    let dt = 0.01;
    let log_term = |t: f64| {
        let nt = nu.abs() * t;
        let ln_cosh = nt + (-2.0 * nt).exp().ln_1p() - std::f64::consts::LN_2;
        nu * ln_z - z * t.cosh() + ln_cosh
    };
    let mut sum = 0.5 * log_term(0.0).exp();
    let mut t = dt;
    let mut prev = f64::NEG_INFINITY;
    loop {
        let lt = log_term(t);
        let term = lt.exp();
        sum += term;
        if lt < prev && term < 1e-18 * sum {
            break;
        }
        prev = lt;
        t += dt;
    }
    sum * dt
}

/// `z^nu K_nu(z)` in closed form for half-integer `nu = n + 1/2`.
pub fn scaled_bessel_k_half_integer(n: u32, z: f64) -> f64 {
    let nu = n as f64 + 0.5;
    let mut s = 0.0;
    for k in 0..=n {
        let ln_c = ln_gamma((n + k + 1) as f64) - ln_gamma((k + 1) as f64) - ln_gamma((n - k + 1) as f64);
        s += (ln_c - k as f64 * (2.0 * z).ln()).exp();
    }
    (std::f64::consts::PI / (2.0 * z)).sqrt() * (-z).exp() * s * z.powf(nu)
}

pub fn matern_covariance(h: f64, p: &MaternParams) -> f64 {
    let z = (2.0 * p.nu).sqrt() * h.abs() / p.corr_len;
    if z < 1e-12 {
        return p.sigma2;
    }
    let twice = 2.0 * p.nu;
    let zk = if (twice - twice.round()).abs() < 1e-12 && twice.round() as i64 % 2 == 1 {
        scaled_bessel_k_half_integer(((twice.round() as i64 - 1) / 2) as u32, z)
    } else {
        scaled_bessel_k(p.nu, z)
    };
    p.sigma2 / (2f64.powf(p.nu - 1.0) * gamma(p.nu)) * zk
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeKind {
    Constant,
    Cos,
    Sin,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    pub kx: i32,
    pub ky: i32,
    pub kind: ModeKind,
    pub lambda: f64,
}

/// Spectral weights of the periodized covariance and the kept modes.
///
/// Non-constant modes are `sqrt(2) cos` and `sqrt(2) sin` of `2 pi k.x / period`,
/// so the weights of all modes sum to the pointwise variance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FourierBasis {
    pub params: MaternParams,
    pub center: [f64; 2],
    /// Kept modes in non-increasing order of weight.
    pub modes: Vec<FourierMode>,
    /// Sum of all weights before truncation.
    pub total_weight: f64,
}

fn periodized_covariance(dx: f64, dy: f64, p: &MaternParams) -> f64 {
    let mut s = 0.0;
    for a in -2..=2 {
        for b in -2..=2 {
            let h = (dx - a as f64 * p.period).hypot(dy - b as f64 * p.period);
            s += matern_covariance(h, p);
        }
    }
    s
}

/// All modes of the periodic extension with their weights, unsorted.
pub fn spectral_modes(p: &MaternParams) -> Result<Vec<FourierMode>> {
    p.validate()?;
    let m = p.grid;
    let step = p.period / m as f64;
    let mut data: Vec<Complex64> = (0..m * m)
        .map(|idx| {
            let (i, j) = (idx % m, idx / m);
            Complex64::new(periodized_covariance(i as f64 * step, j as f64 * step, p), 0.0)
        })
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(m);
    for row in data.chunks_mut(m) {
        fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..m {
        for j in 0..m {
            col[j] = data[j * m + i];
        }
        fft.process(&mut col);
        for j in 0..m {
            data[j * m + i] = col[j];
        }
    }
    let norm = 1.0 / (m * m) as f64;
    let weight = |kx: i32, ky: i32| {
        let i = kx.rem_euclid(m as i32) as usize;
        let j = ky.rem_euclid(m as i32) as usize;
        data[j * m + i].re * norm
    };
    let max = data.iter().map(|c| c.re * norm).fold(0.0, f64::max);
    let half = (m / 2) as i32;
    let mut modes = Vec::with_capacity(m * m);
    for ky in -half + 1..half {
        for kx in -half + 1..half {
            // One representative of each conjugate pair.
            let upper = ky > 0 || (ky == 0 && kx > 0);
            if !(upper || (kx == 0 && ky == 0)) {
                continue;
            }
            let mut c = weight(kx, ky);
            if c < 0.0 {
                if c < -1e-10 * max {
                    return Err(Error::NegativeSpectrum { value: c, max });
                }
                c = 0.0;
            }
            if kx == 0 && ky == 0 {
                modes.push(FourierMode { kx, ky, kind: ModeKind::Constant, lambda: c });
            } else {
                modes.push(FourierMode { kx, ky, kind: ModeKind::Cos, lambda: c });
                modes.push(FourierMode { kx, ky, kind: ModeKind::Sin, lambda: c });
            }
        }
    }
    Ok(modes)
}

fn mode_order(a: &FourierMode, b: &FourierMode) -> std::cmp::Ordering {
    let key = |m: &FourierMode| (m.kx * m.kx + m.ky * m.ky, m.ky, m.kx, m.kind as u8);
    b.lambda.total_cmp(&a.lambda).then_with(|| key(a).cmp(&key(b)))
}

impl FourierBasis {
    pub fn new(p: MaternParams, domain: &Rect) -> Result<Self> {
        let mut modes = spectral_modes(&p)?;
        let total_weight = modes.iter().map(|m| m.lambda).sum();
        modes.sort_by(mode_order);
        modes.truncate(p.modes);
        let center = [0.5 * (domain.x0 + domain.x1), 0.5 * (domain.y0 + domain.y1)];
        Ok(Self { params: p, center, modes, total_weight })
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn theta(&self, mode: &FourierMode, x: [f64; 2]) -> f64 {
        let w = 2.0 * std::f64::consts::PI / self.params.period;
        let phase = w * (mode.kx as f64 * (x[0] - self.center[0]) + mode.ky as f64 * (x[1] - self.center[1]));
        match mode.kind {
            ModeKind::Constant => 1.0,
            ModeKind::Cos => std::f64::consts::SQRT_2 * phase.cos(),
            ModeKind::Sin => std::f64::consts::SQRT_2 * phase.sin(),
        }
    }

    /// Gaussian log-field `sum xi_i sqrt(lambda_i) theta_i(x)`, evaluated
    /// mode by mode.
    pub fn log_field_direct(&self, xi: &[f64], x: [f64; 2]) -> f64 {
        self.modes.iter().zip(xi).map(|(m, z)| z * m.lambda.sqrt() * self.theta(m, x)).sum()
    }
}

/// Per-frequency coefficients of one realization.
#[derive(Clone, Debug)]
pub struct FourierSample {
    basis: Arc<FourierBasis>,
    xi: Vec<f64>,
    constant: f64,
    /// `(kx, ky, cos coefficient, sin coefficient)`.
    terms: Vec<(i32, i32, f64, f64)>,
    kmax: i32,
}

impl FourierSample {
    pub fn new(basis: Arc<FourierBasis>, xi: Vec<f64>) -> Result<Self> {
        if xi.len() != basis.n_modes() {
            return Err(Error::Dimension { expected: basis.n_modes(), got: xi.len() });
        }
        let mut constant = 0.0;
        let mut map: std::collections::BTreeMap<(i32, i32), (f64, f64)> = Default::default();
        for (m, z) in basis.modes.iter().zip(&xi) {
            let c = z * m.lambda.sqrt();
            match m.kind {
                ModeKind::Constant => constant += c,
                ModeKind::Cos => map.entry((m.ky, m.kx)).or_default().0 += std::f64::consts::SQRT_2 * c,
                ModeKind::Sin => map.entry((m.ky, m.kx)).or_default().1 += std::f64::consts::SQRT_2 * c,
            }
        }
        let terms: Vec<_> = map.into_iter().map(|((ky, kx), (c, s))| (kx, ky, c, s)).collect();
        let kmax = terms.iter().map(|t| t.0.abs().max(t.1.abs())).max().unwrap_or(0);
        Ok(Self { basis, xi, constant, terms, kmax })
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn basis(&self) -> &Arc<FourierBasis> {
        &self.basis
    }

    pub fn log_value(&self, x: [f64; 2]) -> f64 {
        let w = 2.0 * std::f64::consts::PI / self.basis.params.period;
        let k = self.kmax as usize;
        let powers = |t: f64| {
            let e = Complex64::from_polar(1.0, w * t);
            let mut v = vec![Complex64::new(1.0, 0.0); 2 * k + 1];
            for n in 1..=k {
                v[k + n] = v[k + n - 1] * e;
                v[k - n] = v[k + n].conj();
            }
            v
        };
        let ex = powers(x[0] - self.basis.center[0]);
        let ey = powers(x[1] - self.basis.center[1]);
        let mut s = self.constant;
        for &(kx, ky, c, sn) in &self.terms {
            let z = ex[(kx + self.kmax) as usize] * ey[(ky + self.kmax) as usize];
            s += c * z.re + sn * z.im;
        }
        s
    }
}

/// One realization of the diffusivity.
#[derive(Clone, Debug)]
pub enum FieldSample {
    Constant(f64),
    Fourier(FourierSample),
}

impl FieldSample {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            FieldSample::Constant(a) => *a,
            FieldSample::Fourier(s) => s.log_value(x).exp(),
        }
    }

    pub fn eval_many(&self, pts: &[[f64; 2]]) -> Vec<f64> {
        pts.iter().map(|&p| self.eval(p)).collect()
    }

    /// Work units per point evaluation.
    pub fn cost_per_point(&self) -> f64 {
        match self {
            FieldSample::Constant(_) => 1.0,
            FieldSample::Fourier(s) => s.basis.n_modes() as f64,
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            FieldSample::Constant(a) => Some(*a),
            FieldSample::Fourier(_) => None,
        }
    }
}

/// Coefficient model of the three examples.
#[derive(Clone, Debug)]
pub enum Coefficient {
    /// Deterministic `a = value`.
    Deterministic(f64),
    /// `a = exp(sigma Z)` with `Z` standard normal.
    LognormalConstant { sigma2: f64 },
    /// `a = exp(sum xi_i sqrt(lambda_i) theta_i(x))`.
    Matern(Arc<FourierBasis>),
}

impl Coefficient {
    pub fn draw(&self, rng: &mut impl Rng) -> Result<FieldSample> {
        Ok(match self {
            Coefficient::Deterministic(a) => FieldSample::Constant(*a),
            Coefficient::LognormalConstant { sigma2 } => {
                let z: f64 = rng.sample(StandardNormal);
                FieldSample::Constant((sigma2.sqrt() * z).exp())
            }
            Coefficient::Matern(basis) => {
                let xi: Vec<f64> = (0..basis.n_modes()).map(|_| rng.sample(StandardNormal)).collect();
                FieldSample::Fourier(FourierSample::new(basis.clone(), xi)?)
            }
        })
    }

    /// `exp(E[log a])`, the coefficient used to build deterministic meshes.
    pub fn median(&self) -> FieldSample {
        match self {
            Coefficient::Deterministic(a) => FieldSample::Constant(*a),
            _ => FieldSample::Constant(1.0),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Coefficient::Deterministic(_))
    }

    pub fn is_spatially_constant(&self) -> bool {
        !matches!(self, Coefficient::Matern(_))
    }
}

/// Counter-based stream: sample `n` on level `level` of a run with `seed`
/// and scheme tag `scheme`. Coarse and fine solves of one sample share it.
pub fn sample_rng(seed: u64, scheme: u8, level: u32, n: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((scheme as u64) << 56) | ((level as u64 & 0xff) << 48) | (n & ((1 << 48) - 1)));
    rng
}
