//! Scalar kernels: Bernoulli Kullback-Leibler divergences and the
//! overlap-to-union volume ratio of two equal balls.

use crate::error::{AwcError, Result};

/// Default number of grid cells used by [`QTable`].
pub const DEFAULT_Q_RESOLUTION: usize = 8192;

const BETA_CF_MAX_ITER: usize = 500;
const BETA_CF_EPS: f64 = 1e-12;
const BETA_CF_TINY: f64 = 1e-300;

#[inline]
fn xlogy_ratio(x: f64, y: f64) -> f64 {
    // x * ln(x / y) with 0 * ln 0 = 0
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

/// Kullback-Leibler divergence between Bernoulli(theta) and Bernoulli(eta).
pub fn kl_bernoulli(theta: f64, eta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(AwcError::domain("kl_bernoulli", format!("theta = {theta} outside [0, 1]")));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(AwcError::domain("kl_bernoulli", format!("eta = {eta} outside (0, 1)")));
    }
    Ok(kl_bernoulli_unchecked(theta, eta))
}

/// [`kl_bernoulli`] without argument validation; callers guarantee
/// `theta ∈ [0,1]` and `eta ∈ (0,1)`.
#[inline]
pub fn kl_bernoulli_unchecked(theta: f64, eta: f64) -> f64 {
    let kl = xlogy_ratio(theta, eta) + xlogy_ratio(1.0 - theta, 1.0 - eta);
    // rounding can leave a tiny negative residue near theta == eta
    kl.max(0.0)
}

/// Symmetrized Bernoulli KL divergence `½(KL(θ,η) + KL(η,θ))`, evaluated
/// as `½(θ−η)·ln(θ(1−η) / ((1−θ)η))`.
pub fn kl_bernoulli_sym(theta: f64, eta: f64) -> Result<f64> {
    for (name, v) in [("theta", theta), ("eta", eta)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(AwcError::domain(
                "kl_bernoulli_sym",
                format!("{name} = {v} outside (0, 1)"),
            ));
        }
    }
    let value = 0.5 * (theta - eta) * ((theta * (1.0 - eta)) / ((1.0 - theta) * eta)).ln();
    Ok(value.max(0.0))
}

/// Natural log of the gamma function for positive arguments (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (k, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Natural log of the complete beta function.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta function `I_x(a, b)`.
///
/// Continued fraction evaluated with the modified Lentz method; for
/// `x > (a+1)/(a+b+2)` the symmetric form `1 − I_{1−x}(b, a)` is used.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(AwcError::domain("regularized_incomplete_beta", format!("x = {x} outside [0, 1]")));
    }
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(AwcError::domain(
            "regularized_incomplete_beta",
            format!("shape parameters must be positive, got a = {a}, b = {b}"),
        ));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let value = if x > (a + 1.0) / (a + b + 2.0) {
        1.0 - beta_front(1.0 - x, b, a) * beta_cf(1.0 - x, b, a)
    } else {
        beta_front(x, a, b) * beta_cf(x, a, b)
    };
    Ok(value.clamp(0.0, 1.0))
}

fn beta_front(x: f64, a: f64, b: f64) -> f64 {
    (a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b)).exp() / a
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < BETA_CF_TINY {
        d = BETA_CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < BETA_CF_TINY {
            d = BETA_CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < BETA_CF_TINY {
            c = BETA_CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < BETA_CF_TINY {
            d = BETA_CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < BETA_CF_TINY {
            c = BETA_CF_TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < BETA_CF_EPS {
            break;
        }
    }
    h
}

/// Ratio `Vol(B₁ ∩ B₂) / Vol(B₁ ∪ B₂)` for two unit balls in dimension
/// `dim` whose centers are `t` apart (`t` is the center distance measured in
/// radii). Zero for `t ≥ 2`.
pub fn q_overlap(t: f64, dim: usize) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(AwcError::domain("q_overlap", format!("t = {t} must be nonnegative")));
    }
    if dim < 1 {
        return Err(AwcError::domain("q_overlap", "dimension must be at least 1"));
    }
    if t >= 2.0 {
        return Ok(0.0);
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    // Vol∩ / Vol = I_{1−t²/4}((p+1)/2, 1/2)
    let cap = regularized_incomplete_beta(1.0 - t * t / 4.0, (dim as f64 + 1.0) / 2.0, 0.5)?;
    Ok(cap / (2.0 - cap))
}

/// `q_overlap` tabulated on a uniform grid of `[0, 2)` for one dimension.
#[derive(Debug, Clone)]
pub struct QTable {
    dim: usize,
    step: f64,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(dim: usize, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(AwcError::domain("build_q_table", "resolution must be at least 2"));
        }
        let step = 2.0 / resolution as f64;
        let values = (0..resolution)
            .map(|m| q_overlap(m as f64 * step, dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim, step, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.values.len()
    }

    /// Grid abscissae `t_m = 2m / resolution`.
    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |m| m as f64 * self.step)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation of `q(t)`; the last cell interpolates towards
    /// `q(2) = 0`.
    pub fn lookup(&self, t: f64) -> f64 {
        if !(t < 2.0) {
            return 0.0;
        }
        if t <= 0.0 {
            return self.values[0];
        }
        let pos = t / self.step;
        let idx = (pos as usize).min(self.values.len() - 1);
        let frac = pos - idx as f64;
        let lo = self.values[idx];
        let hi = self.values.get(idx + 1).copied().unwrap_or(0.0);
        lo + (hi - lo) * frac
    }
}

/// Build a [`QTable`] for `dim` with `resolution` grid cells.
pub fn build_q_table(dim: usize, resolution: usize) -> Result<QTable> {
    QTable::new(dim, resolution)
}
