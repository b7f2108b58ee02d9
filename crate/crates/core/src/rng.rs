//! Deterministic, splittable random streams and the distribution samplers
//! used by the simulators and posterior samplers.
//!
//! The generator is counter-based (Philox 2x64-10): each 64-bit output is a
//! keyed permutation of a draw counter, so a stream is identified entirely by
//! `(master_seed, stream_index)` and substreams never overlap by construction.
//! All samplers consume uniforms in a fixed, documented pattern so that draw
//! sequences are bit-reproducible across platforms and runs.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RngError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

const PHILOX_M: u64 = 0xD2B7_4407_B1CE_6E93;
const PHILOX_W: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_SALT: u64 = 0xA076_1D64_78BD_642F;

/// SplitMix64 finalizer, used only to derive stream keys.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Philox 2x64 with 10 rounds; returns both output lanes.
fn philox2x64(mut c0: u64, mut c1: u64, mut key: u64) -> (u64, u64) {
    for _ in 0..10 {
        let prod = (c0 as u128) * (PHILOX_M as u128);
        let hi = (prod >> 64) as u64;
        let lo = prod as u64;
        c0 = hi ^ key ^ c1;
        c1 = lo;
        key = key.wrapping_add(PHILOX_W);
    }
    (c0, c1)
}

/// A value-semantics random stream. Cloning or copying the state replays the
/// same sequence; `split` derives an independent substream without touching
/// the parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    master_seed: u64,
    stream_index: u64,
    key: u64,
    counter: u64,
}

impl RngState {
    /// Stream 0 of the given master seed, counter at the origin.
    pub fn new(master_seed: u64) -> Self {
        Self::with_stream(master_seed, 0)
    }

    fn with_stream(master_seed: u64, stream_index: u64) -> Self {
        RngState {
            master_seed,
            stream_index,
            key: mix64(master_seed ^ mix64(stream_index ^ STREAM_SALT)),
            counter: 0,
        }
    }

    /// The substream for `index`. Depends only on the parent's identity
    /// `(master_seed, stream_index)`, never on how many draws the parent has
    /// consumed, so replications can be split up front or lazily.
    pub fn split(&self, index: u64) -> Self {
        let stream = mix64(self.stream_index ^ mix64(index));
        Self::with_stream(self.master_seed, stream)
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Next raw 64-bit output; one Philox block per draw (lane 0).
    pub fn next_u64(&mut self) -> u64 {
        let (lane0, _) = philox2x64(self.counter, 0, self.key);
        self.counter = self.counter.wrapping_add(1);
        lane0
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in the open interval `(0, 1)`; safe as a `ln` argument.
    fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
    }

    /// One `Normal(mu, sigma^2)` draw by the Marsaglia polar method.
    ///
    /// Consumption pattern: two uniforms per trial until the pair lands in
    /// the unit disk; the second polar coordinate is discarded.
    pub fn normal(&mut self, mu: f64, sigma: f64) -> Result<f64, RngError> {
        if !mu.is_finite() || !sigma.is_finite() || sigma < 0.0 {
            return Err(RngError::InvalidParameter(format!(
                "normal(mu={mu}, sigma={sigma})"
            )));
        }
        Ok(mu + sigma * self.standard_normal())
    }

    fn standard_normal(&mut self) -> f64 {
        loop {
            let v1 = 2.0 * self.uniform() - 1.0;
            let v2 = 2.0 * self.uniform() - 1.0;
            let s = v1 * v1 + v2 * v2;
            if s > 0.0 && s < 1.0 {
                return v1 * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }

    /// One `Poisson(lambda)` draw.
    ///
    /// Knuth's multiplication method for `lambda <= 30` (one uniform per
    /// event count); Hormann's PTRS transformed rejection above. `lambda = 0`
    /// returns 0 without consuming draws.
    pub fn poisson(&mut self, lambda: f64) -> Result<u64, RngError> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(RngError::InvalidParameter(format!("poisson(lambda={lambda})")));
        }
        if lambda == 0.0 {
            return Ok(0);
        }
        if lambda <= 30.0 {
            let limit = (-lambda).exp();
            let mut k = 0u64;
            let mut p = 1.0;
            loop {
                k += 1;
                p *= self.uniform();
                if p <= limit {
                    return Ok(k - 1);
                }
            }
        }
        Ok(self.poisson_ptrs(lambda))
    }

    /// PTRS rejection sampler (two uniforms per trial).
    fn poisson_ptrs(&mut self, lambda: f64) -> u64 {
        let b = 0.931 + 2.53 * lambda.sqrt();
        let a = -0.059 + 0.024_83 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let v_r = 0.9277 - 3.6224 / (b - 2.0);
        let ln_lambda = lambda.ln();
        loop {
            let u = self.uniform() - 0.5;
            let v = self.uniform();
            let us = 0.5 - u.abs();
            let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
            if us >= 0.07 && v <= v_r {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            let lhs = (v * inv_alpha / (a / (us * us) + b)).ln();
            if lhs <= k * ln_lambda - lambda - ln_gamma(k + 1.0) {
                return k as u64;
            }
        }
    }

    /// One `Bernoulli(p)` draw as 0/1. Exact at the endpoints: the uniform is
    /// in `[0, 1)`, so `p = 0` never fires and `p = 1` always does.
    pub fn bernoulli(&mut self, p: f64) -> Result<u8, RngError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(RngError::InvalidParameter(format!("bernoulli(p={p})")));
        }
        Ok(u8::from(self.uniform() < p))
    }

    /// One `Beta(a, b)` draw via two Marsaglia-Tsang Gamma draws, clamped to
    /// the open unit interval.
    pub fn beta(&mut self, a: f64, b: f64) -> Result<f64, RngError> {
        let valid = |v: f64| v.is_finite() && v > 0.0;
        if !valid(a) || !valid(b) {
            return Err(RngError::InvalidParameter(format!("beta(a={a}, b={b})")));
        }
        loop {
            let g1 = self.gamma(a);
            let g2 = self.gamma(b);
            let sum = g1 + g2;
            if sum > 0.0 {
                let r = g1 / sum;
                return Ok(r.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0));
            }
        }
    }

    /// Gamma(shape, 1) by Marsaglia-Tsang; shapes below one are boosted via
    /// `Gamma(a+1) * U^(1/a)`.
    fn gamma(&mut self, shape: f64) -> f64 {
        if shape < 1.0 {
            let boost = self.uniform_open().powf(1.0 / shape);
            return self.gamma(shape + 1.0) * boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (3.0 * d.sqrt());
        loop {
            let x = self.standard_normal();
            let t = 1.0 + c * x;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = self.uniform_open();
            if u < 1.0 - 0.0331 * x * x * x * x {
                return d * v;
            }
            if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }
}

/// Overflow-safe logistic function `1 / (1 + e^-x)`.
///
/// Branches on sign so the exponential argument is never positive.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Lanczos approximation of `ln Gamma(x)` for `x > 0`.
#[allow(clippy::excessive_precision)] // published coefficients kept verbatim
fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
