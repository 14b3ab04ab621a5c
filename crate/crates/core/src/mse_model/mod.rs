//! Mean squared error and sampling rate of the threshold scheme.
//!
//! The cycle between two deliveries is a renewal: the MSE is the mean
//! integrated squared error of a cycle over its mean length,
//! `(E[Y⁴] + 6E[C(Y)Y²]) / (6E[τ(X)+L])`, where `Y` is the increment at
//! the sampling instant and `C(Y)` the code length assigned to it.
//!
//! [`mse_exact`] keeps every `1/μ` term of the hitting-time moments and is
//! exact for any finite slope. [`mse_large_mu`] is its `μ → ∞` limit,
//! `K·E_P[L²]/E_P[L] + E_P̃[L]`.

mod integral_oracle;

pub use integral_oracle::{mse_integral_oracle, OracleEstimate, OracleSettings, StopRule};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gauss_stats::{
    band_mass, normal_tail, scheme_constants, tail_fourth_moment, tail_second_moment,
    SchemeConstants, ThresholdConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodeMode {
    /// Real lengths; `+∞` is allowed for events that never occur.
    Relaxed,
    /// Positive integer lengths of a binary prefix code.
    IntegerPrefix,
}

/// Code lengths `ℓ₁..ℓ₄` of the four events, in time units (one bit per
/// unit time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    lengths: [f64; 4],
    mode: CodeMode,
}

impl Codebook {
    pub fn relaxed(lengths: [f64; 4]) -> Result<Self> {
        for &l in &lengths {
            if !(l > 0.0) {
                return Err(invalid(
                    "lengths",
                    format!("relaxed lengths must be > 0, got {l}"),
                ));
            }
        }
        Ok(Self {
            lengths,
            mode: CodeMode::Relaxed,
        })
    }

    /// Integer lengths. Kraft's inequality is checked against the event
    /// probabilities by [`Codebook::check_kraft`], since events that cannot
    /// occur need no codeword.
    pub fn integer(lengths: [u32; 4]) -> Result<Self> {
        if lengths.contains(&0) {
            return Err(invalid("lengths", "integer lengths must be >= 1"));
        }
        Ok(Self {
            lengths: lengths.map(f64::from),
            mode: CodeMode::IntegerPrefix,
        })
    }

    pub fn uniform(length: f64) -> Result<Self> {
        Self::relaxed([length; 4])
    }

    /// `(ℓ₁, ℓ₂, ℓ₂, ℓ₁)`, the shape used with `a = b`.
    pub fn symmetric(l1: f64, l2: f64) -> Result<Self> {
        Self::relaxed([l1, l2, l2, l1])
    }

    pub fn lengths(&self) -> [f64; 4] {
        self.lengths
    }

    pub fn mode(&self) -> CodeMode {
        self.mode
    }

    /// The lengths as integers, if every one is a finite whole number.
    pub fn integer_lengths(&self) -> Option<[u32; 4]> {
        let mut out = [0u32; 4];
        for (o, &l) in out.iter_mut().zip(&self.lengths) {
            if !(l.is_finite() && l >= 1.0 && l.fract() == 0.0 && l <= u32::MAX as f64) {
                return None;
            }
            *o = l as u32;
        }
        Some(out)
    }

    pub fn kraft_sum(&self) -> f64 {
        self.lengths.iter().map(|&l| (-l).exp2()).sum()
    }

    /// Kraft sum over the events with positive probability.
    pub fn kraft_sum_supported(&self, probabilities: &[f64; 4]) -> f64 {
        self.lengths
            .iter()
            .zip(probabilities)
            .filter(|(_, &p)| p > 0.0)
            .map(|(&l, _)| (-l).exp2())
            .sum()
    }

    pub fn check_kraft(&self, probabilities: &[f64; 4]) -> Result<()> {
        let sum = self.kraft_sum_supported(probabilities);
        if sum > 1.0 + 1e-12 {
            return Err(invalid(
                "lengths",
                format!("Kraft sum {sum} exceeds 1 over the events that can occur"),
            ));
        }
        Ok(())
    }
}

/// MSE, sampling rate and the renewal-reward terms they are built from.
///
/// `ey4` and `ecy2` are reported for the unit-variance process; `mse` is
/// already multiplied by `σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseBreakdown {
    pub mse: f64,
    pub sr: f64,
    pub ey4: f64,
    pub ecy2: f64,
    /// Mean cycle length `E[τ(X)+L]`.
    pub etau: f64,
    pub lbar: f64,
    pub l2bar: f64,
    pub l32bar: f64,
    pub lsqrtbar: f64,
    /// `E_P̃[L]`.
    pub ltilde: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateMode {
    Exact,
    LargeMu,
}

/// `Σ wᵢ f(ℓᵢ)` where zero weights contribute nothing even for `ℓᵢ = ∞`.
fn expect(weights: &[f64; 4], lengths: &[f64; 4], f: impl Fn(f64) -> f64) -> Result<f64> {
    let mut sum = 0.0;
    for (i, (&w, &l)) in weights.iter().zip(lengths).enumerate() {
        if w == 0.0 {
            continue;
        }
        if !l.is_finite() {
            return Err(Error::Model(format!(
                "code length l{} is infinite but carries weight {w}",
                i + 1
            )));
        }
        sum += w * f(l);
    }
    Ok(sum)
}

struct LengthMoments {
    lbar: f64,
    l2bar: f64,
    l32bar: f64,
    lsqrtbar: f64,
    ltilde: f64,
}

fn length_moments(c: &SchemeConstants, cb: &Codebook) -> Result<LengthMoments> {
    let p = c.probabilities.as_array();
    let l = cb.lengths();
    Ok(LengthMoments {
        lbar: expect(&p, &l, |x| x)?,
        l2bar: expect(&p, &l, |x| x * x)?,
        l32bar: expect(&p, &l, |x| x * x.sqrt())?,
        lsqrtbar: expect(&p, &l, f64::sqrt)?,
        ltilde: expect(&c.p_tilde, &l, |x| x)?,
    })
}

/// Large-slope MSE `K·E_P[L²]/E_P[L] + E_P̃[L]` with `SR = 1/(D·E_P[L])`.
pub fn mse_large_mu(cfg: &ThresholdConfig, cb: &Codebook) -> Result<MseBreakdown> {
    let c = scheme_constants(cfg)?;
    let m = length_moments(&c, cb)?;
    let etau = c.d * m.lbar;
    Ok(MseBreakdown {
        mse: cfg.sigma2 * (c.k * m.l2bar / m.lbar + m.ltilde),
        sr: 1.0 / etau,
        ey4: c.fourth_moment_coefficient() * m.l2bar,
        ecy2: c.d * m.ltilde * m.lbar,
        etau,
        lbar: m.lbar,
        l2bar: m.l2bar,
        l32bar: m.l32bar,
        lsqrtbar: m.lsqrtbar,
        ltilde: m.ltilde,
    })
}

/// `E[1{X > a√L} Y⁴]` averaged over `L`, for one tail with partial
/// moments `m` at level `a` (`m[0]` is the tail probability).
fn tail_fourth_block(a: f64, m: &[f64; 5], inv_mu: f64, lm: &LengthMoments) -> f64 {
    let p = m[0];
    let l2 = p * a.powi(4) + 4.0 * a.powi(3) * m[1] + 6.0 * a * a * m[2] + 4.0 * a * m[3] + m[4];
    let l32 = 6.0 * a * a * m[1] + 12.0 * a * m[2] + 6.0 * m[3];
    let l1 = 12.0 * a * m[1] + 15.0 * m[2];
    let lh = 15.0 * m[1];
    l2 * lm.l2bar + inv_mu * (l32 * lm.l32bar + inv_mu * (l1 * lm.lbar + inv_mu * lh * lm.lsqrtbar))
}

/// Full finite-slope MSE.
pub fn mse_exact(cfg: &ThresholdConfig, cb: &Codebook) -> Result<MseBreakdown> {
    let c = scheme_constants(cfg)?;
    let m = length_moments(&c, cb)?;
    let (a, b) = (cfg.a, cfg.b);
    let p = c.probabilities;
    let (up, lo) = (&c.moments.upper, &c.moments.lower);
    let inv_mu = 1.0 / cfg.mu;
    let l = cb.lengths();

    // E[C(Y)Y²]: the weight of each event's length.
    let weights = [
        c.a_tilde * m.lbar + up[1] * inv_mu * m.lsqrtbar,
        p.p2 * a * a * m.lbar,
        p.p3 * b * b * m.lbar,
        c.b_tilde * m.lbar + lo[1] * inv_mu * m.lsqrtbar,
    ];
    let ecy2 = expect(&weights, &l, |x| x)?;

    let ey4 = tail_fourth_block(a, up, inv_mu, &m)
        + tail_fourth_block(b, lo, inv_mu, &m)
        + (p.p2 * a.powi(4) + p.p3 * b.powi(4)) * m.l2bar;

    let etau = c.d * m.lbar + (up[1] + lo[1]) * inv_mu * m.lsqrtbar;
    Ok(MseBreakdown {
        mse: cfg.sigma2 * (ey4 + 6.0 * ecy2) / (6.0 * etau),
        sr: 1.0 / etau,
        ey4,
        ecy2,
        etau,
        lbar: m.lbar,
        l2bar: m.l2bar,
        l32bar: m.l32bar,
        lsqrtbar: m.lsqrtbar,
        ltilde: m.ltilde,
    })
}

/// Long-run samples per unit time, `1/E[τ(X_L)+L]`.
pub fn sampling_rate(cfg: &ThresholdConfig, cb: &Codebook, mode: RateMode) -> Result<f64> {
    let c = scheme_constants(cfg)?;
    let m = length_moments(&c, cb)?;
    let etau = match mode {
        RateMode::LargeMu => c.d * m.lbar,
        RateMode::Exact => {
            c.d * m.lbar + (c.moments.upper[1] + c.moments.lower[1]) / cfg.mu * m.lsqrtbar
        }
    };
    Ok(1.0 / etau)
}

/// Thresholds in process units for a process of variance `σ²`:
/// `(σa, σb, σμ)`. A sampler using these on `σW` behaves exactly like the
/// unit-variance scheme on `W`, so its MSE is `σ²` times the unit MSE.
pub fn scale_to_sigma(cfg: &ThresholdConfig) -> ThresholdConfig {
    let s = cfg.sigma();
    ThresholdConfig {
        a: s * cfg.a,
        b: s * cfg.b,
        mu: s * cfg.mu,
        sigma2: cfg.sigma2,
    }
}

/// Analytics of the real-valued benchmark: sample when
/// `|W - Ŵ| >= a` and the channel is free, deliver after one time unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdealBenchmark {
    pub mse: f64,
    pub sr: f64,
}

/// With unit delay the error at delivery is `N(0,1)`; the wait is the exit
/// time of `(-a, a)`, and the stopped value `Y` is the error itself when it
/// already lies outside the band. The cycle length is `E[Y²]` by Wald's
/// identity and the MSE is `1 + E[Y⁴]/(6E[Y²])`.
pub fn ideal_benchmark(a: f64, sigma2: f64) -> Result<IdealBenchmark> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(invalid("a", format!("must be finite and >= 0, got {a}")));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(invalid(
            "sigma2",
            format!("must be finite and > 0, got {sigma2}"),
        ));
    }
    let inside = if a == 0.0 { 0.0 } else { band_mass(a, a) };
    let ey2 = 2.0 * tail_second_moment(a) + a * a * inside;
    let ey4 = 2.0 * tail_fourth_moment(a) + a.powi(4) * inside;
    debug_assert!((1.0 - 2.0 * normal_tail(a) - inside).abs() < 1e-12);
    Ok(IdealBenchmark {
        mse: sigma2 * (1.0 + ey4 / (6.0 * ey2)),
        sr: 1.0 / ey2,
    })
}
