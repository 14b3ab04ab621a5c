//! Hitting times of Brownian motion with positive drift.
//!
//! `τ_c = inf{t : μt + B(t) = c}` is inverse-Gaussian with mean `c/μ`.
//! The sloped thresholds of the scheme reduce to exactly this problem, with
//! `c` the excess of the increment over the constant threshold at delivery.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftHitSpec {
    /// Level to reach, `c > 0`.
    pub c: f64,
    /// Drift, `μ > 0`.
    pub mu: f64,
}

impl DriftHitSpec {
    pub fn new(c: f64, mu: f64) -> Result<Self> {
        let spec = Self { c, mu };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid(
                "c",
                format!("must be finite and > 0, got {}", self.c),
            ));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(invalid(
                "mu",
                format!("must be finite and > 0, got {}", self.mu),
            ));
        }
        Ok(())
    }
}

/// `E[τ_c^k]` for `k = 1..=4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitMoments {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl HitMoments {
    pub fn as_array(&self) -> [f64; 4] {
        [self.m1, self.m2, self.m3, self.m4]
    }
}

/// `E[exp(-λτ_c)] = exp(-c(√(μ²+2λ) - μ))`.
pub fn laplace_transform(spec: &DriftHitSpec, lambda: f64) -> Result<f64> {
    spec.validate()?;
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!(
            "Laplace argument must be >= 0, got {lambda}"
        )));
    }
    let mu = spec.mu;
    // √(μ²+2λ) - μ rewritten to avoid cancellation for large μ.
    let gap = 2.0 * lambda / ((mu * mu + 2.0 * lambda).sqrt() + mu);
    Ok((-spec.c * gap).exp())
}

pub fn hit_moments(spec: &DriftHitSpec) -> Result<HitMoments> {
    spec.validate()?;
    let r = spec.c / spec.mu;
    let inv = 1.0 / spec.mu;
    let inv2 = inv * inv;
    Ok(HitMoments {
        m1: r,
        m2: r * r + r * inv2,
        m3: r.powi(3) + 3.0 * r * r * inv2 + 3.0 * r * inv2 * inv2,
        m4: r.powi(4)
            + 6.0 * r.powi(3) * inv2
            + 15.0 * r * r * inv2 * inv2
            + 15.0 * r * inv2 * inv2 * inv2,
    })
}

fn check_band(x: f64, a_level: f64, b_level: f64) -> Result<()> {
    if !(a_level + b_level > 0.0) {
        return Err(Error::Domain(format!(
            "band [-{b_level}, {a_level}] has no interior"
        )));
    }
    if !(x >= -b_level && x <= a_level) {
        return Err(Error::Domain(format!(
            "start {x} outside band [-{b_level}, {a_level}]"
        )));
    }
    Ok(())
}

/// Probability that driftless Brownian motion started at `x` leaves
/// `[-b_level, a_level]` through the top.
pub fn band_exit_upper_prob(x: f64, a_level: f64, b_level: f64) -> Result<f64> {
    check_band(x, a_level, b_level)?;
    Ok((x + b_level) / (a_level + b_level))
}

/// Complement of [`band_exit_upper_prob`], computed so that the two add to
/// one exactly.
pub fn band_exit_lower_prob(x: f64, a_level: f64, b_level: f64) -> Result<f64> {
    Ok(1.0 - band_exit_upper_prob(x, a_level, b_level)?)
}

/// One draw of the grid sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitSample {
    pub time: f64,
    /// `true` when the horizon cap stopped the path before it hit.
    pub truncated: bool,
}

/// Grid simulation of `μt + B(t)` until it reaches `c`.
///
/// Besides the endpoint check, each step tests whether the Brownian bridge
/// between two grid values crossed `c`, which removes the `O(√step)`
/// overshoot of plain endpoint detection. The returned time is always a grid
/// time (the end of the step in which the crossing happened).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitSampler {
    pub step: f64,
    pub horizon: f64,
    pub bridge: bool,
}

impl HitSampler {
    /// Default horizon `10⁶/μ`.
    pub fn new(spec: &DriftHitSpec, step: f64) -> Result<Self> {
        spec.validate()?;
        if !(step > 0.0 && step.is_finite()) {
            return Err(invalid(
                "step",
                format!("must be finite and > 0, got {step}"),
            ));
        }
        Ok(Self {
            step,
            horizon: 1e6 / spec.mu,
            bridge: true,
        })
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn endpoint_only(mut self) -> Self {
        self.bridge = false;
        self
    }

    pub fn sample<R: Rng>(&self, spec: &DriftHitSpec, rng: &mut R) -> HitSample {
        let sd = self.step.sqrt();
        let drift = spec.mu * self.step;
        let max_steps = (self.horizon / self.step).ceil() as u64;
        let c = spec.c;
        let mut x = 0.0_f64;
        for n in 1..=max_steps {
            let z: f64 = rng.sample(StandardNormal);
            let next = x + drift + sd * z;
            if next >= c {
                return HitSample {
                    time: n as f64 * self.step,
                    truncated: false,
                };
            }
            if self.bridge {
                let exponent = 2.0 * (c - x) * (c - next) / self.step;
                if exponent < 40.0 && rng.random::<f64>() < (-exponent).exp() {
                    return HitSample {
                        time: n as f64 * self.step,
                        truncated: false,
                    };
                }
            }
            x = next;
        }
        HitSample {
            time: max_steps as f64 * self.step,
            truncated: true,
        }
    }
}

/// Samples one hitting time on a grid of width `step`; deterministic in
/// `seed`.
pub fn sample_hit_time(spec: &DriftHitSpec, step: f64, seed: u64) -> Result<HitSample> {
    let sampler = HitSampler::new(spec, step)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.sample(spec, &mut rng))
}

/// Monte Carlo estimates of the first four hitting-time moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub paths: usize,
    pub mean: [f64; 4],
    pub std_error: [f64; 4],
    pub truncated: usize,
}

/// Runs `paths` independent samples. Path `i` uses the ChaCha stream `i`
/// keyed by `seed`, so results do not depend on the thread count.
pub fn estimate_moments(
    spec: &DriftHitSpec,
    sampler: &HitSampler,
    paths: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    spec.validate()?;
    if paths < 2 {
        return Err(Error::SampleSize {
            needed: 2,
            got: paths,
        });
    }
    let samples: Vec<HitSample> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            sampler.sample(spec, &mut rng)
        })
        .collect();
    let n = paths as f64;
    let mut sum = [0.0; 4];
    let mut sum_sq = [0.0; 4];
    for s in &samples {
        let mut p = 1.0;
        for k in 0..4 {
            p *= s.time;
            sum[k] += p;
            sum_sq[k] += p * p;
        }
    }
    let mut mean = [0.0; 4];
    let mut std_error = [0.0; 4];
    for k in 0..4 {
        mean[k] = sum[k] / n;
        let var = (sum_sq[k] / n - mean[k] * mean[k]).max(0.0) * n / (n - 1.0);
        std_error[k] = (var / n).sqrt();
    }
    Ok(MomentEstimate {
        paths,
        mean,
        std_error,
        truncated: samples.iter().filter(|s| s.truncated).count(),
    })
}
