//! Monte Carlo check of the optional-stopping identity
//! `E[∫₀^τ W² dt] = (E[W_τ⁴] - E[W₀⁴]) / 6`.
//!
//! Paths are simulated on a grid and stopped at the first grid time the
//! rule fires. That grid time is itself a stopping time of the continuous
//! motion, so the identity holds for it exactly; the per-step integral uses
//! the trapezoid rule, whose conditional mean equals the continuous
//! integral's, and `W_τ` is the unrounded grid value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StopRule {
    /// Stop at the fixed time `t`.
    Deterministic { t: f64 },
    /// Start at 0 and stop on leaving `(-lower, upper)`.
    BandExit { upper: f64, lower: f64 },
    /// Start at `c` above the line `μt` and stop when the path meets it.
    SlopedThreshold { c: f64, mu: f64 },
}

impl StopRule {
    fn validate(&self) -> Result<()> {
        match *self {
            StopRule::Deterministic { t } if !(t > 0.0 && t.is_finite()) => {
                Err(invalid("t", format!("must be finite and > 0, got {t}")))
            }
            StopRule::BandExit { upper, lower } if !(upper > 0.0 && lower > 0.0) => Err(invalid(
                "band",
                format!("levels must be > 0, got ({upper}, {lower})"),
            )),
            StopRule::SlopedThreshold { c, mu } if !(c > 0.0 && mu > 0.0) => Err(invalid(
                "sloped threshold",
                format!("c and mu must be > 0, got ({c}, {mu})"),
            )),
            _ => Ok(()),
        }
    }

    fn start(&self) -> f64 {
        match *self {
            StopRule::SlopedThreshold { c, .. } => c,
            _ => 0.0,
        }
    }

    fn stops(&self, time: f64, w: f64) -> bool {
        match *self {
            StopRule::Deterministic { t } => time >= t * (1.0 - 1e-12),
            StopRule::BandExit { upper, lower } => w >= upper || w <= -lower,
            StopRule::SlopedThreshold { mu, .. } => w <= mu * time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSettings {
    pub step: f64,
    pub paths: usize,
    pub seed: u64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            step: 1e-3,
            paths: 100_000,
            seed: 0x5EED,
        }
    }
}

/// Both sides of the identity with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub paths: usize,
    /// Mean of `∫₀^τ W² dt`.
    pub integral: f64,
    pub integral_se: f64,
    /// Mean of `(W_τ⁴ - W₀⁴) / 6`.
    pub moment: f64,
    pub moment_se: f64,
    /// Standard error of the path-wise difference of the two sides.
    pub difference_se: f64,
    /// Paths stopped by the horizon rather than the rule.
    pub truncated: usize,
    /// `(∫ side, moment side)` in closed form when the rule allows it.
    pub analytic: Option<(f64, f64)>,
}

impl OracleEstimate {
    /// `|integral - moment|` within `z` joint standard errors, treating the
    /// two sides as independent estimates.
    pub fn agrees_within(&self, z: f64) -> bool {
        let joint = (self.integral_se.powi(2) + self.moment_se.powi(2)).sqrt();
        (self.integral - self.moment).abs() <= z * joint
    }
}

fn mean_se(values: impl Iterator<Item = f64> + Clone, n: f64) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Estimates both sides of the identity for `rule`, stopping a path at
/// `horizon` at the latest (the identity still holds for `τ ∧ horizon`).
pub fn mse_integral_oracle(
    rule: &StopRule,
    horizon: f64,
    settings: &OracleSettings,
) -> Result<OracleEstimate> {
    rule.validate()?;
    if !(horizon > 0.0) {
        return Err(invalid("horizon", format!("must be > 0, got {horizon}")));
    }
    if !(settings.step > 0.0) {
        return Err(invalid(
            "step",
            format!("must be > 0, got {}", settings.step),
        ));
    }
    if settings.paths < 2 {
        return Err(Error::SampleSize {
            needed: 2,
            got: settings.paths,
        });
    }
    let h = settings.step;
    let sd = h.sqrt();
    let max_steps = (horizon / h).round().max(1.0) as u64;
    let start = rule.start();

    let rows: Vec<(f64, f64, bool)> = (0..settings.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            rng.set_stream(i as u64);
            let mut w = start;
            let mut integral = 0.0;
            let mut n = 0u64;
            let mut stopped = false;
            while n < max_steps {
                let z: f64 = rng.sample(StandardNormal);
                let next = w + sd * z;
                integral += 0.5 * h * (w * w + next * next);
                w = next;
                n += 1;
                if rule.stops(n as f64 * h, w) {
                    stopped = true;
                    break;
                }
            }
            let moment = (w.powi(4) - start.powi(4)) / 6.0;
            (integral, moment, !stopped)
        })
        .collect();

    let n = rows.len() as f64;
    let (integral, integral_se) = mean_se(rows.iter().map(|r| r.0), n);
    let (moment, moment_se) = mean_se(rows.iter().map(|r| r.1), n);
    let (_, difference_se) = mean_se(rows.iter().map(|r| r.0 - r.1), n);
    let analytic = match *rule {
        StopRule::Deterministic { t } => Some((0.5 * t * t, 3.0 * t * t / 6.0)),
        _ => None,
    };
    Ok(OracleEstimate {
        paths: rows.len(),
        integral,
        integral_se,
        moment,
        moment_se,
        difference_se,
        truncated: rows.iter().filter(|r| r.2).count(),
        analytic,
    })
}
