//! Optimal code lengths and thresholds for the symmetric scheme `a = b`.
//!
//! With `ℓ₁ = ℓ₄` and `ℓ₂ = ℓ₃` the large-slope MSE is the ratio
//! `lᵀQl / E_P[L]` of a convex quadratic and a linear form. It is minimized
//! by bisection on `θ` over the sign of
//!
//! ```text
//!     J(θ) = min_l  lᵀQl - θ·E_P[L]
//! ```
//!
//! subject to Kraft and the sampling-rate constraint `E_P[L] >= 1/(D·f_max)`.
//! Thresholds are chosen by a grid search over `a`. Everything here works in
//! unit variance; `σ²` only rescales the MSE.

mod qp;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gauss_stats::{scheme_constants, SchemeConstants, ThresholdConfig};
use crate::mse_model::{mse_large_mu, Codebook};

pub use qp::{solve_qp, QpInstance, QpSolution, LENGTH_CAP};

const J_TOL: f64 = 1e-9;
const BRACKET_TOL: f64 = 1e-10;
const TIE_TOL: f64 = 1e-9;
const REFINE_WIDTH: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstraint {
    /// Maximum sampling rate; `+∞` leaves the rate unconstrained.
    pub f_max: f64,
}

impl RateConstraint {
    pub fn new(f_max: f64) -> Result<Self> {
        if !(f_max > 0.0) {
            return Err(invalid("f_max", format!("must be > 0, got {f_max}")));
        }
        Ok(Self { f_max })
    }

    pub fn unconstrained() -> Self {
        Self {
            f_max: f64::INFINITY,
        }
    }

    /// Lower bound on `E_P[L]` for a scheme with constant `D`.
    pub fn length_bound(&self, d: f64) -> f64 {
        if self.f_max.is_infinite() {
            0.0
        } else {
            1.0 / (d * self.f_max)
        }
    }
}

fn symmetric_constants(cfg: &ThresholdConfig) -> Result<SchemeConstants> {
    cfg.validate()?;
    if !cfg.is_symmetric() {
        return Err(Error::Unsupported(format!(
            "length optimization needs a = b, got a = {}, b = {}",
            cfg.a, cfg.b
        )));
    }
    scheme_constants(cfg)
}

fn instance_from(c: &SchemeConstants, theta: f64, rc: &RateConstraint) -> QpInstance {
    let p = [c.probabilities.p1, c.probabilities.p2];
    let pt = [c.p_tilde[0], c.p_tilde[1]];
    let off = 2.0 * (p[0] * pt[1] + p[1] * pt[0]);
    QpInstance {
        q: [
            [2.0 * c.k * p[0] + 4.0 * p[0] * pt[0], off],
            [off, 2.0 * c.k * p[1] + 4.0 * p[1] * pt[1]],
        ],
        q_theta: [2.0 * theta * p[0], 2.0 * theta * p[1]],
        kraft_bound: 0.5,
        rate_bound: rc.length_bound(c.d),
        p,
        p_tilde: pt,
    }
}

/// The linearized problem at `θ`.
pub fn build_qp(cfg: &ThresholdConfig, theta: f64, rc: &RateConstraint) -> Result<QpInstance> {
    if !theta.is_finite() {
        return Err(invalid("theta", format!("must be finite, got {theta}")));
    }
    let c = symmetric_constants(cfg)?;
    Ok(instance_from(&c, theta, rc))
}

/// `lᵀQl / E_P[L]`, the unit-variance large-slope MSE of `(l₁, l₂, l₂, l₁)`.
pub fn fractional_objective(inst: &QpInstance, l: [f64; 2]) -> f64 {
    let mut plain = *inst;
    plain.q_theta = [0.0, 0.0];
    plain.objective(l) / (2.0 * (inst.p[0] * l[0] + inst.p[1] * l[1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DinkelbachSolution {
    pub theta: f64,
    pub l: [f64; 2],
    /// `J(θ)` at the returned `θ`.
    pub j_value: f64,
    pub iterations: usize,
    pub qp: QpSolution,
}

/// `J(θ)` and its minimizer.
pub fn j_value(cfg: &ThresholdConfig, theta: f64, rc: &RateConstraint) -> Result<QpSolution> {
    solve_qp(&build_qp(cfg, theta, rc)?)
}

/// Minimizes the large-slope MSE over relaxed symmetric lengths.
pub fn dinkelbach_solve(cfg: &ThresholdConfig, rc: &RateConstraint) -> Result<DinkelbachSolution> {
    let c = symmetric_constants(cfg)?;
    let unit = ThresholdConfig {
        sigma2: 1.0,
        ..*cfg
    };
    let theta_hi = 10.0 * mse_large_mu(&unit, &Codebook::uniform(2.0)?)?.mse;
    let solve = |theta: f64| solve_qp(&instance_from(&c, theta, rc));

    let (mut lo, mut hi) = (0.0, theta_hi);
    let at_lo = solve(lo)?;
    let at_hi = solve(hi)?;
    if !(at_lo.objective > 0.0 && at_hi.objective < 0.0) {
        return Err(Error::SearchFailure(format!(
            "J does not change sign on [0, {theta_hi}]: J(0) = {}, J(hi) = {}",
            at_lo.objective, at_hi.objective
        )));
    }
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let sol = solve(mid)?;
        if sol.objective.abs() <= J_TOL || hi - lo <= BRACKET_TOL || iterations >= 200 {
            return Ok(DinkelbachSolution {
                theta: mid,
                l: sol.l,
                j_value: sol.objective,
                iterations,
                qp: sol,
            });
        }
        if sol.objective > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveConstraints {
    pub kraft: bool,
    pub rate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub a_star: f64,
    pub lengths: Codebook,
    pub theta_star: f64,
    pub mse: f64,
    pub sr: f64,
    /// `1/2 - (2^-l₁ + 2^-l₂)`.
    pub kraft_slack: f64,
    /// `E_P[L] - 1/(D·f_max)`.
    pub rate_slack: f64,
    pub active: ActiveConstraints,
    /// A relaxed length was held at [`LENGTH_CAP`].
    pub cap_bound: bool,
}

/// Optimal relaxed lengths for the threshold `a = b`.
pub fn optimize_lengths(a: f64, rc: &RateConstraint) -> Result<OptimizationResult> {
    let cfg = ThresholdConfig::symmetric(a, f64::INFINITY)?;
    let sol = dinkelbach_solve(&cfg, rc)?;
    let c = scheme_constants(&cfg)?;
    let lengths = Codebook::symmetric(sol.l[0], sol.l[1])?;
    let breakdown = mse_large_mu(&cfg, &lengths)?;
    Ok(OptimizationResult {
        a_star: a,
        lengths,
        theta_star: sol.theta,
        mse: breakdown.mse,
        sr: breakdown.sr,
        kraft_slack: 0.5 - (-sol.l[0]).exp2() - (-sol.l[1]).exp2(),
        rate_slack: breakdown.lbar - rc.length_bound(c.d),
        active: ActiveConstraints {
            kraft: sol.qp.kraft_active,
            rate: sol.qp.rate_active,
        },
        cap_bound: sol.qp.cap_bound,
    })
}

/// `lo, lo + step, ..., <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    /// Golden-section search around the best grid point.
    pub refine: bool,
}

impl Default for AGrid {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 3.0,
            step: 0.01,
            refine: true,
        }
    }
}

impl AGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let grid = Self {
            lo,
            hi,
            step,
            refine: true,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Parses `lo:hi:step`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(invalid(
                "grid",
                format!("expected lo:hi:step, got `{spec}`"),
            ));
        }
        let mut v = [0.0; 3];
        for (slot, part) in v.iter_mut().zip(&parts) {
            *slot = part
                .trim()
                .parse()
                .map_err(|_| invalid("grid", format!("`{part}` is not a number")))?;
        }
        Self::new(v[0], v[1], v[2])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo >= 0.0 && self.lo < self.hi && self.hi.is_finite()) {
            return Err(invalid(
                "grid",
                format!("need 0 <= lo < hi < inf, got [{}, {}]", self.lo, self.hi),
            ));
        }
        if !(self.step > 0.0) {
            return Err(invalid(
                "grid",
                format!("step must be > 0, got {}", self.step),
            ));
        }
        if (self.hi - self.lo) / self.step > 1e7 {
            return Err(invalid("grid", "more than 10^7 points"));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

/// Per-point optimum over the grid, in grid order.
pub fn threshold_profile(
    rc: &RateConstraint,
    grid: &AGrid,
) -> Result<Vec<(f64, Result<OptimizationResult>)>> {
    grid.validate()?;
    Ok(grid
        .points()
        .into_par_iter()
        .map(|a| (a, optimize_lengths(a, rc)))
        .collect())
}

fn golden_section(f: impl Fn(f64) -> Option<f64>, mut lo: f64, mut hi: f64) -> Option<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > REFINE_WIDTH {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Some(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

/// Best threshold on the grid, optionally refined.
pub fn optimize_threshold(rc: &RateConstraint, grid: &AGrid) -> Result<OptimizationResult> {
    let profile = threshold_profile(rc, grid)?;
    let mut best: Option<OptimizationResult> = None;
    let mut last_err = None;
    for (_, res) in profile {
        match res {
            Ok(r) => {
                if best.is_none_or(|b| r.mse < b.mse - TIE_TOL) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some(best) = best else {
        return Err(Error::Infeasible(format!(
            "no grid point is feasible under f_max = {} ({})",
            rc.f_max,
            last_err.map(|e| e.to_string()).unwrap_or_default()
        )));
    };
    if !grid.refine {
        return Ok(best);
    }
    let lo = (best.a_star - grid.step).max(grid.lo);
    let hi = (best.a_star + grid.step).min(grid.hi);
    let refined = golden_section(|a| optimize_lengths(a, rc).ok().map(|r| r.mse), lo, hi);
    if let Some((a, mse)) = refined {
        if mse < best.mse - TIE_TOL {
            return optimize_lengths(a, rc);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegerSolution {
    pub lengths: Codebook,
    pub mse: f64,
    pub sr: f64,
}

/// Exhaustive search over integer `(l₁, l₂) ∈ [1, l_max]²`.
///
/// Events of probability zero need no codeword; their length is reported
/// as `l_max` and left out of the Kraft sum.
pub fn integer_oracle(
    cfg: &ThresholdConfig,
    rc: &RateConstraint,
    l_max: u32,
) -> Result<IntegerSolution> {
    if !(1..=16).contains(&l_max) {
        return Err(invalid(
            "l_max",
            format!("must lie in [1, 16], got {l_max}"),
        ));
    }
    let c = symmetric_constants(cfg)?;
    let unit = ThresholdConfig {
        sigma2: 1.0,
        ..*cfg
    };
    let probs = c.probabilities.as_array();
    let bound = rc.length_bound(c.d);
    let range = |p: f64| if p > 0.0 { 1..=l_max } else { l_max..=l_max };

    let mut best: Option<(f64, IntegerSolution)> = None;
    for l1 in range(probs[0]) {
        for l2 in range(probs[1]) {
            let cb = Codebook::integer([l1, l2, l2, l1])?;
            if cb.kraft_sum_supported(&probs) > 1.0 {
                continue;
            }
            let lbar = 2.0 * (probs[0] * l1 as f64 + probs[1] * l2 as f64);
            if lbar < bound {
                continue;
            }
            let m = mse_large_mu(&unit, &cb)?;
            if best.as_ref().is_none_or(|(v, _)| m.mse < *v - 1e-12) {
                best = Some((
                    m.mse,
                    IntegerSolution {
                        lengths: cb,
                        mse: m.mse * cfg.sigma2,
                        sr: m.sr,
                    },
                ));
            }
        }
    }
    best.map(|(_, s)| s).ok_or_else(|| {
        Error::Infeasible(format!(
            "no integer lengths up to {l_max} satisfy Kraft and E[L] >= {bound}"
        ))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KtildeReport {
    /// `(a, K̃(a))` in grid order.
    pub values: Vec<(f64, f64)>,
    pub max: f64,
    pub argmax: f64,
    pub all_negative: bool,
}

/// `K̃(a) = Σ pᵢ(1 + (pᵢ - p̃ᵢ)/(2Kpᵢ))² - (2K + 1)`, with terms where
/// `pᵢ = p̃ᵢ = 0` dropped.
pub fn ktilde(a: f64) -> Result<f64> {
    let c = scheme_constants(&ThresholdConfig::symmetric(a, f64::INFINITY)?)?;
    let p = c.probabilities.as_array();
    let sum: f64 = p
        .iter()
        .zip(&c.p_tilde)
        .filter(|&(&pi, &pti)| pi > 0.0 || pti > 0.0)
        .map(|(&pi, &pti)| pi * (1.0 + (pi - pti) / (2.0 * c.k * pi)).powi(2))
        .sum();
    Ok(sum - (2.0 * c.k + 1.0))
}

/// Evaluates `K̃` over `grid`.
pub fn verify_ktilde_negative(grid: &[f64]) -> Result<KtildeReport> {
    if grid.is_empty() {
        return Err(invalid("grid", "empty"));
    }
    let values = grid
        .iter()
        .map(|&a| ktilde(a).map(|k| (a, k)))
        .collect::<Result<Vec<_>>>()?;
    let (argmax, max) = values
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, v| {
            if v.1 > acc.1 {
                v
            } else {
                acc
            }
        });
    Ok(KtildeReport {
        all_negative: max < 0.0,
        values,
        max,
        argmax,
    })
}
