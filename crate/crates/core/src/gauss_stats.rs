//! Closed-form Gaussian quantities behind the four-event scheme.
//!
//! With the previous code length `L`, the increment at delivery is
//! `N(0, L)`; scaling by `√L` turns every event probability and moment
//! into a standard-normal integral over the threshold coefficients `a`
//! and `b`. Everything here is expressed through the density `φ`, the
//! upper tail `Q` and `erf`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Parameters of the threshold scheme.
///
/// `a` and `b` scale the constant thresholds `+a√L` / `-b√L`, `mu` is the
/// slope of the monotone thresholds and `sigma2` the variance per unit
/// time of the monitored process. `a`, `b` and `mu` are expressed for the
/// unit-variance process; see [`crate::mse_model::scale_to_sigma`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
}

fn default_sigma2() -> f64 {
    1.0
}

impl ThresholdConfig {
    pub fn new(a: f64, b: f64, mu: f64) -> Result<Self> {
        let cfg = Self {
            a,
            b,
            mu,
            sigma2: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `a = b`, the only shape the optimizer handles.
    pub fn symmetric(a: f64, mu: f64) -> Result<Self> {
        Self::new(a, a, mu)
    }

    pub fn with_sigma2(mut self, sigma2: f64) -> Result<Self> {
        self.sigma2 = sigma2;
        self.validate()?;
        Ok(self)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn is_symmetric(&self) -> bool {
        self.a == self.b
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(invalid(
                "a",
                format!("must be finite and >= 0, got {}", self.a),
            ));
        }
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return Err(invalid(
                "b",
                format!("must be finite and >= 0, got {}", self.b),
            ));
        }
        // mu = +inf is allowed: the large-slope analytics are its limit.
        if !(self.mu > 0.0) {
            return Err(invalid(
                "mu",
                format!(
                    "must be > 0 (constant thresholds never stop), got {}",
                    self.mu
                ),
            ));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(invalid(
                "sigma2",
                format!("must be finite and > 0, got {}", self.sigma2),
            ));
        }
        Ok(())
    }
}

/// Probabilities of the four events: rising threshold, `+a√L`, `-b√L`,
/// falling threshold. They do not depend on the previous code length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventProbabilities {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
}

impl EventProbabilities {
    pub fn as_array(&self) -> [f64; 4] {
        [self.p1, self.p2, self.p3, self.p4]
    }

    pub fn sum(&self) -> f64 {
        self.p1 + self.p2 + self.p3 + self.p4
    }
}

/// `A_k = ∫_a^∞ (x-a)^k φ(x) dx` and `B_k` likewise in `b`, for `k = 0..=4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialMoments {
    pub upper: [f64; 5],
    pub lower: [f64; 5],
}

/// Derived constants of the large-slope MSE formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConstants {
    pub cfg: ThresholdConfig,
    pub probabilities: EventProbabilities,
    pub moments: PartialMoments,
    /// `∫_a^∞ x² φ`.
    pub a_tilde: f64,
    /// `∫_b^∞ x² φ`.
    pub b_tilde: f64,
    /// `∫_{-b}^{a} x⁴ φ`.
    pub x_tilde: f64,
    /// `p₂a² + p₃b² + Ã + B̃`; the mean cycle length is `D·E_P[L]`.
    pub d: f64,
    /// `(3 + p₂a⁴ + p₃b⁴ - X̃) / (6D)`.
    pub k: f64,
    /// Tilted PMF `(Ã, p₂a², p₃b², B̃) / D`.
    pub p_tilde: [f64; 4],
}

impl SchemeConstants {
    /// `Ã` rebuilt from the partial moments, `p₁a² + 2aA₁ + A₂`.
    pub fn a_tilde_from_moments(&self) -> f64 {
        let a = self.cfg.a;
        let m = &self.moments.upper;
        self.probabilities.p1 * a * a + 2.0 * a * m[1] + m[2]
    }

    /// `B̃` rebuilt from the partial moments, `p₄b² + 2bB₁ + B₂`.
    pub fn b_tilde_from_moments(&self) -> f64 {
        let b = self.cfg.b;
        let m = &self.moments.lower;
        self.probabilities.p4 * b * b + 2.0 * b * m[1] + m[2]
    }

    /// Coefficient of `E_P[L²]` in `E[Y⁴]`: `3 + p₂a⁴ + p₃b⁴ - X̃`.
    pub fn fourth_moment_coefficient(&self) -> f64 {
        let (a, b) = (self.cfg.a, self.cfg.b);
        let p = &self.probabilities;
        3.0 + p.p2 * a.powi(4) + p.p3 * b.powi(4) - self.x_tilde
    }
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal upper tail `Q(x) = P(N(0,1) > x)`.
pub fn normal_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `P(-b <= N(0,1) <= a)`, without the cancellation of `1 - Q(a) - Q(b)`.
pub fn band_mass(a: f64, b: f64) -> f64 {
    0.5 * (libm::erf(a * FRAC_1_SQRT_2) + libm::erf(b * FRAC_1_SQRT_2))
}

/// `∫_a^∞ x² φ(x) dx = aφ(a) + Q(a)`.
pub fn tail_second_moment(a: f64) -> f64 {
    a * normal_pdf(a) + normal_tail(a)
}

/// `∫_a^∞ x⁴ φ(x) dx = (a³ + 3a)φ(a) + 3Q(a)`.
pub fn tail_fourth_moment(a: f64) -> f64 {
    (a * a * a + 3.0 * a) * normal_pdf(a) + 3.0 * normal_tail(a)
}

/// `∫_0^a x⁴ φ(x) dx` for `a >= 0`.
fn half_band_fourth_moment(a: f64) -> f64 {
    if a < 0.5 {
        // Termwise integration of the exponential series; the closed form
        // below cancels to nothing when `a` is small.
        let a2 = a * a;
        let mut coeff = 1.0;
        let mut power = a2 * a2 * a;
        let mut sum = 0.0;
        for n in 0..40 {
            let term = coeff * power / (2 * n + 5) as f64;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            coeff *= -0.5 / (n + 1) as f64;
            power *= a2;
        }
        sum / (2.0 * PI).sqrt()
    } else {
        1.5 * libm::erf(a * FRAC_1_SQRT_2) - (a * a * a + 3.0 * a) * normal_pdf(a)
    }
}

/// `∫_{-b}^{a} x⁴ φ(x) dx`.
fn band_fourth_moment(a: f64, b: f64) -> f64 {
    half_band_fourth_moment(a) + half_band_fourth_moment(b)
}

/// `A_k` for `k = 0..=4` by the integration-by-parts recursion
/// `A_k = (k-1)A_{k-2} - aA_{k-1}`, starting from `A₀ = Q(a)` and
/// `A₁ = φ(a) - aQ(a)`.
pub fn upper_partial_moments(a: f64) -> [f64; 5] {
    let mut m = [0.0; 5];
    m[0] = normal_tail(a);
    m[1] = normal_pdf(a) - a * m[0];
    for k in 2..5 {
        m[k] = (k - 1) as f64 * m[k - 2] - a * m[k - 1];
    }
    m
}

pub fn event_probabilities(cfg: &ThresholdConfig) -> Result<EventProbabilities> {
    cfg.validate()?;
    let (a, b) = (cfg.a, cfg.b);
    let p1 = normal_tail(a);
    let p4 = normal_tail(b);
    let (p2, p3) = if a + b == 0.0 {
        (0.0, 0.0)
    } else {
        // ∫_{-b}^{a} x φ = φ(b) - φ(a); the exit probability is linear in x.
        let mass = band_mass(a, b);
        let first = normal_pdf(b) - normal_pdf(a);
        ((first + b * mass) / (a + b), (a * mass - first) / (a + b))
    };
    Ok(EventProbabilities { p1, p2, p3, p4 })
}

pub fn partial_moments(cfg: &ThresholdConfig) -> Result<PartialMoments> {
    cfg.validate()?;
    Ok(PartialMoments {
        upper: upper_partial_moments(cfg.a),
        lower: upper_partial_moments(cfg.b),
    })
}

pub fn scheme_constants(cfg: &ThresholdConfig) -> Result<SchemeConstants> {
    let probabilities = event_probabilities(cfg)?;
    let moments = partial_moments(cfg)?;
    let (a, b) = (cfg.a, cfg.b);
    let a_tilde = tail_second_moment(a);
    let b_tilde = tail_second_moment(b);
    let x_tilde = if a + b == 0.0 {
        0.0
    } else {
        band_fourth_moment(a, b)
    };
    let band_upper = probabilities.p2 * a * a;
    let band_lower = probabilities.p3 * b * b;
    let d = band_upper + band_lower + a_tilde + b_tilde;
    let k =
        (3.0 + probabilities.p2 * a.powi(4) + probabilities.p3 * b.powi(4) - x_tilde) / (6.0 * d);
    let p_tilde = [a_tilde / d, band_upper / d, band_lower / d, b_tilde / d];
    Ok(SchemeConstants {
        cfg: *cfg,
        probabilities,
        moments,
        a_tilde,
        b_tilde,
        x_tilde,
        d,
        k,
        p_tilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, integrate_gaussian_tail, normal_pdf as pdf};
    use approx::assert_abs_diff_eq;

    fn cfg(a: f64, b: f64) -> ThresholdConfig {
        ThresholdConfig::new(a, b, 10.0).unwrap()
    }

    #[test]
    fn degenerate_thresholds() {
        let p = event_probabilities(&cfg(0.0, 0.0)).unwrap();
        assert_eq!(p.as_array(), [0.5, 0.0, 0.0, 0.5]);
        let c = scheme_constants(&cfg(0.0, 0.0)).unwrap();
        assert_eq!(c.a_tilde, 0.5);
        assert_eq!(c.b_tilde, 0.5);
        assert_eq!(c.x_tilde, 0.0);
        assert_eq!(c.d, 1.0);
        assert_eq!(c.k, 0.5);
        assert_eq!(c.p_tilde, [0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn unit_thresholds_match_high_precision_values() {
        // Reference values from 40-digit quadrature of the defining integrals.
        let p = event_probabilities(&cfg(1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(p.p1, 0.158_655_253_931_457_05, epsilon = 1e-15);
        assert_abs_diff_eq!(p.p2, 0.341_344_746_068_542_95, epsilon = 1e-15);
        assert_eq!(p.p1, p.p4);
        assert_eq!(p.p2, p.p3);
        let c = scheme_constants(&cfg(1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(c.a_tilde, 0.400_625_978_450_600_4, epsilon = 1e-15);
        assert_abs_diff_eq!(c.x_tilde, 0.112_302_680_258_110_89, epsilon = 1e-14);
        assert_abs_diff_eq!(c.d, 1.483_941_449_038_286_7, epsilon = 1e-14);
        assert_abs_diff_eq!(c.k, 0.401_002_660_200_741_36, epsilon = 1e-14);
    }

    #[test]
    fn asymmetric_probabilities_normalize() {
        let p = event_probabilities(&cfg(1.0, 2.0)).unwrap();
        assert_abs_diff_eq!(p.sum(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.p2, 0.483_069_823_411_590_73, epsilon = 1e-14);
        assert_abs_diff_eq!(p.p4, 0.022_750_131_948_179_207, epsilon = 1e-15);
    }

    #[test]
    fn half_normal_moments() {
        let m = upper_partial_moments(0.0);
        assert_eq!(m[0], 0.5);
        assert_abs_diff_eq!(m[1], 1.0 / (2.0 * PI).sqrt(), epsilon = 1e-16);
        assert_abs_diff_eq!(m[2], 0.5, epsilon = 1e-16);
        assert_abs_diff_eq!(m[4], 1.5, epsilon = 1e-15);
    }

    #[test]
    fn partial_moments_match_quadrature() {
        let a = 1.5;
        let m = upper_partial_moments(a);
        for (k, &mk) in m.iter().enumerate() {
            let q = integrate_gaussian_tail(|x| (x - a).powi(k as i32) * pdf(x), a, 1e-15);
            assert_abs_diff_eq!(mk, q, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(m[3], 0.024_343_071_587_782_573, epsilon = 1e-15);
    }

    #[test]
    fn band_fourth_moment_small_and_large() {
        for &(a, b) in &[(1e-3, 2e-3), (0.3, 0.49), (0.5, 0.8), (2.0, 3.0)] {
            let q = integrate(|x| x.powi(4) * pdf(x), -b, a, 1e-16);
            assert_abs_diff_eq!(band_fourth_moment(a, b), q, epsilon = 1e-14);
        }
        let c = scheme_constants(&cfg(8.0, 8.0)).unwrap();
        assert_abs_diff_eq!(c.x_tilde, 3.0, epsilon = 1e-6);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(ThresholdConfig::new(-0.1, 0.0, 1.0).is_err());
        assert!(ThresholdConfig::new(0.0, f64::NAN, 1.0).is_err());
        assert!(ThresholdConfig::new(0.0, 0.0, 0.0).is_err());
        assert!(ThresholdConfig::new(1.0, 1.0, 1.0)
            .unwrap()
            .with_sigma2(0.0)
            .is_err());
        let bad = ThresholdConfig {
            a: 1.0,
            b: 1.0,
            mu: -1.0,
            sigma2: 1.0,
        };
        assert!(event_probabilities(&bad).is_err());
    }
}
