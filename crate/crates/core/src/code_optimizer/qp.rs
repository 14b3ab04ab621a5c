//! Two-variable convex program
//!
//! ```text
//!     minimize    lᵀQl - qᵀl
//!     subject to  2^-l₁ + 2^-l₂ <= κ           (Kraft)
//!                 2(p₁l₁ + p₂l₂) >= r          (sampling rate)
//!                 l₁, l₂ <= LENGTH_CAP
//! ```
//!
//! solved by enumerating the faces of the feasible set: the interior, the
//! Kraft arc, the rate line, their intersections and the cap edges. Every
//! candidate is a feasible point and the optimum of a convex problem lies on
//! one of the faces, so the best candidate is the optimum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relaxed lengths never exceed this; the optimum may want `ℓ = ∞` for an
/// event of vanishing probability, and the cap keeps arithmetic finite.
pub const LENGTH_CAP: f64 = 64.0;

const ARC_SCAN: usize = 256;
const FEAS_TOL: f64 = 1e-12;
const ACTIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpInstance {
    /// Symmetric quadratic form.
    pub q: [[f64; 2]; 2],
    /// Linear coefficients, entering the objective as `-q_thetaᵀl`.
    pub q_theta: [f64; 2],
    /// Right-hand side `κ` of the reduced Kraft inequality.
    pub kraft_bound: f64,
    /// Lower bound `r` on `2(p₁l₁ + p₂l₂)`, i.e. on `E_P[L]`.
    pub rate_bound: f64,
    pub p: [f64; 2],
    pub p_tilde: [f64; 2],
}

impl QpInstance {
    pub fn objective(&self, l: [f64; 2]) -> f64 {
        let q = &self.q;
        q[0][0] * l[0] * l[0] + 2.0 * q[0][1] * l[0] * l[1] + q[1][1] * l[1] * l[1]
            - self.q_theta[0] * l[0]
            - self.q_theta[1] * l[1]
    }

    pub fn gradient(&self, l: [f64; 2]) -> [f64; 2] {
        let q = &self.q;
        [
            2.0 * (q[0][0] * l[0] + q[0][1] * l[1]) - self.q_theta[0],
            2.0 * (q[1][0] * l[0] + q[1][1] * l[1]) - self.q_theta[1],
        ]
    }

    /// `2^-l₁ + 2^-l₂ - κ`, non-positive when feasible.
    pub fn kraft_violation(&self, l: [f64; 2]) -> f64 {
        (-l[0]).exp2() + (-l[1]).exp2() - self.kraft_bound
    }

    /// `r - 2(p₁l₁ + p₂l₂)`, non-positive when feasible.
    pub fn rate_violation(&self, l: [f64; 2]) -> f64 {
        self.rate_bound - 2.0 * (self.p[0] * l[0] + self.p[1] * l[1])
    }

    pub fn is_feasible(&self, l: [f64; 2]) -> bool {
        l.iter()
            .all(|&x| x.is_finite() && x <= LENGTH_CAP * (1.0 + 1e-15))
            && self.kraft_violation(l) <= FEAS_TOL
            && self.rate_violation(l) <= FEAS_TOL * self.rate_bound.abs().max(1.0)
    }

    /// Smallest eigenvalue of `Q`.
    pub fn min_eigenvalue(&self) -> f64 {
        let (a, b, d) = (self.q[0][0], self.q[0][1], self.q[1][1]);
        let mean = 0.5 * (a + d);
        let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        mean - radius
    }

    fn validate(&self) -> Result<()> {
        let q = &self.q;
        let finite = q
            .iter()
            .flatten()
            .chain(&self.q_theta)
            .chain(&self.p)
            .all(|x| x.is_finite());
        if !finite || !self.rate_bound.is_finite() {
            return Err(Error::Domain("QP data must be finite".into()));
        }
        if q[0][1] != q[1][0] {
            return Err(Error::Domain("Q must be symmetric".into()));
        }
        if !(self.kraft_bound > 0.0 && self.kraft_bound < 1.0) {
            return Err(Error::Domain(format!(
                "Kraft bound must lie in (0, 1), got {}",
                self.kraft_bound
            )));
        }
        if self.p.iter().any(|&x| x < 0.0) || self.p[0] + self.p[1] <= 0.0 {
            return Err(Error::Domain(
                "rate weights must be >= 0 and not all zero".into(),
            ));
        }
        Ok(())
    }
}

/// Minimizer with multipliers and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub l: [f64; 2],
    pub objective: f64,
    /// Kraft multiplier.
    pub lambda: f64,
    /// Sampling-rate multiplier.
    pub gamma: f64,
    pub kraft_active: bool,
    pub rate_active: bool,
    /// A length sits at [`LENGTH_CAP`]; stationarity then does not hold.
    pub cap_bound: bool,
    /// `‖∇f - λ ln2 (2^-l₁, 2^-l₂) - 2γp‖∞`.
    pub stationarity_residual: f64,
    /// `|λ·(2^-l₁ + 2^-l₂ - κ)|`.
    pub kraft_complementarity: f64,
    /// `|γ·(r - 2pᵀl)|`.
    pub rate_complementarity: f64,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The Kraft arc parametrized by `s ∈ ℝ`: `2^-l₁ = κσ(s)`, `2^-l₂ = κσ(-s)`.
#[derive(Debug, Clone, Copy)]
struct KraftArc {
    offset: f64,
    s_max: f64,
}

impl KraftArc {
    fn new(kraft_bound: f64) -> Self {
        let offset = -kraft_bound.log2();
        // l₂(s) = offset + softplus(s)/ln2 reaches the cap at s_max.
        let budget = (LENGTH_CAP - offset) * std::f64::consts::LN_2;
        let s_max = budget + (-(-budget).exp()).ln_1p();
        Self { offset, s_max }
    }

    fn point(&self, s: f64) -> [f64; 2] {
        let ln2 = std::f64::consts::LN_2;
        [
            (self.offset + softplus(-s) / ln2).min(LENGTH_CAP),
            (self.offset + softplus(s) / ln2).min(LENGTH_CAP),
        ]
    }

    fn tangent(&self, s: f64) -> [f64; 2] {
        let ln2 = std::f64::consts::LN_2;
        [-logistic(-s) / ln2, logistic(s) / ln2]
    }

    fn curvature(&self, s: f64) -> f64 {
        logistic(s) * logistic(-s) / std::f64::consts::LN_2
    }
}

struct ArcObjective<'a> {
    inst: &'a QpInstance,
    arc: KraftArc,
}

impl ArcObjective<'_> {
    fn value(&self, s: f64) -> f64 {
        self.inst.objective(self.arc.point(s))
    }

    fn slope(&self, s: f64) -> f64 {
        let g = self.inst.gradient(self.arc.point(s));
        let t = self.arc.tangent(s);
        g[0] * t[0] + g[1] * t[1]
    }

    fn curvature(&self, s: f64) -> f64 {
        let q = &self.inst.q;
        let g = self.inst.gradient(self.arc.point(s));
        let t = self.arc.tangent(s);
        let c = self.arc.curvature(s);
        2.0 * (q[0][0] * t[0] * t[0] + 2.0 * q[0][1] * t[0] * t[1] + q[1][1] * t[1] * t[1])
            + (g[0] + g[1]) * c
    }

    /// Root of the slope in `[lo, hi]` with `slope(lo) < 0 < slope(hi)`:
    /// Newton steps kept inside a shrinking bisection bracket.
    fn stationary_point(&self, mut lo: f64, mut hi: f64) -> f64 {
        let mut s = 0.5 * (lo + hi);
        for _ in 0..200 {
            let d = self.slope(s);
            if d == 0.0 {
                break;
            }
            if d < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let c = self.curvature(s);
            let newton = s - d / c;
            let next = if c > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - s).abs() <= 1e-15 * (1.0 + s.abs()) || hi - lo <= 1e-15 * (1.0 + s.abs()) {
                s = next;
                break;
            }
            s = next;
        }
        s
    }

    /// Minimum over the closed sub-arc `[lo, hi]`.
    fn minimize(&self, lo: f64, hi: f64) -> f64 {
        if hi - lo <= 0.0 {
            return lo;
        }
        let n = ARC_SCAN;
        let grid: Vec<f64> = (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .collect();
        let (best, _) = grid
            .iter()
            .enumerate()
            .map(|(i, &s)| (i, self.value(s)))
            .fold(
                (0, f64::INFINITY),
                |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
            );
        let left = grid[best.saturating_sub(1)];
        let right = grid[(best + 1).min(n)];
        let (dl, dr) = (self.slope(left), self.slope(right));
        let mut options = vec![grid[best]];
        if dl < 0.0 && dr > 0.0 {
            options.push(self.stationary_point(left, right));
        } else {
            // The scan minimum sits against an end of the sub-arc.
            options.push(left);
            options.push(right);
        }
        options
            .into_iter()
            .fold((lo, f64::INFINITY), |acc, s| {
                let v = self.value(s);
                if v < acc.1 {
                    (s, v)
                } else {
                    acc
                }
            })
            .0
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    l: [f64; 2],
    cap_bound: bool,
}

/// Bisection for a root of a monotone function on `[lo, hi]`, returning the
/// end of the final bracket on which `f >= 0`.
fn bisect_nonneg(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let nonneg_at_lo = f(lo) >= 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) >= 0.0) == nonneg_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if nonneg_at_lo {
        lo
    } else {
        hi
    }
}

/// Feasible sub-arcs of the Kraft arc (where the rate constraint holds) and
/// the parameters at which the arc crosses the rate line.
fn feasible_subarcs(inst: &QpInstance, arc: &KraftArc) -> (Vec<(f64, f64)>, Vec<f64>) {
    let rate_margin = |s: f64| -inst.rate_violation(arc.point(s));
    let (lo, hi) = (-arc.s_max, arc.s_max);
    // The margin is convex in s with its minimum where e^s = p₁/p₂.
    let s_min = match (inst.p[0] > 0.0, inst.p[1] > 0.0) {
        (true, true) => (inst.p[0] / inst.p[1]).ln().clamp(lo, hi),
        (true, false) => hi,
        _ => lo,
    };
    if rate_margin(s_min) >= 0.0 {
        return (vec![(lo, hi)], Vec::new());
    }
    let mut arcs = Vec::new();
    let mut crossings = Vec::new();
    if rate_margin(lo) >= 0.0 {
        let root = bisect_nonneg(rate_margin, lo, s_min);
        arcs.push((lo, root));
        crossings.push(root);
    }
    if rate_margin(hi) >= 0.0 {
        let root = bisect_nonneg(rate_margin, s_min, hi);
        arcs.push((root, hi));
        crossings.push(root);
    }
    (arcs, crossings)
}

fn interior_candidate(inst: &QpInstance) -> Option<Candidate> {
    let q = &inst.q;
    let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
    let scale = q[0][0].abs() * q[1][1].abs() + q[0][1] * q[0][1];
    if !(q[0][0] > 0.0 && det > 1e-12 * scale) {
        return None;
    }
    let l = [
        (q[1][1] * inst.q_theta[0] - q[0][1] * inst.q_theta[1]) / (2.0 * det),
        (q[0][0] * inst.q_theta[1] - q[1][0] * inst.q_theta[0]) / (2.0 * det),
    ];
    inst.is_feasible(l).then_some(Candidate {
        l,
        cap_bound: false,
    })
}

fn rate_line_candidate(inst: &QpInstance) -> Option<Candidate> {
    let p = inst.p;
    let q = &inst.q;
    let base = inst.rate_bound / (2.0 * (p[0] + p[1]));
    let l0 = [base, base];
    let d = [p[1], -p[0]];
    let qd = [
        q[0][0] * d[0] + q[0][1] * d[1],
        q[1][0] * d[0] + q[1][1] * d[1],
    ];
    let curv = d[0] * qd[0] + d[1] * qd[1];
    if !(curv > 1e-14 * (d[0] * d[0] + d[1] * d[1])) {
        return None;
    }
    let lin =
        inst.q_theta[0] * d[0] + inst.q_theta[1] * d[1] - 2.0 * (qd[0] * l0[0] + qd[1] * l0[1]);
    let t = lin / (2.0 * curv);
    let l = [l0[0] + t * d[0], l0[1] + t * d[1]];
    inst.is_feasible(l).then_some(Candidate {
        l,
        cap_bound: false,
    })
}

/// Minimizes over the edge `l[fixed] = LENGTH_CAP`.
fn cap_edge_candidate(inst: &QpInstance, fixed: usize) -> Option<Candidate> {
    let free = 1 - fixed;
    let q = &inst.q;
    let cap_term = (-LENGTH_CAP).exp2();
    if inst.kraft_bound <= cap_term {
        return None;
    }
    let mut lo = -(inst.kraft_bound - cap_term).log2();
    let rate_rest = inst.rate_bound - 2.0 * inst.p[fixed] * LENGTH_CAP;
    if inst.p[free] > 0.0 {
        lo = lo.max(rate_rest / (2.0 * inst.p[free]));
    } else if rate_rest > 0.0 {
        return None;
    }
    if lo > LENGTH_CAP {
        return None;
    }
    // f along the edge: q_ff x² + (2 q_fx CAP - q_f) x + const.
    let a2 = q[free][free];
    let a1 = 2.0 * q[free][fixed] * LENGTH_CAP - inst.q_theta[free];
    let x = if a2 > 0.0 {
        (-a1 / (2.0 * a2)).clamp(lo, LENGTH_CAP)
    } else if a1 > 0.0 {
        lo
    } else {
        LENGTH_CAP
    };
    let mut l = [0.0; 2];
    l[fixed] = LENGTH_CAP;
    l[free] = x;
    inst.is_feasible(l)
        .then_some(Candidate { l, cap_bound: true })
}

fn multipliers(inst: &QpInstance, l: [f64; 2], kraft: bool, rate: bool) -> (f64, f64) {
    let g = inst.gradient(l);
    let ln2 = std::f64::consts::LN_2;
    let u = [ln2 * (-l[0]).exp2(), ln2 * (-l[1]).exp2()];
    let v = [2.0 * inst.p[0], 2.0 * inst.p[1]];
    let project = |w: [f64; 2]| (g[0] * w[0] + g[1] * w[1]) / (w[0] * w[0] + w[1] * w[1]);
    match (kraft, rate) {
        (false, false) => (0.0, 0.0),
        (true, false) => (project(u), 0.0),
        (false, true) => (0.0, project(v)),
        (true, true) => {
            let det = u[0] * v[1] - u[1] * v[0];
            if det.abs() <= 1e-14 * (u[0].abs() + u[1].abs()) * (v[0].abs() + v[1].abs()) {
                (project(u), 0.0)
            } else {
                (
                    (g[0] * v[1] - g[1] * v[0]) / det,
                    (u[0] * g[1] - u[1] * g[0]) / det,
                )
            }
        }
    }
}

fn finish(inst: &QpInstance, cand: Candidate) -> QpSolution {
    let l = cand.l;
    let kv = inst.kraft_violation(l);
    let rv = inst.rate_violation(l);
    let kraft_active = kv.abs() <= ACTIVE_TOL;
    let rate_active = rv.abs() <= ACTIVE_TOL * inst.rate_bound.abs().max(1.0);
    let (lambda, gamma) = multipliers(inst, l, kraft_active, rate_active);
    let g = inst.gradient(l);
    let ln2 = std::f64::consts::LN_2;
    let residual = (0..2)
        .map(|i| (g[i] - lambda * ln2 * (-l[i]).exp2() - 2.0 * gamma * inst.p[i]).abs())
        .fold(0.0, f64::max);
    QpSolution {
        l,
        objective: inst.objective(l),
        lambda,
        gamma,
        kraft_active,
        rate_active,
        cap_bound: cand.cap_bound,
        stationarity_residual: residual,
        kraft_complementarity: (lambda * kv).abs(),
        rate_complementarity: (gamma * rv).abs(),
    }
}

/// Global minimizer of the instance. Ties are broken towards the
/// lexicographically smallest `(l₁, l₂)`.
pub fn solve_qp(inst: &QpInstance) -> Result<QpSolution> {
    inst.validate()?;
    let arc = KraftArc::new(inst.kraft_bound);
    let mut candidates: Vec<Candidate> = Vec::new();

    candidates.extend(interior_candidate(inst));
    candidates.extend(rate_line_candidate(inst));

    let (subarcs, crossings) = feasible_subarcs(inst, &arc);
    let along = ArcObjective { inst, arc };
    for (lo, hi) in subarcs {
        let s = along.minimize(lo, hi);
        let l = arc.point(s);
        let at_cap = l.iter().any(|&x| x >= LENGTH_CAP);
        if inst.is_feasible(l) {
            candidates.push(Candidate {
                l,
                cap_bound: at_cap,
            });
        }
    }
    for s in crossings {
        let l = arc.point(s);
        if inst.is_feasible(l) {
            let cap_bound = l.iter().any(|&x| x >= LENGTH_CAP);
            candidates.push(Candidate { l, cap_bound });
        }
    }
    candidates.extend(cap_edge_candidate(inst, 0));
    candidates.extend(cap_edge_candidate(inst, 1));

    let best = candidates
        .into_iter()
        .map(|c| (inst.objective(c.l), c))
        .fold(None::<(f64, Candidate)>, |acc, (v, c)| match acc {
            None => Some((v, c)),
            Some((bv, bc)) => {
                let tol = 1e-13 * bv.abs().max(1.0);
                if v < bv - tol || (v <= bv + tol && (c.l[0], c.l[1]) < (bc.l[0], bc.l[1])) {
                    Some((v, c))
                } else {
                    Some((bv, bc))
                }
            }
        });
    match best {
        Some((_, c)) => Ok(finish(inst, c)),
        None => Err(Error::Infeasible(format!(
            "no lengths up to {LENGTH_CAP} satisfy Kraft bound {} and E[L] >= {}",
            inst.kraft_bound, inst.rate_bound
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance(q: [[f64; 2]; 2], q_theta: [f64; 2], rate_bound: f64, p: [f64; 2]) -> QpInstance {
        QpInstance {
            q,
            q_theta,
            kraft_bound: 0.5,
            rate_bound,
            p,
            p_tilde: p,
        }
    }

    #[test]
    fn interior_optimum() {
        // Unconstrained minimizer (4, 5) satisfies both constraints.
        let inst = instance([[1.0, 0.0], [0.0, 1.0]], [8.0, 10.0], 0.0, [0.25, 0.25]);
        let s = solve_qp(&inst).unwrap();
        assert!((s.l[0] - 4.0).abs() < 1e-12 && (s.l[1] - 5.0).abs() < 1e-12);
        assert!(!s.kraft_active && !s.rate_active);
        assert_eq!((s.lambda, s.gamma), (0.0, 0.0));
    }

    #[test]
    fn kraft_binds_for_short_targets() {
        let inst = instance([[1.0, 0.0], [0.0, 1.0]], [2.0, 2.0], 0.0, [0.25, 0.25]);
        let s = solve_qp(&inst).unwrap();
        // Symmetric: l₁ = l₂ = 2 on the arc.
        assert!((s.l[0] - 2.0).abs() < 1e-9 && (s.l[1] - 2.0).abs() < 1e-9);
        assert!(s.kraft_active && s.lambda > 0.0);
        assert!(s.stationarity_residual < 1e-8);
    }

    #[test]
    fn rate_binds_for_steep_bound() {
        let inst = instance([[1.0, 0.0], [0.0, 1.0]], [8.0, 10.0], 6.0, [0.25, 0.25]);
        let s = solve_qp(&inst).unwrap();
        assert!(s.rate_active && !s.kraft_active && s.gamma > 0.0);
        assert!((0.5 * (s.l[0] + s.l[1]) - 6.0).abs() < 1e-9);
        assert!(s.stationarity_residual < 1e-8);
    }

    #[test]
    fn infeasible_rate() {
        let inst = instance([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0], 1e3, [0.25, 0.25]);
        assert!(matches!(solve_qp(&inst), Err(Error::Infeasible(_))));
    }

    #[test]
    fn arc_parametrization_stays_on_arc() {
        let arc = KraftArc::new(0.5);
        for &s in &[-40.0, -3.0, 0.0, 0.7, 12.0] {
            let l = arc.point(s);
            assert!(((-l[0]).exp2() + (-l[1]).exp2() - 0.5).abs() < 1e-15);
        }
        assert!((arc.point(arc.s_max)[1] - LENGTH_CAP).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_q() {
        let inst = instance([[1.0, 0.1], [0.0, 1.0]], [0.0, 0.0], 0.0, [0.25, 0.25]);
        assert!(matches!(solve_qp(&inst), Err(Error::Domain(_))));
    }
}
