//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p wiener-coding --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wiener_coding::code_optimizer::{optimize_lengths, ActiveConstraints};
use wiener_coding::hitting_times::{estimate_moments, HitSampler};
use wiener_coding::mse_model::{mse_integral_oracle, OracleSettings, StopRule};
use wiener_coding::{
    build_qp, dinkelbach_solve, event_probabilities, hit_moments, integer_oracle,
    length_independence_test, mse_exact, mse_large_mu, partial_moments, run, sampling_rate,
    scheme_constants, verify_ktilde_negative, Codebook, DriftHitSpec, RateConstraint, RateMode,
    SimConfig, ThresholdConfig,
};

struct Gate {
    failed: Vec<u32>,
}

impl Gate {
    fn check(&mut self, id: u32, title: &str, body: impl FnOnce() -> (bool, String)) {
        let start = Instant::now();
        let (ok, detail) = body();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2} {} {title}: {detail} ({secs:.1} s)",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            self.failed.push(id);
        }
    }
}

fn sym(a: f64, mu: f64) -> ThresholdConfig {
    ThresholdConfig::symmetric(a, mu).unwrap()
}

fn zero_threshold_anchor() -> (bool, String) {
    let start = Instant::now();
    let cfg = sym(0.0, f64::INFINITY);
    let sol = dinkelbach_solve(&cfg, &RateConstraint::unconstrained()).unwrap();
    let cb = Codebook::symmetric(sol.l[0], sol.l[1]).unwrap();
    let m = mse_large_mu(&cfg, &cb).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ok = (sol.l[0] - 1.0).abs() <= 1e-6
        && (m.mse - 1.5).abs() <= 1e-6
        && (m.sr - 1.0).abs() <= 1e-6
        && secs < 1.0;
    (
        ok,
        format!(
            "l1 = {:.9}, mse = {:.9}, sr = {:.9}, solve {secs:.3} s",
            sol.l[0], m.mse, m.sr
        ),
    )
}

fn simulation_agreement() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, &a) in [0.25, 0.5, 1.0, 1.5].iter().enumerate() {
        let cfg = sym(a, 10.0);
        let cb = Codebook::integer([2; 4]).unwrap();
        let mut sim = SimConfig::new(cfg, cb);
        sim.eps = 1e-2;
        sim.horizon = 1e5;
        sim.replications = 20;
        sim.seed = 0xA11CE + i as u64;
        let rep = run(&sim).unwrap();
        let exact = mse_exact(&cfg, &cb).unwrap();
        let sr = sampling_rate(&cfg, &cb, RateMode::Exact).unwrap();
        let dm = (rep.mse_hat - exact.mse).abs() / exact.mse;
        let ds = (rep.sr_hat - sr).abs() / sr;
        ok &= dm <= 0.05 && ds <= 0.05;
        parts.push(format!(
            "a={a}: mse {:.2}% sr {:.2}%",
            100.0 * dm,
            100.0 * ds
        ));
    }
    (ok, parts.join(", "))
}

fn hitting_moments() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, &(c, mu)) in [(1.0, 1.0), (2.0, 1.0), (1.0, 10.0)].iter().enumerate() {
        let spec = DriftHitSpec::new(c, mu).unwrap();
        let sampler = HitSampler::new(&spec, 1e-4).unwrap();
        let est = estimate_moments(&spec, &sampler, 100_000, 0xC0FFEE + i as u64).unwrap();
        let m = hit_moments(&spec).unwrap();
        let d1 = (est.mean[0] - m.m1).abs() / m.m1;
        let d2 = (est.mean[1] - m.m2).abs() / m.m2;
        ok &= d1 <= 0.02 && d2 <= 0.02 && est.truncated == 0;
        parts.push(format!(
            "({c},{mu}): m1 {:.2}% m2 {:.2}%",
            100.0 * d1,
            100.0 * d2
        ));
    }
    (ok, parts.join(", "))
}

fn stopping_identity() -> (bool, String) {
    let settings = OracleSettings {
        step: 1e-3,
        paths: 100_000,
        seed: 0x570,
    };
    let rules = [
        ("deterministic", StopRule::Deterministic { t: 1.0 }),
        (
            "band",
            StopRule::BandExit {
                upper: 1.0,
                lower: 1.0,
            },
        ),
        ("sloped", StopRule::SlopedThreshold { c: 1.0, mu: 2.0 }),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, rule) in rules {
        let est = mse_integral_oracle(&rule, 1e3, &settings).unwrap();
        let joint = (est.integral_se.powi(2) + est.moment_se.powi(2)).sqrt();
        let z = (est.integral - est.moment).abs() / joint;
        ok &= est.agrees_within(1.96) && est.truncated == 0;
        if let Some((lhs, rhs)) = est.analytic {
            ok &= lhs == 0.5 && rhs == 0.5;
        }
        parts.push(format!(
            "{name}: {:.4} vs {:.4} (z = {z:.2})",
            est.integral, est.moment
        ));
    }
    (ok, parts.join(", "))
}

fn slack_and_regions() -> (bool, String) {
    let grid: Vec<f64> = (1..=30).map(|i| i as f64 / 10.0).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for f_max in [0.2, 0.5, f64::INFINITY] {
        let rc = RateConstraint::new(f_max).unwrap();
        let results: Vec<_> = grid
            .iter()
            .map(|&a| optimize_lengths(a, &rc).unwrap())
            .collect();
        let worst = results
            .iter()
            .map(|r| r.kraft_slack.min(r.rate_slack))
            .fold(f64::NEG_INFINITY, f64::max);
        ok &= worst <= 1e-6;
        let mut line = format!("f_max={f_max}: max min-slack {worst:.1e}");
        if f_max.is_finite() {
            let active: Vec<ActiveConstraints> = results.iter().map(|r| r.active).collect();
            match two_regions(&active) {
                Some(k) => line += &format!(", rate-active below a={}", grid[k]),
                None => {
                    ok = false;
                    line += ", no two-region split";
                }
            }
        }
        parts.push(line);
    }
    (ok, parts.join("; "))
}

/// Index of the first Kraft-active point when the rate constraint is
/// active on a non-empty prefix and Kraft on the non-empty rest.
fn two_regions(active: &[ActiveConstraints]) -> Option<usize> {
    let k = active.iter().position(|x| x.kraft && !x.rate)?;
    let prefix = active[..k].iter().all(|x| x.rate);
    let suffix = active[k..].iter().all(|x| x.kraft);
    (k > 0 && prefix && suffix).then_some(k)
}

fn ktilde_and_psd() -> (bool, String) {
    let grid: Vec<f64> = (1..=400).map(|i| i as f64 / 100.0).collect();
    let report = verify_ktilde_negative(&grid).unwrap();
    let rc = RateConstraint::unconstrained();
    let min_eig = grid
        .iter()
        .map(|&a| {
            build_qp(&sym(a, f64::INFINITY), 1.0, &rc)
                .unwrap()
                .min_eigenvalue()
        })
        .fold(f64::INFINITY, f64::min);
    (
        report.all_negative && min_eig >= -1e-10,
        format!(
            "max K~ = {:.4} at a = {}, min eigenvalue of Q = {min_eig:.3e}",
            report.max, report.argmax
        ),
    )
}

/// Minimum of `lᵀQl / E_P[L]` over the `[1, 20]²` grid of step 1e-3.
fn brute_force_theta(a: f64) -> f64 {
    let inst = build_qp(
        &sym(a, f64::INFINITY),
        0.0,
        &RateConstraint::unconstrained(),
    )
    .unwrap();
    let n = 19_001;
    let ls: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 1e-3).collect();
    let pow: Vec<f64> = ls.iter().map(|&l| (-l).exp2()).collect();
    let q = inst.q;
    let p = inst.p;
    let mut best = f64::INFINITY;
    for (i, &l1) in ls.iter().enumerate() {
        let room = 0.5 - pow[i];
        // 2^-l₂ is decreasing, so the feasible l₂ form a suffix.
        let start = pow.partition_point(|&x| x > room * (1.0 + 1e-15));
        for &l2 in &ls[start..] {
            let num = q[0][0] * l1 * l1 + 2.0 * q[0][1] * l1 * l2 + q[1][1] * l2 * l2;
            let v = num / (2.0 * (p[0] * l1 + p[1] * l2));
            best = best.min(v);
        }
    }
    best
}

fn dinkelbach_vs_grid() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for a in [0.5, 1.0, 2.0] {
        let sol =
            dinkelbach_solve(&sym(a, f64::INFINITY), &RateConstraint::unconstrained()).unwrap();
        let grid = brute_force_theta(a);
        ok &= (sol.theta - grid).abs() <= 1e-3;
        parts.push(format!("a={a}: {:.6} vs {:.6}", sol.theta, grid));
    }
    (ok, parts.join(", "))
}

fn relaxation_bound() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0_0D);
    let mut smallest_gap = f64::INFINITY;
    let mut violations = 0;
    for _ in 0..50 {
        let a: f64 = rng.random_range(0.0..3.0);
        let f_max = if rng.random_bool(0.3) {
            f64::INFINITY
        } else {
            rng.random_range(0.1..2.0)
        };
        let rc = RateConstraint::new(f_max).unwrap();
        let cfg = sym(a, f64::INFINITY);
        let relaxed = dinkelbach_solve(&cfg, &rc).unwrap().theta;
        let integer = integer_oracle(&cfg, &rc, 12).unwrap().mse;
        let gap = integer - relaxed;
        smallest_gap = smallest_gap.min(gap);
        if gap < -1e-9 {
            violations += 1;
        }
    }
    (
        violations == 0,
        format!("50 instances, {violations} violations, smallest gap {smallest_gap:.3e}"),
    )
}

fn length_independence() -> (bool, String) {
    let cfg = sym(1.0, 10.0);
    let mut sim = SimConfig::new(cfg, Codebook::integer([1, 2, 3, 4]).unwrap());
    sim.eps = 1e-3;
    sim.horizon = 2e4;
    sim.replications = 4;
    sim.seed = 0x1E1;
    let rep = run(&sim).unwrap();
    let test = length_independence_test(&rep).unwrap();
    let p = event_probabilities(&cfg).unwrap().as_array();
    let n = rep.cycles as f64;
    let z_max = rep
        .event_counts
        .iter()
        .zip(&p)
        .map(|(&k, &pi)| (k as f64 - n * pi).abs() / (n * pi * (1.0 - pi)).sqrt())
        .fold(0.0, f64::max);
    (
        test.pairs >= 10_000 && test.p_value > 0.01 && z_max <= 3.0,
        format!(
            "{} pairs, chi2 = {:.2} on {} dof, p = {:.3}, max marginal z = {z_max:.2}",
            test.pairs, test.statistic, test.dof, test.p_value
        ),
    )
}

fn sigma_scaling() -> (bool, String) {
    let cb = Codebook::integer([2; 4]).unwrap();
    let base = sym(1.0, 10.0);
    let run_with = |cfg: ThresholdConfig, seed: u64| {
        let mut sim = SimConfig::new(cfg, cb);
        sim.horizon = 5e4;
        sim.replications = 10;
        sim.seed = seed;
        run(&sim).unwrap()
    };
    let one = run_with(base, 0x51);
    let two = run_with(base.with_sigma2(4.0).unwrap(), 0x52);
    let ratio = two.mse_hat / one.mse_hat;
    let analytic = mse_exact(&base.with_sigma2(4.0).unwrap(), &cb).unwrap().mse;
    let vs_analytic = (two.mse_hat - analytic).abs() / analytic;
    (
        (ratio / 4.0 - 1.0).abs() <= 0.05 && vs_analytic <= 0.05,
        format!(
            "ratio {ratio:.4}, sigma=2 vs analytic {:.2}%",
            100.0 * vs_analytic
        ),
    )
}

fn identity_suite() -> (bool, String) {
    let grid: Vec<f64> = (0..=40).map(|i| i as f64 / 10.0).collect();
    let (mut norm, mut dual, mut quartic) = (0.0_f64, 0.0_f64, 0.0_f64);
    for &a in &grid {
        for &b in &grid {
            let cfg = ThresholdConfig::new(a, b, 10.0).unwrap();
            norm = norm.max((event_probabilities(&cfg).unwrap().sum() - 1.0).abs());
            let c = scheme_constants(&cfg).unwrap();
            dual = dual
                .max((c.a_tilde - c.a_tilde_from_moments()).abs())
                .max((c.b_tilde - c.b_tilde_from_moments()).abs());
        }
        let m = partial_moments(&ThresholdConfig::new(a, a, 10.0).unwrap())
            .unwrap()
            .upper;
        let expansion =
            m[0] * a.powi(4) + 4.0 * a.powi(3) * m[1] + 6.0 * a * a * m[2] + 4.0 * a * m[3] + m[4];
        let direct = wiener_coding::gauss_stats::tail_fourth_moment(a);
        quartic = quartic.max((expansion - direct).abs());
    }
    let mut gap = 0.0_f64;
    for a in [0.0, 0.5, 1.0, 2.0] {
        for cb in [[2, 2, 2, 2], [1, 2, 3, 4], [1, 3, 3, 1], [4, 4, 1, 1]] {
            let cfg = sym(a, 1e4);
            let cb = Codebook::integer(cb).unwrap();
            let d = mse_exact(&cfg, &cb).unwrap().mse - mse_large_mu(&cfg, &cb).unwrap().mse;
            gap = gap.max(d.abs());
        }
    }
    (
        norm <= 1e-12 && dual <= 1e-10 && quartic <= 1e-9 && gap <= 1e-3,
        format!(
            "normalization {norm:.1e}, dual forms {dual:.1e}, quartic {quartic:.1e}, mu=1e4 gap {gap:.1e}"
        ),
    )
}

fn main() -> ExitCode {
    let mut gate = Gate { failed: Vec::new() };
    gate.check(1, "zero-threshold anchor", zero_threshold_anchor);
    gate.check(2, "simulation vs exact analytics", simulation_agreement);
    gate.check(3, "hitting-time moments", hitting_moments);
    gate.check(4, "stopping-time quartic identity", stopping_identity);
    gate.check(5, "constraint slack and active regions", slack_and_regions);
    gate.check(6, "K~ sign and Q definiteness", ktilde_and_psd);
    gate.check(7, "bisection vs brute-force grid", dinkelbach_vs_grid);
    gate.check(8, "integer optimum bounded by relaxation", relaxation_bound);
    gate.check(
        9,
        "independence of consecutive lengths",
        length_independence,
    );
    gate.check(10, "variance scaling", sigma_scaling);
    gate.check(11, "identity suite", identity_suite);
    if gate.failed.is_empty() {
        println!("acceptance: all 11 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {:?}", gate.failed);
        ExitCode::FAILURE
    }
}
