use serde_json::{json, Value};
use wiener_coding::code_optimizer::{optimize_lengths, OptimizationResult};
use wiener_coding::mse_model::ideal_benchmark;
use wiener_coding::{
    integer_oracle, mse_exact, mse_large_mu, optimize_threshold, run, scheme_constants, Codebook,
    Error as CoreError, RateConstraint, Scheme, SimConfig, SimulationReport, ThresholdConfig,
};

use crate::error::CliError;
use crate::options::{Command, ExperimentSpec};
use crate::output::{self, real_json, Cell, Table};

pub fn execute(spec: &ExperimentSpec) -> Result<(), CliError> {
    let out = spec.output_path();
    // Refuse before doing any work.
    if let Some(p) = &out {
        output::ensure_writable(p, spec.force)?;
    }
    if let Some(p) = &spec.cycles {
        output::ensure_writable(p, spec.force)?;
        if out.as_deref() == Some(p.as_path()) {
            return Err(CliError::usage(
                "cycles",
                "must differ from the output file",
            ));
        }
    }
    let bytes = match spec.command {
        Command::Analyze => output::render_table(spec, &analyze(spec)?)?,
        Command::Optimize => output::render_table(spec, &optimize(spec)?)?,
        Command::Sweep => output::render_table(spec, &sweep(spec)?)?,
        Command::Simulate => {
            let (bytes, log) = simulate(spec)?;
            if let (Some(path), Some(log)) = (&spec.cycles, log) {
                output::write_atomic(path, &log, spec.force)?;
            }
            bytes
        }
    };
    output::emit(out.as_deref(), &bytes, spec.force)
}

fn rate_constraint(spec: &ExperimentSpec) -> Result<RateConstraint, CliError> {
    if spec.fmax.is_infinite() {
        Ok(RateConstraint::unconstrained())
    } else {
        Ok(RateConstraint::new(spec.fmax)?)
    }
}

/// `(a, b)` pairs: the grid with `a = b`, or the single configured pair.
fn threshold_points(spec: &ExperimentSpec) -> Vec<(f64, f64)> {
    match &spec.grid {
        Some(g) => g.points().into_iter().map(|a| (a, a)).collect(),
        None => vec![(spec.a, spec.b)],
    }
}

pub const ANALYZE_COLUMNS: [&str; 21] = [
    "a",
    "b",
    "mu",
    "sigma2",
    "l1",
    "l2",
    "l3",
    "l4",
    "p1",
    "p2",
    "p3",
    "p4",
    "a_tilde",
    "b_tilde",
    "x_tilde",
    "d",
    "k",
    "mse",
    "mse_large_mu",
    "sr",
    "sr_large_mu",
];

pub fn analyze(spec: &ExperimentSpec) -> Result<Table, CliError> {
    let cb = Codebook::relaxed(spec.l)?;
    let mut table = Table::new(ANALYZE_COLUMNS.to_vec());
    for (a, b) in threshold_points(spec) {
        let cfg = ThresholdConfig::new(a, b, spec.mu)?.with_sigma2(spec.sigma2)?;
        let c = scheme_constants(&cfg)?;
        let exact = mse_exact(&cfg, &cb)?;
        let large = mse_large_mu(&cfg, &cb)?;
        let p = c.probabilities.as_array();
        let mut row: Vec<Cell> = vec![a.into(), b.into(), spec.mu.into(), spec.sigma2.into()];
        row.extend(spec.l.iter().map(|&l| Cell::from(l)));
        row.extend(p.iter().map(|&x| Cell::from(x)));
        row.extend(
            [
                c.a_tilde, c.b_tilde, c.x_tilde, c.d, c.k, exact.mse, large.mse, exact.sr, large.sr,
            ]
            .map(Cell::from),
        );
        table.push(row);
    }
    Ok(table)
}

pub const OPTIMIZE_COLUMNS: [&str; 16] = [
    "a_star",
    "fmax",
    "sigma2",
    "l1",
    "l2",
    "theta_star",
    "mse",
    "sr",
    "kraft_slack",
    "rate_slack",
    "kraft_active",
    "rate_active",
    "cap_bound",
    "int_l1",
    "int_l2",
    "int_mse",
];

pub fn optimize(spec: &ExperimentSpec) -> Result<Table, CliError> {
    let rc = rate_constraint(spec)?;
    let grid = spec.grid.expect("optimize always has a grid");
    let best = optimize_threshold(&rc, &grid)?;
    let cfg = ThresholdConfig::symmetric(best.a_star, f64::INFINITY)?.with_sigma2(spec.sigma2)?;
    let int = match integer_oracle(&cfg, &rc, spec.lmax) {
        Ok(s) => Some(s),
        Err(CoreError::Infeasible(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let l = best.lengths.lengths();
    let il = int.map(|s| s.lengths.lengths());
    let mut table = Table::new(OPTIMIZE_COLUMNS.to_vec());
    table.push(vec![
        best.a_star.into(),
        spec.fmax.into(),
        spec.sigma2.into(),
        l[0].into(),
        l[1].into(),
        best.theta_star.into(),
        (spec.sigma2 * best.mse).into(),
        best.sr.into(),
        best.kraft_slack.into(),
        best.rate_slack.into(),
        best.active.kraft.into(),
        best.active.rate.into(),
        best.cap_bound.into(),
        il.map(|l| l[0]).into(),
        il.map(|l| l[1]).into(),
        int.map(|s| s.mse).into(),
    ]);
    Ok(table)
}

const SWEEP_COLUMNS: [&str; 17] = [
    "a",
    "feasible",
    "opt_mse",
    "opt_sr",
    "l1",
    "l2",
    "kraft_active",
    "rate_active",
    "cap_bound",
    "int_l1",
    "int_l2",
    "int_mse",
    "int_sr",
    "uniform_mse",
    "uniform_sr",
    "ideal_mse",
    "ideal_sr",
];

const SWEEP_SIM_COLUMNS: [&str; 6] = [
    "sim_int_mse",
    "sim_int_sr",
    "sim_uniform_mse",
    "sim_uniform_sr",
    "sim_ideal_mse",
    "sim_ideal_sr",
];

pub fn sweep_columns(simulate: bool) -> Vec<&'static str> {
    let mut cols = SWEEP_COLUMNS.to_vec();
    if simulate {
        cols.extend(SWEEP_SIM_COLUMNS);
    }
    cols
}

fn sim_config(
    spec: &ExperimentSpec,
    cfg: ThresholdConfig,
    cb: Codebook,
    seed: u64,
    scheme: Scheme,
) -> SimConfig {
    SimConfig {
        eps: spec.eps,
        horizon: spec.horizon,
        seed,
        scheme,
        replications: spec.reps,
        ..SimConfig::new(cfg, cb)
    }
}

/// Large-slope analytics per grid point. Simulated overlays use the
/// configured finite slope, with seed `seed + i` at the `i`-th point.
pub fn sweep(spec: &ExperimentSpec) -> Result<Table, CliError> {
    let rc = rate_constraint(spec)?;
    let grid = spec.grid.expect("sweep always has a grid");
    if spec.simulate && !spec.mu.is_finite() {
        return Err(CliError::usage(
            "mu",
            "simulated overlays need a finite slope",
        ));
    }
    let uniform = Codebook::uniform(2.0)?;
    let mut table = Table::new(sweep_columns(spec.simulate));
    for (i, a) in grid.points().into_iter().enumerate() {
        let opt: Option<OptimizationResult> = match optimize_lengths(a, &rc) {
            Ok(r) => Some(r),
            Err(CoreError::Infeasible(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let large = ThresholdConfig::symmetric(a, f64::INFINITY)?.with_sigma2(spec.sigma2)?;
        let int = match integer_oracle(&large, &rc, spec.lmax) {
            Ok(s) => Some(s),
            Err(CoreError::Infeasible(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let uni = mse_large_mu(&large, &uniform)?;
        let ideal = ideal_benchmark(a, spec.sigma2)?;
        let l = opt.map(|o| o.lengths.lengths());
        let il = int.map(|s| s.lengths.lengths());
        let mut row: Vec<Cell> = vec![
            a.into(),
            opt.is_some().into(),
            opt.map(|o| spec.sigma2 * o.mse).into(),
            opt.map(|o| o.sr).into(),
            l.map(|l| l[0]).into(),
            l.map(|l| l[1]).into(),
            opt.map(|o| o.active.kraft).into(),
            opt.map(|o| o.active.rate).into(),
            opt.map(|o| o.cap_bound).into(),
            il.map(|l| l[0]).into(),
            il.map(|l| l[1]).into(),
            int.map(|s| s.mse).into(),
            int.map(|s| s.sr).into(),
            uni.mse.into(),
            uni.sr.into(),
            ideal.mse.into(),
            ideal.sr.into(),
        ];
        if spec.simulate {
            let seed = spec.seed.wrapping_add(i as u64);
            let cfg = ThresholdConfig::symmetric(a, spec.mu)?.with_sigma2(spec.sigma2)?;
            let int_sim = match int {
                Some(s) => {
                    let cb = integer_codebook(s.lengths.lengths())?;
                    Some(run(&sim_config(spec, cfg, cb, seed, Scheme::Monotone))?)
                }
                None => None,
            };
            let uni_sim = run(&sim_config(
                spec,
                cfg,
                uniform,
                seed,
                Scheme::UniformBenchmark,
            ))?;
            let ideal_sim = run(&sim_config(
                spec,
                cfg,
                uniform,
                seed,
                Scheme::IdealBenchmark,
            ))?;
            row.extend([
                int_sim.as_ref().map(|r| r.mse_hat).into(),
                int_sim.as_ref().map(|r| r.sr_hat).into(),
                uni_sim.mse_hat.into(),
                uni_sim.sr_hat.into(),
                ideal_sim.mse_hat.into(),
                ideal_sim.sr_hat.into(),
            ]);
        }
        table.push(row);
    }
    Ok(table)
}

/// Integer codebook when every length is a whole number, otherwise the
/// relaxed one (which the simulator rejects with a parameter error).
fn integer_codebook(l: [f64; 4]) -> Result<Codebook, CliError> {
    let relaxed = Codebook::relaxed(l)?;
    Ok(match relaxed.integer_lengths() {
        Some(n) => Codebook::integer(n)?,
        None => relaxed,
    })
}

const SIMULATE_COLUMNS: [&str; 10] = [
    "scheme",
    "mse_hat",
    "mse_ci",
    "sr_hat",
    "sr_ci",
    "cycles",
    "replications",
    "analytic_mse",
    "analytic_sr",
    "seed",
];

/// Analytic counterpart of a simulated scheme.
fn analytic(spec: &ExperimentSpec, cfg: &ThresholdConfig, cb: &Codebook) -> Option<(f64, f64)> {
    match spec.scheme.into() {
        Scheme::IdealBenchmark => ideal_benchmark(cfg.a, cfg.sigma2)
            .ok()
            .map(|m| (m.mse, m.sr)),
        Scheme::UniformBenchmark => {
            let cb = Codebook::uniform(2.0).ok()?;
            mse_exact(cfg, &cb).ok().map(|m| (m.mse, m.sr))
        }
        Scheme::Monotone => mse_exact(cfg, cb).ok().map(|m| (m.mse, m.sr)),
    }
}

fn opt_json(x: Option<f64>) -> Value {
    x.map_or(Value::Null, real_json)
}

fn report_json(report: &SimulationReport, theory: Option<(f64, f64)>) -> Value {
    let reps: Vec<Value> = report
        .replications
        .iter()
        .map(|r| {
            json!({
                "index": r.index,
                "mse": real_json(r.mse),
                "sr": real_json(r.sr),
                "cycles": r.cycles,
                "renewal_mse": real_json(r.renewal_mse),
                "decoder_residual": real_json(r.decoder_residual),
            })
        })
        .collect();
    json!({
        "scheme": report.scheme,
        "mse_hat": real_json(report.mse_hat),
        "mse_ci": opt_json(report.mse_ci),
        "sr_hat": real_json(report.sr_hat),
        "sr_ci": opt_json(report.sr_ci),
        "event_counts": report.event_counts,
        "cycles": report.cycles,
        "analytic_mse": opt_json(theory.map(|t| t.0)),
        "analytic_sr": opt_json(theory.map(|t| t.1)),
        "replications": reps,
    })
}

fn simulate(spec: &ExperimentSpec) -> Result<(Vec<u8>, Option<Vec<u8>>), CliError> {
    let cfg = ThresholdConfig::new(spec.a, spec.b, spec.mu)?.with_sigma2(spec.sigma2)?;
    let cb = integer_codebook(spec.l)?;
    let mut sim = sim_config(spec, cfg, cb, spec.seed, spec.scheme.into());
    sim.record_cycles = spec.cycles.is_some();
    let report = run(&sim)?;
    let theory = analytic(spec, &cfg, &cb);

    let scheme = match report.scheme {
        Scheme::Monotone => "monotone",
        Scheme::UniformBenchmark => "uniform-benchmark",
        Scheme::IdealBenchmark => "ideal-benchmark",
    };
    let mut summary = Table::new(SIMULATE_COLUMNS.to_vec());
    summary.push(vec![
        Cell::Text(scheme),
        report.mse_hat.into(),
        report.mse_ci.into(),
        report.sr_hat.into(),
        report.sr_ci.into(),
        report.cycles.into(),
        (report.replications.len() as u64).into(),
        theory.map(|t| t.0).into(),
        theory.map(|t| t.1).into(),
        spec.seed.into(),
    ]);
    let bytes = output::render_report(spec, report_json(&report, theory), &summary)?;
    let log = match spec.cycles {
        Some(_) => Some(output::records_csv(&report.records)?),
        None => None,
    };
    Ok((bytes, log))
}
