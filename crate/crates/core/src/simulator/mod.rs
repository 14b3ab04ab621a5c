//! Discrete-time Monte Carlo of the sampling and coding protocol.
//!
//! Time is cut into steps of width `ε`; the process moves by
//! `N(0, σ²ε)` per step. The sampler compares `W - Ŵ` with the thresholds
//! set by the previous codeword length, detects crossings at the first grid
//! index past the threshold, and sends the event as a codeword occupying
//! `round(ℓ/ε)` indices. The monitor adds the decoded increment (the
//! threshold value, or the sloped threshold at the elapsed time recovered
//! from the timestamps) to `Ŵ` on delivery. Since the sampler measures
//! increments from `Ŵ`, detection overshoot never accumulates.

mod engine;
mod independence;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gauss_stats::{event_probabilities, ThresholdConfig};
use crate::mse_model::{scale_to_sigma, Codebook};

pub use independence::{independence_test_sequences, length_independence_test, IndependenceTest};

use engine::{GridParams, MonotoneParams, RepOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// The four-event threshold scheme with the configured codebook.
    #[default]
    Monotone,
    /// The same sampler with every length equal to 2.
    UniformBenchmark,
    /// Exact real-valued samples with unit delay.
    IdealBenchmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Grid step `ε`.
    pub eps: f64,
    /// Simulated time `T` per replication.
    pub horizon: f64,
    /// Unit-variance thresholds and slope together with `σ²`.
    pub cfg: ThresholdConfig,
    /// Integer code lengths; ignored by the benchmarks.
    pub cb: Codebook,
    pub seed: u64,
    pub scheme: Scheme,
    pub replications: usize,
    /// Fraction of the horizon discarded before measuring.
    pub burn_in: f64,
    /// Keep the cycle log of the first replication.
    pub record_cycles: bool,
}

impl SimConfig {
    pub fn new(cfg: ThresholdConfig, cb: Codebook) -> Self {
        Self {
            eps: 1e-2,
            horizon: 1e5,
            cfg,
            cb,
            seed: 0,
            scheme: Scheme::Monotone,
            replications: 20,
            burn_in: 0.01,
            record_cycles: false,
        }
    }

    fn lengths(&self) -> Result<[u32; 4]> {
        match self.scheme {
            Scheme::UniformBenchmark => Ok([2; 4]),
            Scheme::IdealBenchmark => Ok([1; 4]),
            Scheme::Monotone => self.cb.integer_lengths().ok_or_else(|| {
                invalid(
                    "lengths",
                    format!(
                        "simulation needs integer lengths, got {:?}",
                        self.cb.lengths()
                    ),
                )
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid(
                "eps",
                format!("must be finite and > 0, got {}", self.eps),
            ));
        }
        if !self.cfg.mu.is_finite() && self.scheme != Scheme::IdealBenchmark {
            return Err(invalid("mu", "the simulator needs a finite slope"));
        }
        let lengths = self.lengths()?;
        if self.scheme == Scheme::Monotone {
            let p = event_probabilities(&self.cfg)?.as_array();
            self.cb.check_kraft(&p)?;
        }
        let longest = lengths.iter().copied().max().unwrap_or(1);
        if !(self.horizon >= 100.0 * f64::from(longest)) || !self.horizon.is_finite() {
            return Err(invalid(
                "horizon",
                format!(
                    "must be finite and >= {}, got {}",
                    100 * longest,
                    self.horizon
                ),
            ));
        }
        if self.horizon / self.eps > 1e12 {
            return Err(invalid("horizon", "more than 10^12 grid steps"));
        }
        if self.replications == 0 {
            return Err(invalid("replications", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(invalid(
                "burn_in",
                format!("must lie in [0, 1), got {}", self.burn_in),
            ));
        }
        Ok(())
    }
}

/// One sample as seen by the monitor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub s_n: f64,
    pub d_n: f64,
    pub event: u8,
    pub z_n: f64,
    pub length: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub index: usize,
    pub mse: f64,
    pub sr: f64,
    pub cycles: u64,
    /// Per-cycle reward total over per-cycle duration total.
    pub renewal_mse: f64,
    pub decoder_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scheme: Scheme,
    /// Mean over replications of the time-averaged squared error.
    pub mse_hat: f64,
    /// 95% half-width across replications; absent for one replication.
    pub mse_ci: Option<f64>,
    pub sr_hat: f64,
    pub sr_ci: Option<f64>,
    /// Cycles per event, summed over replications.
    pub event_counts: [u64; 4],
    pub cycles: u64,
    /// Delivered code lengths in order, one sequence per replication.
    pub length_sequence: Vec<Vec<u32>>,
    pub replications: Vec<ReplicationSummary>,
    /// Cycle log of the first replication when requested.
    pub records: Vec<CycleRecord>,
}

fn mean_ci(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(1.96 * (var / n).sqrt()))
}

fn simulate(sim: &SimConfig) -> Result<SimulationReport> {
    sim.validate()?;
    let steps = (sim.horizon / sim.eps).round() as u64;
    let scaled = scale_to_sigma(&sim.cfg);
    let grid = GridParams {
        eps: sim.eps,
        steps,
        burn_in: (sim.burn_in * steps as f64).round() as u64,
        sd: (sim.cfg.sigma2 * sim.eps).sqrt(),
        record: false,
    };
    let mono = MonotoneParams {
        a: scaled.a,
        b: scaled.b,
        mu: scaled.mu,
        lengths: sim.lengths()?,
    };

    let outcomes: Vec<RepOutcome> = (0..sim.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
            rng.set_stream(r as u64);
            let grid = GridParams {
                record: sim.record_cycles && r == 0,
                ..grid
            };
            match sim.scheme {
                Scheme::IdealBenchmark => engine::run_ideal(&grid, scaled.a, &mut rng),
                _ => engine::run_monotone(&grid, &mono, &mut rng),
            }
        })
        .collect::<Result<_>>()?;

    let mses: Vec<f64> = outcomes.iter().map(|o| o.mse).collect();
    let srs: Vec<f64> = outcomes.iter().map(|o| o.sr).collect();
    let (mse_hat, mse_ci) = mean_ci(&mses);
    let (sr_hat, sr_ci) = mean_ci(&srs);
    let mut event_counts = [0u64; 4];
    for o in &outcomes {
        for (total, n) in event_counts.iter_mut().zip(&o.event_counts) {
            *total += n;
        }
    }
    let replications = outcomes
        .iter()
        .enumerate()
        .map(|(index, o)| ReplicationSummary {
            index,
            mse: o.mse,
            sr: o.sr,
            cycles: o.cycles,
            renewal_mse: o.renewal_mse,
            decoder_residual: o.decoder_residual,
        })
        .collect();
    let mut outcomes = outcomes;
    let records = std::mem::take(&mut outcomes[0].records);
    Ok(SimulationReport {
        scheme: sim.scheme,
        mse_hat,
        mse_ci,
        sr_hat,
        sr_ci,
        cycles: event_counts.iter().sum(),
        event_counts,
        length_sequence: outcomes.into_iter().map(|o| o.lengths).collect(),
        replications,
        records,
    })
}

/// Simulates the configured scheme.
pub fn run(sim: &SimConfig) -> Result<SimulationReport> {
    simulate(sim)
}

/// Simulates one of the benchmark schemes.
pub fn run_benchmark(sim: &SimConfig) -> Result<SimulationReport> {
    if sim.scheme == Scheme::Monotone {
        return Err(Error::Unsupported(
            "run_benchmark needs the uniform or ideal benchmark scheme".into(),
        ));
    }
    simulate(sim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(a: f64, lengths: [u32; 4]) -> SimConfig {
        let mut sim = SimConfig::new(
            ThresholdConfig::symmetric(a, 10.0).unwrap(),
            Codebook::integer(lengths).unwrap(),
        );
        sim.horizon = 2000.0;
        sim.replications = 2;
        sim.seed = 7;
        sim.record_cycles = true;
        sim
    }

    #[test]
    fn deterministic_in_seed() {
        let sim = quick(1.0, [2; 4]);
        assert_eq!(run(&sim).unwrap(), run(&sim).unwrap());
    }

    #[test]
    fn records_respect_protocol() {
        let sim = quick(1.0, [1, 2, 3, 4]);
        let rep = run(&sim).unwrap();
        let root = |l: u32| f64::from(l).sqrt();
        let mut prev = 2u32;
        assert!(!rep.records.is_empty());
        for r in &rep.records {
            let ticks = (f64::from(r.length) / sim.eps).round();
            assert_eq!(r.d_n, r.s_n + ticks * sim.eps);
            match r.event {
                2 => assert_eq!(r.z_n, root(prev)),
                3 => assert_eq!(r.z_n, -root(prev)),
                1 | 4 => assert!(r.z_n.abs() >= root(prev)),
                e => panic!("bad event {e}"),
            }
            prev = r.length;
        }
        for s in &rep.replications {
            assert_eq!(s.decoder_residual, 0.0);
            assert!((s.renewal_mse - s.mse).abs() <= 1e-9 * s.mse);
        }
        assert_eq!(rep.cycles, rep.event_counts.iter().sum::<u64>());
    }

    #[test]
    fn validation() {
        let mut sim = quick(1.0, [2; 4]);
        sim.horizon = 100.0;
        assert!(sim.validate().is_err());
        let sim = SimConfig::new(
            ThresholdConfig::symmetric(1.0, 10.0).unwrap(),
            Codebook::uniform(1.5).unwrap(),
        );
        assert!(sim.validate().is_err());
        let sim = quick(1.0, [1, 1, 1, 1]);
        assert!(sim.validate().is_err(), "Kraft violated");
        let sim = quick(0.0, [1, 1, 1, 1]);
        assert!(sim.validate().is_ok(), "band events cannot occur at a = 0");
        assert!(matches!(
            run_benchmark(&quick(1.0, [2; 4])),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn too_short_for_a_cycle() {
        let mut sim = quick(1.0, [2; 4]);
        sim.cfg = ThresholdConfig::symmetric(1e3, 1e-3).unwrap();
        sim.horizon = 300.0;
        assert!(matches!(run(&sim), Err(Error::HorizonTooShort(_))));
    }
}
