//! Single-replication state machines. Both loops visit every grid index in
//! order: advance `W`, deliver a pending sample, test the trigger if the
//! channel is free, then add `ε(W - Ŵ)²` to the running reward.

use rand::Rng;
use rand_distr::StandardNormal;

use super::CycleRecord;
use crate::error::{Error, Result};

/// Per-replication outcome over the measurement window.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RepOutcome {
    pub mse: f64,
    pub sr: f64,
    pub cycles: u64,
    pub event_counts: [u64; 4],
    pub lengths: Vec<u32>,
    pub records: Vec<CycleRecord>,
    /// Sum of per-cycle rewards over total duration.
    pub renewal_mse: f64,
    /// `|Ŵ - ΣZ|` at the end of the run.
    pub decoder_residual: f64,
}

/// Index-level bookkeeping shared by both schemes.
///
/// The window opens at the first delivery at or after the burn-in index
/// and closes at the last delivery, so it consists of whole cycles
/// `[D_{n-1}, D_n)`.
struct Ledger {
    eps: f64,
    burn_in: u64,
    record: bool,
    in_window: bool,
    last_delivery: u64,
    cycle_reward: f64,
    running: f64,
    running_at_close: f64,
    cycle_total: f64,
    window_ticks: u64,
    cycles: u64,
    event_counts: [u64; 4],
    lengths: Vec<u32>,
    records: Vec<CycleRecord>,
    z_sum: f64,
}

impl Ledger {
    fn new(eps: f64, burn_in: u64, record: bool) -> Self {
        Self {
            eps,
            burn_in,
            record,
            in_window: false,
            last_delivery: 0,
            cycle_reward: 0.0,
            running: 0.0,
            running_at_close: 0.0,
            cycle_total: 0.0,
            window_ticks: 0,
            cycles: 0,
            event_counts: [0; 4],
            lengths: Vec::new(),
            records: Vec::new(),
            z_sum: 0.0,
        }
    }

    fn deliver(&mut self, j: u64, rec: CycleRecord) {
        self.z_sum += rec.z_n;
        if self.in_window {
            self.cycles += 1;
            self.cycle_total += self.cycle_reward;
            self.running_at_close = self.running;
            self.window_ticks += j - self.last_delivery;
            self.event_counts[usize::from(rec.event - 1)] += 1;
            self.lengths.push(rec.length);
            if self.record {
                self.records.push(rec);
            }
        } else if j >= self.burn_in {
            self.in_window = true;
        }
        self.cycle_reward = 0.0;
        self.last_delivery = j;
    }

    fn accumulate(&mut self, err: f64) {
        if self.in_window {
            let r = self.eps * err * err;
            self.running += r;
            self.cycle_reward += r;
        }
    }

    fn finish(self, w_hat: f64) -> Result<RepOutcome> {
        if self.cycles == 0 {
            return Err(Error::HorizonTooShort(
                "no complete cycle after burn-in".into(),
            ));
        }
        let duration = self.window_ticks as f64 * self.eps;
        Ok(RepOutcome {
            mse: self.running_at_close / duration,
            sr: self.cycles as f64 / duration,
            cycles: self.cycles,
            event_counts: self.event_counts,
            lengths: self.lengths,
            records: self.records,
            renewal_mse: self.cycle_total / duration,
            decoder_residual: (w_hat - self.z_sum).abs(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GridParams {
    pub eps: f64,
    pub steps: u64,
    pub burn_in: u64,
    /// Standard deviation of one increment, `σ√ε`.
    pub sd: f64,
    pub record: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MonotoneParams {
    /// Thresholds in process units.
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    pub lengths: [u32; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Band,
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    deliver: u64,
    sampled: u64,
    event: u8,
    z: f64,
    length: u32,
}

impl Pending {
    fn record(&self, eps: f64) -> CycleRecord {
        let s_n = self.sampled as f64 * eps;
        let ticks = self.deliver - self.sampled;
        CycleRecord {
            s_n,
            d_n: s_n + ticks as f64 * eps,
            event: self.event,
            z_n: self.z,
            length: self.length,
        }
    }
}

fn ticks(length: f64, eps: f64) -> u64 {
    ((length / eps).round() as u64).max(1)
}

pub(crate) fn run_monotone<R: Rng>(
    grid: &GridParams,
    p: &MonotoneParams,
    rng: &mut R,
) -> Result<RepOutcome> {
    let eps = grid.eps;
    let durations = p.lengths.map(|l| ticks(f64::from(l), eps));
    let mut ledger = Ledger::new(eps, grid.burn_in, grid.record);

    let classify = |x: f64, up: f64, down: f64| {
        if x >= up {
            Phase::Upper
        } else if x <= -down {
            Phase::Lower
        } else {
            Phase::Band
        }
    };

    let mut w = 0.0_f64;
    let mut w_hat = 0.0_f64;
    let l0 = f64::from(p.lengths[1]).sqrt();
    let (mut up, mut down) = (p.a * l0, p.b * l0);
    let mut phase = classify(0.0, up, down);
    let mut phase_start = 0u64;
    let mut pending: Option<Pending> = None;

    for j in 1..=grid.steps {
        let z: f64 = rng.sample(StandardNormal);
        w += grid.sd * z;

        if let Some(pk) = pending.filter(|pk| pk.deliver == j) {
            w_hat += pk.z;
            ledger.deliver(j, pk.record(eps));
            let root = f64::from(pk.length).sqrt();
            up = p.a * root;
            down = p.b * root;
            phase = classify(w - w_hat, up, down);
            phase_start = j;
            pending = None;
        }

        if pending.is_none() {
            let x = w - w_hat;
            let elapsed = (j - phase_start) as f64 * eps;
            let fired = match phase {
                Phase::Band if x >= up => Some((2u8, up)),
                Phase::Band if x <= -down => Some((3, -down)),
                Phase::Band => None,
                Phase::Upper => {
                    let level = up + p.mu * elapsed;
                    (x <= level).then_some((1, level))
                }
                Phase::Lower => {
                    let level = -(down + p.mu * elapsed);
                    (x >= level).then_some((4, level))
                }
            };
            if let Some((event, value)) = fired {
                let idx = usize::from(event - 1);
                pending = Some(Pending {
                    deliver: j + durations[idx],
                    sampled: j,
                    event,
                    z: value,
                    length: p.lengths[idx],
                });
            }
        }

        ledger.accumulate(w - w_hat);
    }
    ledger.finish(w_hat)
}

/// Real-valued samples with unit delay, taken when `|W - Ŵ| >= a` and the
/// channel is free. Events are labelled 1 (positive error) or 4.
pub(crate) fn run_ideal<R: Rng>(grid: &GridParams, a: f64, rng: &mut R) -> Result<RepOutcome> {
    let eps = grid.eps;
    let delay = ticks(1.0, eps);
    let mut ledger = Ledger::new(eps, grid.burn_in, grid.record);
    let mut w = 0.0_f64;
    let mut w_hat = 0.0_f64;
    let mut pending: Option<Pending> = None;

    for j in 1..=grid.steps {
        let z: f64 = rng.sample(StandardNormal);
        w += grid.sd * z;

        if let Some(pk) = pending.filter(|pk| pk.deliver == j) {
            w_hat += pk.z;
            ledger.deliver(j, pk.record(eps));
            pending = None;
        }

        if pending.is_none() {
            let x = w - w_hat;
            if x.abs() >= a {
                pending = Some(Pending {
                    deliver: j + delay,
                    sampled: j,
                    event: if x >= 0.0 { 1 } else { 4 },
                    z: x,
                    length: 1,
                });
            }
        }

        ledger.accumulate(w - w_hat);
    }
    ledger.finish(w_hat)
}
