use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::SimulationReport;
use crate::error::{Error, Result};

const MIN_PAIRS: usize = 10_000;

/// Pearson chi-square test of independence between consecutive lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub pairs: usize,
    /// Distinct lengths observed.
    pub categories: Vec<u32>,
}

/// Tests `(Lₙ, Lₙ₊₁)` pairs within each sequence; pairs never straddle two
/// sequences.
pub fn independence_test_sequences(sequences: &[Vec<u32>]) -> Result<IndependenceTest> {
    let pairs: usize = sequences.iter().map(|s| s.len().saturating_sub(1)).sum();
    if pairs < MIN_PAIRS {
        return Err(Error::SampleSize {
            needed: MIN_PAIRS,
            got: pairs,
        });
    }
    let mut index = BTreeMap::new();
    for &l in sequences.iter().flatten() {
        index.entry(l).or_insert(0usize);
    }
    for (i, v) in index.values_mut().enumerate() {
        *v = i;
    }
    let k = index.len();
    if k < 2 {
        return Err(Error::Domain(
            "independence test needs at least two distinct lengths".into(),
        ));
    }
    let mut table = vec![vec![0f64; k]; k];
    for s in sequences {
        for w in s.windows(2) {
            table[index[&w[0]]][index[&w[1]]] += 1.0;
        }
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..k).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let n = pairs as f64;
    let mut statistic = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let expected = rows[i] * cols[j] / n;
            if expected > 0.0 {
                statistic += (obs - expected).powi(2) / expected;
            }
        }
    }
    let live_rows = rows.iter().filter(|&&r| r > 0.0).count();
    let live_cols = cols.iter().filter(|&&c| c > 0.0).count();
    let dof = (live_rows.saturating_sub(1)) * (live_cols.saturating_sub(1));
    if dof == 0 {
        return Err(Error::Domain(
            "contingency table has no degrees of freedom".into(),
        ));
    }
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(IndependenceTest {
        statistic,
        dof,
        p_value: dist.sf(statistic),
        pairs,
        categories: index.into_keys().collect(),
    })
}

/// Chi-square test on the length sequences of a report.
pub fn length_independence_test(report: &SimulationReport) -> Result<IndependenceTest> {
    independence_test_sequences(&report.length_sequence)
}
