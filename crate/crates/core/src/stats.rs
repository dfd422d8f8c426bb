//! Goodness-of-fit helpers for Monte Carlo checks.

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};

/// Outcome of a Pearson χ² test.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub critical: f64,
    pub p_value: f64,
}

impl ChiSquareTest {
    pub fn passed(&self) -> bool {
        self.statistic <= self.critical
    }
}

/// Pearson χ² of `observed` counts against `probs` at confidence `level`.
/// Cells with expected count below `min_expected` are pooled into one cell
/// (and that cell into its smallest neighbour if it is still too small).
pub fn chi_square_gof(observed: &[u64], probs: &[f64], level: f64, min_expected: f64) -> Result<ChiSquareTest> {
    if observed.len() != probs.len() || observed.is_empty() {
        return invalid("observed counts and probabilities must align");
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return invalid("no observations");
    }
    let psum: f64 = probs.iter().sum();
    if probs.iter().any(|p| *p < 0.0) || (psum - 1.0).abs() > 1e-8 {
        return invalid(format!("probabilities must be nonnegative and sum to 1 (sum {psum})"));
    }
    let nf = total as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * nf;
        if e < min_expected {
            pooled.0 += o as f64;
            pooled.1 += e;
        } else {
            cells.push((o as f64, e));
        }
    }
    if pooled.1 > 0.0 || pooled.0 > 0.0 {
        if pooled.1 >= min_expected || cells.is_empty() {
            cells.push(pooled);
        } else {
            let j = (0..cells.len())
                .min_by(|&a, &b| cells[a].1.total_cmp(&cells[b].1))
                .expect("nonempty");
            cells[j].0 += pooled.0;
            cells[j].1 += pooled.1;
        }
    }
    if cells.len() < 2 {
        return invalid("fewer than two usable cells");
    }
    let statistic: f64 = cells
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e).powi(2) / e } else if o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).expect("dof >= 1");
    Ok(ChiSquareTest {
        statistic,
        dof,
        critical: dist.inverse_cdf(level),
        p_value: 1.0 - dist.cdf(statistic),
    })
}

/// Counts of distinct keys.
#[derive(Debug, Clone)]
pub struct FrequencyTable<K: Ord> {
    counts: BTreeMap<K, u64>,
    total: u64,
}

impl<K: Ord> Default for FrequencyTable<K> {
    fn default() -> Self {
        FrequencyTable {
            counts: BTreeMap::new(),
            total: 0,
        }
    }
}

impl<K: Ord> FrequencyTable<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, key: K) {
        *self.counts.entry(key).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn merge(mut self, other: FrequencyTable<K>) -> Self {
        for (k, c) in other.counts {
            *self.counts.entry(k).or_insert(0) += c;
        }
        self.total += other.total;
        self
    }

    pub fn count(&self, key: &K) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, u64)> {
        self.counts.iter().map(|(k, &c)| (k, c))
    }

    /// χ² of the table against `expected` (key, probability) pairs; keys
    /// observed but missing from `expected` make the test fail.
    pub fn chi_square<'a>(&self, expected: impl IntoIterator<Item = (&'a K, f64)>, level: f64) -> Result<ChiSquareTest>
    where
        K: 'a,
    {
        let mut obs = Vec::new();
        let mut probs = Vec::new();
        let mut seen = 0u64;
        for (k, p) in expected {
            let c = self.count(k);
            seen += c;
            obs.push(c);
            probs.push(p);
        }
        let mut t = chi_square_gof(&obs, &probs, level, 5.0)?;
        if seen != self.total {
            t.statistic = f64::INFINITY;
            t.p_value = 0.0;
        }
        Ok(t)
    }
}
