//! Empirical class-conditional cell distributions and the policy that
//! maximizes training accuracy on them.
//!
//! Counts are kept as integers; probabilities `count / class_total` only
//! appear when an accuracy is read out. Ties are detected on the integers
//! and scored by their expected value (a uniform draw among the tied
//! classes). Cells that never occurred in training fall back to a uniform
//! draw among all `n` classes.

use std::collections::HashMap;

use num_rational::Ratio;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::quantize::{quantize_slice, BinKey, QuantizationLevel};

/// Sparse per-cell class counts at one quantization level.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalCounts {
    level: u64,
    n: usize,
    counts: HashMap<BinKey, Vec<u64>>,
    per_class_totals: Vec<u64>,
}

impl ConditionalCounts {
    fn empty(level: u64, n: usize) -> Self {
        ConditionalCounts {
            level,
            n,
            counts: HashMap::new(),
            per_class_totals: vec![0; n],
        }
    }

    /// Builds counts from explicit per-cell vectors; cells with all-zero
    /// counts are dropped.
    pub fn from_cells(
        level: QuantizationLevel,
        n: usize,
        cells: impl IntoIterator<Item = (BinKey, Vec<u64>)>,
    ) -> Result<Self> {
        let mut out = ConditionalCounts::empty(level.get(), n);
        for (key, row) in cells {
            if key.level() != level.get() {
                return Err(Error::LevelMismatch {
                    expected: level.get(),
                    got: key.level(),
                });
            }
            if row.len() != n {
                return Err(Error::WrongLength {
                    expected: n,
                    got: row.len(),
                });
            }
            if row.iter().all(|&c| c == 0) {
                continue;
            }
            for (t, c) in out.per_class_totals.iter_mut().zip(&row) {
                *t += c;
            }
            let slot = out.counts.entry(key).or_insert_with(|| vec![0; n]);
            for (s, c) in slot.iter_mut().zip(&row) {
                *s += c;
            }
        }
        if out.counts.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(out)
    }

    fn add(&mut self, key: BinKey, label: usize) {
        let n = self.n;
        self.counts.entry(key).or_insert_with(|| vec![0; n])[label - 1] += 1;
        self.per_class_totals[label - 1] += 1;
    }

    /// Associative merge of two count tables at the same level.
    pub fn merge(mut self, other: ConditionalCounts) -> Result<Self> {
        if self.level != other.level {
            return Err(Error::LevelMismatch {
                expected: self.level,
                got: other.level,
            });
        }
        for (key, row) in other.counts {
            let slot = self.counts.entry(key).or_insert_with(|| vec![0; row.len()]);
            for (s, c) in slot.iter_mut().zip(&row) {
                *s += c;
            }
        }
        for (t, c) in self
            .per_class_totals
            .iter_mut()
            .zip(&other.per_class_totals)
        {
            *t += c;
        }
        Ok(self)
    }

    pub fn level(&self) -> u64 {
        self.level
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn per_class_totals(&self) -> &[u64] {
        &self.per_class_totals
    }

    /// Number of occupied cells.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn get(&self, key: &BinKey) -> Option<&[u64]> {
        self.counts.get(key).map(Vec::as_slice)
    }

    /// Occupied cells in key order.
    pub fn cells(&self) -> Vec<(&BinKey, &[u64])> {
        let mut cells: Vec<_> = self.counts.iter().map(|(k, v)| (k, v.as_slice())).collect();
        cells.sort_by(|a, b| a.0.cmp(b.0));
        cells
    }

    /// Empirical `P(cell | class)`; zero when the class has no samples.
    pub fn conditional(&self, key: &BinKey, class: usize) -> f64 {
        let total = self.per_class_totals[class - 1];
        match self.counts.get(key) {
            Some(row) if total > 0 => row[class - 1] as f64 / total as f64,
            _ => 0.0,
        }
    }
}

/// Tallies every sample of `data` into its cell at level `q`.
pub fn build_counts(data: &LabeledDataset, q: QuantizationLevel) -> Result<ConditionalCounts> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts = ConditionalCounts::empty(q.get(), data.n());
    for s in data.samples() {
        counts.add(quantize_slice(s.probs.as_slice(), q.get()), s.label);
    }
    Ok(counts)
}

/// Parallel variant of [`build_counts`]; yields identical counts.
pub fn build_counts_parallel(
    data: &LabeledDataset,
    q: QuantizationLevel,
) -> Result<ConditionalCounts> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (level, n) = (q.get(), data.n());
    data.samples()
        .par_chunks(4096)
        .map(|chunk| {
            let mut c = ConditionalCounts::empty(level, n);
            for s in chunk {
                c.add(quantize_slice(s.probs.as_slice(), level), s.label);
            }
            Ok(c)
        })
        .try_reduce(|| ConditionalCounts::empty(level, n), |a, b| a.merge(b))
}

/// Prediction for one cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Single(usize),
    /// Uniform draw among two or more classes, sorted ascending.
    Tie(Vec<usize>),
}

impl Decision {
    /// Probability that this decision outputs `label`.
    pub fn hit_probability(&self, label: usize) -> f64 {
        match self {
            Decision::Single(c) => (*c == label) as u8 as f64,
            Decision::Tie(set) => {
                if set.contains(&label) {
                    1.0 / set.len() as f64
                } else {
                    0.0
                }
            }
        }
    }

    /// Draws a concrete label.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            Decision::Single(c) => *c,
            Decision::Tie(set) => set[rng.random_range(0..set.len())],
        }
    }
}

/// A map from cells to predicted labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    level: u64,
    n: usize,
    decisions: HashMap<BinKey, Decision>,
    default_decision: Decision,
}

impl Policy {
    /// Builds an arbitrary policy; unlisted cells use a uniform draw over
    /// all `n` classes.
    pub fn from_decisions(
        level: QuantizationLevel,
        n: usize,
        decisions: impl IntoIterator<Item = (BinKey, Decision)>,
    ) -> Result<Self> {
        let mut map = HashMap::new();
        for (key, d) in decisions {
            if key.level() != level.get() {
                return Err(Error::LevelMismatch {
                    expected: level.get(),
                    got: key.level(),
                });
            }
            match &d {
                Decision::Single(c) if *c == 0 || *c > n => {
                    return Err(Error::LabelOutOfRange { label: *c, n })
                }
                Decision::Tie(set) if set.len() < 2 || set.iter().any(|&c| c == 0 || c > n) => {
                    return Err(Error::config(format!("invalid tie set {set:?}")))
                }
                _ => {}
            }
            map.insert(key, d);
        }
        Ok(Policy {
            level: level.get(),
            n,
            decisions: map,
            default_decision: Decision::Tie((1..=n).collect()),
        })
    }

    pub fn level(&self) -> u64 {
        self.level
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn decide(&self, key: &BinKey) -> &Decision {
        self.decisions.get(key).unwrap_or(&self.default_decision)
    }

    pub fn default_decision(&self) -> &Decision {
        &self.default_decision
    }

    /// Explicit decisions in key order.
    pub fn decisions(&self) -> Vec<(&BinKey, &Decision)> {
        let mut d: Vec<_> = self.decisions.iter().collect();
        d.sort_by(|a, b| a.0.cmp(b.0));
        d
    }
}

/// Per-cell argmax of the empirical class conditionals.
pub fn derive_policy(counts: &ConditionalCounts) -> Policy {
    let totals = &counts.per_class_totals;
    let decisions = counts
        .counts
        .iter()
        .map(|(key, row)| (key.clone(), argmax_decision(row, totals)))
        .collect();
    Policy {
        level: counts.level,
        n: counts.n,
        decisions,
        default_decision: Decision::Tie((1..=counts.n).collect()),
    }
}

/// Compares `row[a] / totals[a]` with `row[b] / totals[b]` exactly.
fn cmp_conditional(row: &[u64], totals: &[u64], a: usize, b: usize) -> std::cmp::Ordering {
    let lhs = row[a] as u128 * totals[b].max(1) as u128;
    let rhs = row[b] as u128 * totals[a].max(1) as u128;
    let lhs = if totals[a] == 0 { 0 } else { lhs };
    let rhs = if totals[b] == 0 { 0 } else { rhs };
    lhs.cmp(&rhs)
}

fn argmax_decision(row: &[u64], totals: &[u64]) -> Decision {
    use std::cmp::Ordering;
    let mut best = vec![0usize];
    for c in 1..row.len() {
        match cmp_conditional(row, totals, c, best[0]) {
            Ordering::Greater => {
                best.clear();
                best.push(c);
            }
            Ordering::Equal => best.push(c),
            Ordering::Less => {}
        }
    }
    if best.len() == 1 {
        Decision::Single(best[0] + 1)
    } else {
        Decision::Tie(best.into_iter().map(|c| c + 1).collect())
    }
}

/// Training accuracy `(1/n) * sum_cells P(cell | decision)` as an exact
/// rational; tied cells contribute the mean over their tie set.
pub fn train_accuracy_exact(counts: &ConditionalCounts, policy: &Policy) -> Result<Ratio<u128>> {
    if counts.level != policy.level {
        return Err(Error::LevelMismatch {
            expected: counts.level,
            got: policy.level,
        });
    }
    let n = counts.n;
    // hits[c][k]: summed counts of class c in cells that pick c out of a
    // tie set of size k (k = 1 for a unique decision).
    let mut hits = vec![vec![0u128; n + 1]; n];
    for (key, row) in &counts.counts {
        match policy.decide(key) {
            Decision::Single(c) => hits[c - 1][1] += row[c - 1] as u128,
            Decision::Tie(set) => {
                for &c in set {
                    hits[c - 1][set.len()] += row[c - 1] as u128;
                }
            }
        }
    }
    let mut acc = Ratio::from_integer(0u128);
    for (c, by_k) in hits.iter().enumerate() {
        let total = counts.per_class_totals[c] as u128;
        if total == 0 {
            continue;
        }
        for (k, &h) in by_k.iter().enumerate().skip(1) {
            if h > 0 {
                acc += Ratio::new(h, total * k as u128);
            }
        }
    }
    Ok(acc / Ratio::from_integer(n as u128))
}

/// Training accuracy of `policy` on the counts it is evaluated against.
pub fn train_accuracy(counts: &ConditionalCounts, policy: &Policy) -> Result<f64> {
    let r = train_accuracy_exact(counts, policy)?;
    Ok(*r.numer() as f64 / *r.denom() as f64)
}

fn check_val(val: &LabeledDataset, policy: &Policy, q: QuantizationLevel) -> Result<()> {
    if val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if policy.level != q.get() {
        return Err(Error::LevelMismatch {
            expected: q.get(),
            got: policy.level,
        });
    }
    if val.n() != policy.n {
        return Err(Error::ShapeMismatch(format!(
            "validation has n={}, policy has n={}",
            val.n(),
            policy.n
        )));
    }
    Ok(())
}

/// Expected validation accuracy: a sample scores 1 for a matching unique
/// decision and `1/k` when its label is in a tie set of size `k`.
pub fn val_accuracy(val: &LabeledDataset, policy: &Policy, q: QuantizationLevel) -> Result<f64> {
    check_val(val, policy, q)?;
    let n = policy.n;
    let mut hits = vec![0u64; n + 1];
    for s in val.samples() {
        let key = quantize_slice(s.probs.as_slice(), q.get());
        match policy.decide(&key) {
            Decision::Single(c) if *c == s.label => hits[1] += 1,
            Decision::Tie(set) if set.contains(&s.label) => hits[set.len()] += 1,
            _ => {}
        }
    }
    let correct: f64 = hits
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &h)| h as f64 / k as f64)
        .sum();
    Ok(correct / val.len() as f64)
}

/// Validation accuracy with ties resolved by random draws.
pub fn val_accuracy_sampled<R: Rng + ?Sized>(
    val: &LabeledDataset,
    policy: &Policy,
    q: QuantizationLevel,
    rng: &mut R,
) -> Result<f64> {
    check_val(val, policy, q)?;
    let correct = val
        .samples()
        .iter()
        .filter(|s| {
            let key = quantize_slice(s.probs.as_slice(), q.get());
            policy.decide(&key).sample(rng) == s.label
        })
        .count();
    Ok(correct as f64 / val.len() as f64)
}

/// Training and validation accuracy of the optimal policy at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPair {
    pub train: f64,
    pub val: f64,
}

/// Builds the optimal policy on `train` and scores it on both splits.
pub fn evaluate_level(
    train: &LabeledDataset,
    val: &LabeledDataset,
    q: QuantizationLevel,
) -> Result<AccuracyPair> {
    let counts = build_counts(train, q)?;
    let policy = derive_policy(&counts);
    Ok(AccuracyPair {
        train: train_accuracy(&counts, &policy)?,
        val: val_accuracy(val, &policy, q)?,
    })
}
