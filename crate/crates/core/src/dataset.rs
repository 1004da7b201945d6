//! Labelled softmax datasets and class balancing.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantize::SoftmaxVector;

/// One source output together with its 1-based target label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxSample {
    pub probs: SoftmaxVector,
    pub label: usize,
}

/// Source softmax outputs for a set of target samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    m: usize,
    n: usize,
    samples: Vec<SoftmaxSample>,
}

impl LabeledDataset {
    /// `n` is the number of target classes; labels are 1-based.
    pub fn new(n: usize, samples: Vec<SoftmaxSample>) -> Result<Self> {
        if n < 2 {
            return Err(Error::config(format!(
                "need at least 2 target classes, got {n}"
            )));
        }
        let first = samples.first().ok_or(Error::EmptyDataset)?;
        let m = first.probs.len();
        for s in &samples {
            if s.probs.len() != m {
                return Err(Error::WrongLength {
                    expected: m,
                    got: s.probs.len(),
                });
            }
            if s.label == 0 || s.label > n {
                return Err(Error::LabelOutOfRange { label: s.label, n });
            }
        }
        Ok(LabeledDataset { m, n, samples })
    }

    /// Convenience constructor from raw rows; each row is validated.
    pub fn from_rows(n: usize, rows: Vec<(Vec<f64>, usize)>) -> Result<Self> {
        let samples = rows
            .into_iter()
            .map(|(p, label)| {
                Ok(SoftmaxSample {
                    probs: SoftmaxVector::new(p)?,
                    label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(n, samples)
    }

    /// Source class count.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Target class count.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[SoftmaxSample] {
        &self.samples
    }

    /// Per-class sample counts, index `c - 1` for class `c`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n];
        for s in &self.samples {
            counts[s.label - 1] += 1;
        }
        counts
    }

    pub fn is_balanced(&self) -> bool {
        let counts = self.class_counts();
        counts.iter().all(|&c| c == counts[0])
    }

    /// Checks that `other` describes the same source and target spaces.
    pub fn check_compatible(&self, other: &LabeledDataset) -> Result<()> {
        if self.m != other.m || self.n != other.n {
            return Err(Error::ShapeMismatch(format!(
                "(m={}, n={}) vs (m={}, n={})",
                self.m, self.n, other.m, other.n
            )));
        }
        Ok(())
    }

    fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.n];
        for (i, s) in self.samples.iter().enumerate() {
            by_class[s.label - 1].push(i);
        }
        by_class
    }

    fn retain_indices(&self, mut keep: Vec<usize>) -> LabeledDataset {
        keep.sort_unstable();
        LabeledDataset {
            m: self.m,
            n: self.n,
            samples: keep.into_iter().map(|i| self.samples[i].clone()).collect(),
        }
    }

    /// Downsamples every class to the smallest class count.
    ///
    /// Retained samples keep their original relative order, so an already
    /// balanced dataset comes back unchanged.
    pub fn balance(&self, seed: u64) -> Result<LabeledDataset> {
        let by_class = self.indices_by_class();
        if let Some(c) = by_class.iter().position(Vec::is_empty) {
            return Err(Error::EmptyClass(c + 1));
        }
        let target = by_class.iter().map(Vec::len).min().unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = Vec::with_capacity(target * self.n);
        for members in &by_class {
            if members.len() == target {
                keep.extend_from_slice(members);
            } else {
                keep.extend(
                    index::sample(&mut rng, members.len(), target)
                        .into_iter()
                        .map(|i| members[i]),
                );
            }
        }
        Ok(self.retain_indices(keep))
    }

    /// Keeps a `frac` share of each class (at least one sample per
    /// non-empty class), chosen uniformly without replacement.
    ///
    /// Datasets with the same label sequence receive the same row selection
    /// for the same seed, which lets several sources share one subset of the
    /// target data.
    pub fn stratified_subsample(&self, frac: f64, seed: u64) -> Result<LabeledDataset> {
        if !(frac > 0.0 && frac <= 1.0) {
            return Err(Error::config(format!(
                "fraction must be in (0, 1], got {frac}"
            )));
        }
        if frac == 1.0 {
            return Ok(self.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = Vec::new();
        for members in self.indices_by_class() {
            if members.is_empty() {
                continue;
            }
            let k = ((members.len() as f64 * frac).round() as usize).clamp(1, members.len());
            keep.extend(
                index::sample(&mut rng, members.len(), k)
                    .into_iter()
                    .map(|i| members[i]),
            );
        }
        Ok(self.retain_indices(keep))
    }
}
