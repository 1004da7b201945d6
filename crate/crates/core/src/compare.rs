//! Ternary search against exhaustive search: how far the searched metric
//! lands from the true maximum over the level range.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::SourceDumps;
use crate::search::{brute_on, prepare, ternary_on, SearchConfig};
use crate::seeds;
use crate::synth::{generate_split, Family, SynthSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub source_id: String,
    pub metric_ternary: f64,
    pub metric_brute: f64,
    pub abs_diff: f64,
    pub q_ternary: u64,
    pub q_brute: u64,
    pub evaluations_ternary: usize,
    pub evaluations_brute: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub pairs: usize,
    pub mean_abs_diff: f64,
    pub std_abs_diff: f64,
    pub max_abs_diff: f64,
}

impl ComparisonSummary {
    pub fn from_rows(rows: &[ComparisonRow]) -> Self {
        let k = rows.len() as f64;
        let mean = rows.iter().map(|r| r.abs_diff).sum::<f64>() / k;
        let var = rows
            .iter()
            .map(|r| (r.abs_diff - mean).powi(2))
            .sum::<f64>()
            / k;
        ComparisonSummary {
            pairs: rows.len(),
            mean_abs_diff: mean,
            std_abs_diff: var.sqrt(),
            max_abs_diff: rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max),
        }
    }
}

/// Runs both searches on each source with the same balanced splits.
pub fn compare_sources(sources: &[SourceDumps], cfg: &SearchConfig) -> Result<Vec<ComparisonRow>> {
    if sources.is_empty() {
        return Err(Error::config("nothing to compare"));
    }
    sources
        .par_iter()
        .map(|s| {
            let splits = prepare(&s.train, &s.val, cfg)?;
            let t = ternary_on(&splits, cfg)?;
            let b = brute_on(&splits)?;
            Ok(ComparisonRow {
                source_id: s.source_id.clone(),
                metric_ternary: t.metric,
                metric_brute: b.metric,
                abs_diff: (t.metric - b.metric).abs(),
                q_ternary: t.q_star,
                q_brute: b.q_star,
                evaluations_ternary: t.evaluations(),
                evaluations_brute: b.evaluations(),
            })
        })
        .collect()
}

/// Seeded random source/target pairs for search comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    pub pairs: usize,
    pub m: usize,
    pub n: usize,
    /// Total samples per pair, train and validation together.
    pub samples: usize,
    pub val_fraction: f64,
    pub family: Family,
    pub seed: u64,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            pairs: 100,
            m: 2,
            n: 2,
            samples: 100,
            val_fraction: 0.2,
            family: Family::Bump,
            seed: 0,
        }
    }
}

/// Pair `i` draws its overlap uniformly from `[0, 1]`.
pub fn synthetic_pairs(cfg: &PairConfig) -> Result<Vec<SourceDumps>> {
    if cfg.pairs == 0 {
        return Err(Error::config("pairs must be >= 1"));
    }
    let width = cfg.pairs.saturating_sub(1).to_string().len().max(3);
    (0..cfg.pairs)
        .into_par_iter()
        .map(|i| {
            let seed = seeds::derive(cfg.seed, i as u64);
            let overlap = ChaCha8Rng::seed_from_u64(seed).random::<f64>();
            let spec = SynthSpec {
                m: cfg.m,
                n: cfg.n,
                per_class: cfg.samples / cfg.n,
                overlap,
                family: cfg.family,
                seed: seeds::derive(seed, 1),
            };
            let (train, val) = generate_split(&spec, cfg.val_fraction)?;
            Ok(SourceDumps {
                source_id: format!("pair-{i:0width$}"),
                train,
                val,
            })
        })
        .collect()
}
