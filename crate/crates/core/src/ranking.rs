//! Ranking candidate sources by their score and comparing the ranking with
//! ground-truth transfer accuracies.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cputime;
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::search::{self, SearchConfig, SearchMethod};
use crate::seeds;
use crate::stats::{self, Correlations};

/// Score of one source on the target data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScore {
    pub source_id: String,
    pub metric: f64,
    pub q_star: u64,
    /// Thread CPU time of the metric call. Not serialized: reports must be
    /// reproducible byte for byte, so timings are written separately.
    #[serde(default, skip_serializing)]
    pub cpu_seconds: f64,
}

/// Measured transfer accuracy per source.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroundTruth(BTreeMap<String, f64>);

impl GroundTruth {
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (id, acc) in entries {
            if !(0.0..=1.0).contains(&acc) {
                return Err(Error::config(format!(
                    "accuracy {acc} for `{id}` outside [0, 1]"
                )));
            }
            map.insert(id, acc);
        }
        Ok(GroundTruth(map))
    }

    pub fn get(&self, source_id: &str) -> Option<f64> {
        self.0.get(source_id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    fn lookup(&self, source_id: &str) -> Result<f64> {
        self.get(source_id)
            .ok_or_else(|| Error::MissingTruth(source_id.to_string()))
    }
}

/// Ranks (1 = best) for `values`, aligned with the input. Higher values
/// rank first; equal values are ordered by id.
pub fn rank_by_value(values: &[f64], ids: &[&str]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| stats::desc(values[a], values[b]).then_with(|| ids[a].cmp(ids[b])));
    let mut ranks = vec![0; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

/// Ranks sources by metric, aligned with `scores`.
pub fn rank_sources(scores: &[SourceScore]) -> Vec<usize> {
    let values: Vec<f64> = scores.iter().map(|s| s.metric).collect();
    let ids: Vec<&str> = scores.iter().map(|s| s.source_id.as_str()).collect();
    rank_by_value(&values, &ids)
}

/// Keeps sources whose ground-truth accuracy exceeds `threshold`, returning
/// the survivors and their accuracies in input order.
pub fn threshold_filter(
    scores: &[SourceScore],
    truth: &GroundTruth,
    threshold: f64,
) -> Result<(Vec<SourceScore>, Vec<f64>)> {
    let mut kept = Vec::new();
    let mut accs = Vec::new();
    for s in scores {
        let t = truth.lookup(&s.source_id)?;
        if t > threshold {
            kept.push(s.clone());
            accs.push(t);
        }
    }
    if kept.is_empty() {
        return Err(Error::NoSurvivors(threshold));
    }
    Ok((kept, accs))
}

/// Inverts a rank vector: `out[r - 1]` is the index holding rank `r`.
fn by_rank(ranks: &[usize]) -> Vec<usize> {
    let mut out = vec![0; ranks.len()];
    for (i, &r) in ranks.iter().enumerate() {
        out[r - 1] = i;
    }
    out
}

/// Number of rank positions whose predicted occupant has an accuracy
/// within `slack` of the true occupant's.
pub fn correct_with_slack(
    ranks_by_metric: &[usize],
    ranks_by_truth: &[usize],
    truths: &[f64],
    slack: f64,
) -> usize {
    let predicted = by_rank(ranks_by_metric);
    let actual = by_rank(ranks_by_truth);
    predicted
        .iter()
        .zip(&actual)
        .filter(|(&p, &a)| (truths[p] - truths[a]).abs() <= slack)
        .count()
}

/// Fraction of rank positions counted correct under the slack rule.
pub fn correctness_with_slack(
    ranks_by_metric: &[usize],
    ranks_by_truth: &[usize],
    truths: &[f64],
    slack: f64,
) -> f64 {
    if ranks_by_metric.is_empty() {
        return 0.0;
    }
    correct_with_slack(ranks_by_metric, ranks_by_truth, truths, slack) as f64
        / ranks_by_metric.len() as f64
}

/// Mean and population standard deviation of per-source rank differences.
pub fn rank_deviation(ranks_by_metric: &[usize], ranks_by_truth: &[usize]) -> (f64, f64) {
    let k = ranks_by_metric.len();
    if k == 0 {
        return (0.0, 0.0);
    }
    let devs: Vec<f64> = ranks_by_metric
        .iter()
        .zip(ranks_by_truth)
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .collect();
    let mean = devs.iter().sum::<f64>() / k as f64;
    let var = devs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / k as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingConfig {
    pub threshold: f64,
    /// Absolute accuracy difference tolerated by the slack rule.
    pub slack: f64,
}

impl Default for RankingConfig {
    fn default() -> Self {
        RankingConfig {
            threshold: 0.9,
            slack: 0.03,
        }
    }
}

/// Ranking quality of one scoring run against ground truth.
///
/// Rank statistics cover the sources surviving the threshold; the
/// correlations cover every scored source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub source_ids: Vec<String>,
    pub ranks_by_metric: Vec<usize>,
    pub ranks_by_truth: Vec<usize>,
    pub correct: usize,
    pub fraction_correct: f64,
    pub mean_dev: f64,
    pub std_dev: f64,
    #[serde(flatten)]
    pub correlations: Correlations,
    pub threshold: f64,
    pub slack: f64,
    pub total_sources: usize,
}

pub fn build_report(
    scores: &[SourceScore],
    truth: &GroundTruth,
    cfg: &RankingConfig,
) -> Result<RankReport> {
    let metrics: Vec<f64> = scores.iter().map(|s| s.metric).collect();
    let all_truths = scores
        .iter()
        .map(|s| truth.lookup(&s.source_id))
        .collect::<Result<Vec<_>>>()?;
    let correlations = if scores.len() >= 3 {
        stats::correlations(&metrics, &all_truths)?
    } else {
        Correlations {
            pearson: None,
            spearman: None,
            kendall: None,
        }
    };

    let (kept, truths) = threshold_filter(scores, truth, cfg.threshold)?;
    let ids: Vec<&str> = kept.iter().map(|s| s.source_id.as_str()).collect();
    let ranks_by_metric = rank_sources(&kept);
    let ranks_by_truth = rank_by_value(&truths, &ids);
    let correct = correct_with_slack(&ranks_by_metric, &ranks_by_truth, &truths, cfg.slack);
    let (mean_dev, std_dev) = rank_deviation(&ranks_by_metric, &ranks_by_truth);
    Ok(RankReport {
        source_ids: ids.iter().map(|s| s.to_string()).collect(),
        fraction_correct: correct as f64 / kept.len() as f64,
        correct,
        ranks_by_metric,
        ranks_by_truth,
        mean_dev,
        std_dev,
        correlations,
        threshold: cfg.threshold,
        slack: cfg.slack,
        total_sources: scores.len(),
    })
}

/// Train and validation dumps of one source on the target data.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDumps {
    pub source_id: String,
    pub train: LabeledDataset,
    pub val: LabeledDataset,
}

/// Scores every source in parallel; output order follows `sources`.
pub fn score_sources(
    sources: &[SourceDumps],
    cfg: &SearchConfig,
    method: SearchMethod,
) -> Result<Vec<SourceScore>> {
    sources
        .par_iter()
        .map(|s| {
            let (result, cpu_seconds) =
                cputime::measure(|| search::metric(&s.train, &s.val, cfg, method));
            let r = result?;
            Ok(SourceScore {
                source_id: s.source_id.clone(),
                metric: r.metric,
                q_star: r.q_star,
                cpu_seconds,
            })
        })
        .collect()
}

/// Repeated scoring on random subsets of the target data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub search: SearchConfig,
    pub method: SearchMethod,
    /// Share of each dump kept per iteration, stratified by class.
    pub tl_frac: f64,
    pub iterations: u32,
    pub ranking: RankingConfig,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            search: SearchConfig::default(),
            method: SearchMethod::Ternary,
            tl_frac: 1.0,
            iterations: 1,
            ranking: RankingConfig::default(),
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        self.search.validate()?;
        if !(self.tl_frac > 0.0 && self.tl_frac <= 1.0) {
            return Err(Error::config(format!(
                "tl_frac must be in (0, 1], got {}",
                self.tl_frac
            )));
        }
        if self.iterations < 1 {
            return Err(Error::config("iterations must be >= 1"));
        }
        if self.ranking.slack.is_nan() || self.ranking.slack < 0.0 {
            return Err(Error::config("slack must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationOutcome {
    pub iteration: u32,
    pub seed: u64,
    pub scores: Vec<SourceScore>,
    pub report: Option<RankReport>,
}

/// Averages over iterations. Fractions are averaged per iteration; the
/// pooled fraction divides total correct positions by total positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSummary {
    pub mean_fraction_correct: f64,
    pub pooled_fraction_correct: f64,
    pub mean_dev: f64,
    pub std_dev: f64,
    pub mean_pearson: Option<f64>,
    pub mean_spearman: Option<f64>,
    pub mean_kendall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub iterations: Vec<IterationOutcome>,
    /// Per-source metric averaged over iterations, in input order.
    pub mean_scores: Vec<SourceScore>,
    pub summary: Option<ProtocolSummary>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Scores all sources on `iterations` random subsets and, when ground truth
/// is supplied, evaluates each iteration's ranking.
///
/// Every source receives the same subset seed within an iteration, so dumps
/// with the same row layout are subsampled at the same rows.
pub fn run_protocol(
    sources: &[SourceDumps],
    truth: Option<&GroundTruth>,
    cfg: &ProtocolConfig,
) -> Result<ProtocolReport> {
    cfg.validate()?;
    if sources.is_empty() {
        return Err(Error::config("no sources to rank"));
    }
    let mut iterations = Vec::with_capacity(cfg.iterations as usize);
    for it in 0..cfg.iterations {
        let seed = seeds::derive(cfg.seed, it as u64);
        let subsets = sources
            .iter()
            .map(|s| {
                Ok(SourceDumps {
                    source_id: s.source_id.clone(),
                    train: s
                        .train
                        .stratified_subsample(cfg.tl_frac, seeds::derive(seed, 0))?,
                    val: s
                        .val
                        .stratified_subsample(cfg.tl_frac, seeds::derive(seed, 1))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let search_cfg = SearchConfig {
            seed,
            ..cfg.search.clone()
        };
        let scores = score_sources(&subsets, &search_cfg, cfg.method)?;
        let report = truth
            .map(|t| build_report(&scores, t, &cfg.ranking))
            .transpose()?;
        iterations.push(IterationOutcome {
            iteration: it,
            seed,
            scores,
            report,
        });
    }

    let k = iterations.len() as f64;
    let mean_scores = (0..sources.len())
        .map(|i| {
            let runs = iterations.iter().map(|it| &it.scores[i]);
            let metric = runs.clone().map(|s| s.metric).sum::<f64>() / k;
            let last = &iterations[iterations.len() - 1].scores[i];
            SourceScore {
                source_id: last.source_id.clone(),
                metric,
                q_star: last.q_star,
                cpu_seconds: runs.map(|s| s.cpu_seconds).sum::<f64>() / k,
            }
        })
        .collect();

    let summary = truth.map(|_| {
        let reports: Vec<&RankReport> = iterations
            .iter()
            .filter_map(|i| i.report.as_ref())
            .collect();
        let correct: usize = reports.iter().map(|r| r.correct).sum();
        let positions: usize = reports.iter().map(|r| r.ranks_by_metric.len()).sum();
        ProtocolSummary {
            mean_fraction_correct: reports.iter().map(|r| r.fraction_correct).sum::<f64>() / k,
            pooled_fraction_correct: correct as f64 / positions as f64,
            mean_dev: reports.iter().map(|r| r.mean_dev).sum::<f64>() / k,
            std_dev: reports.iter().map(|r| r.std_dev).sum::<f64>() / k,
            mean_pearson: mean_of(reports.iter().map(|r| r.correlations.pearson)),
            mean_spearman: mean_of(reports.iter().map(|r| r.correlations.spearman)),
            mean_kendall: mean_of(reports.iter().map(|r| r.correlations.kendall)),
        }
    });

    Ok(ProtocolReport {
        iterations,
        mean_scores,
        summary,
    })
}
