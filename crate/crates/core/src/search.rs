//! Locating the quantization level with the best validation accuracy.
//!
//! The validation curve `q -> A_val(q)` rises while finer cells separate the
//! classes and falls once cells become too sparse to estimate. The ternary
//! search treats the curve as unimodal on `[q_min, q_max]`; the brute-force
//! search evaluates every level and serves as its reference.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::policy::evaluate_level;
use crate::quantize::QuantizationLevel;
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMethod {
    Ternary,
    Brute,
}

impl std::str::FromStr for SearchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ternary" => Ok(SearchMethod::Ternary),
            "brute" => Ok(SearchMethod::Brute),
            other => Err(Error::config(format!("unknown search method `{other}`"))),
        }
    }
}

impl std::fmt::Display for SearchMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SearchMethod::Ternary => "ternary",
            SearchMethod::Brute => "brute",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Stop once `R - L <= tolerance`.
    pub tolerance: u64,
    pub max_steps: u32,
    pub q_min: u64,
    /// Upper bound of the search; `None` means validation samples per class.
    pub q_max: Option<u64>,
    /// Seed for class balancing.
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            tolerance: 5,
            max_steps: 20,
            q_min: 2,
            q_max: None,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tolerance < 1 {
            return Err(Error::config("tolerance must be >= 1"));
        }
        if self.max_steps < 1 {
            return Err(Error::config("max_steps must be >= 1"));
        }
        if self.q_min < 2 {
            return Err(Error::config("q_min must be >= 2"));
        }
        Ok(())
    }
}

/// One evaluated quantization level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub q: u64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    /// The transferability score.
    pub metric: f64,
    /// Probed level with the highest validation accuracy (smallest on ties).
    pub q_star: u64,
    pub final_left: u64,
    pub final_right: u64,
    pub q_min: u64,
    pub q_max: u64,
    pub method: SearchMethod,
    /// Loop iterations of the ternary search; zero for brute force.
    pub steps: u32,
    /// Distinct levels evaluated, in first-evaluation order.
    pub trace: Vec<ProbeRecord>,
}

impl MetricResult {
    pub fn evaluations(&self) -> usize {
        self.trace.len()
    }
}

/// Balanced splits and the resolved search range.
#[derive(Debug, Clone)]
pub struct PreparedSplits {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub q_min: u64,
    pub q_max: u64,
}

/// Balances both splits and resolves `[q_min, q_max]`.
pub fn prepare(
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &SearchConfig,
) -> Result<PreparedSplits> {
    cfg.validate()?;
    train.check_compatible(val)?;
    let train = train.balance(seeds::derive(cfg.seed, 1))?;
    let val = val.balance(seeds::derive(cfg.seed, 2))?;
    let q_max = cfg.q_max.unwrap_or((val.len() / val.n()) as u64);
    if q_max < cfg.q_min {
        return Err(Error::InsufficientValidationData {
            q_min: cfg.q_min,
            q_max,
        });
    }
    Ok(PreparedSplits {
        train,
        val,
        q_min: cfg.q_min,
        q_max,
    })
}

/// Where a ternary search over a level range ended.
#[derive(Debug, Clone, PartialEq)]
pub struct TernaryOutcome {
    /// Mean of the values at the final left and right levels.
    pub value: f64,
    /// Best evaluated level; the smallest one on ties.
    pub best_q: u64,
    pub final_left: u64,
    pub final_right: u64,
    pub steps: u32,
    /// Distinct levels in evaluation order.
    pub evaluated: Vec<(u64, f64)>,
}

/// Ternary search for the maximum of `f` on `[q_min, q_max]`.
///
/// Probes the third-points `L + (R-L)/3` and `R - (R-L)/3` (integer
/// division), keeps the side of the larger probe, and stops once
/// `R - L <= tolerance` or after `max_steps` steps. A bracket of width 2
/// or less cannot shrink further, so the loop also stops there. Each level
/// is evaluated at most once.
pub fn ternary_search<F>(
    q_min: u64,
    q_max: u64,
    cfg: &SearchConfig,
    mut f: F,
) -> Result<TernaryOutcome>
where
    F: FnMut(u64) -> Result<f64>,
{
    if q_max < q_min {
        return Err(Error::InsufficientValidationData { q_min, q_max });
    }
    let mut cache: BTreeMap<u64, f64> = BTreeMap::new();
    let mut evaluated = Vec::new();
    let mut at = |q: u64| -> Result<f64> {
        if let Some(&v) = cache.get(&q) {
            return Ok(v);
        }
        let v = f(q)?;
        cache.insert(q, v);
        evaluated.push((q, v));
        Ok(v)
    };
    let (mut left, mut right) = (q_min, q_max);
    let mut steps = 0u32;
    while right - left > cfg.tolerance && steps < cfg.max_steps {
        let third = (right - left) / 3;
        if third == 0 {
            break;
        }
        let m1 = left + third;
        let m2 = right - third;
        if at(m1)? < at(m2)? {
            left = m1;
        } else {
            right = m2;
        }
        steps += 1;
    }
    let value = (at(left)? + at(right)?) / 2.0;
    // BTreeMap order makes the first maximum the smallest level.
    let best_q = cache
        .iter()
        .fold(None::<(u64, f64)>, |best, (&q, &v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((q, v)),
        })
        .map(|(q, _)| q)
        .expect("at least one evaluation");
    Ok(TernaryOutcome {
        value,
        best_q,
        final_left: left,
        final_right: right,
        steps,
        evaluated,
    })
}

/// Ternary search over already prepared splits.
pub fn ternary_on(splits: &PreparedSplits, cfg: &SearchConfig) -> Result<MetricResult> {
    let mut trace = Vec::new();
    let outcome = ternary_search(splits.q_min, splits.q_max, cfg, |q| {
        let pair = evaluate_level(&splits.train, &splits.val, QuantizationLevel::new(q)?)?;
        trace.push(ProbeRecord {
            q,
            train_acc: pair.train,
            val_acc: pair.val,
        });
        Ok(pair.val)
    })?;
    Ok(MetricResult {
        metric: outcome.value,
        q_star: outcome.best_q,
        final_left: outcome.final_left,
        final_right: outcome.final_right,
        q_min: splits.q_min,
        q_max: splits.q_max,
        method: SearchMethod::Ternary,
        steps: outcome.steps,
        trace,
    })
}

/// Exhaustive search over prepared splits.
pub fn brute_on(splits: &PreparedSplits) -> Result<MetricResult> {
    let levels: Vec<u64> = (splits.q_min..=splits.q_max).collect();
    let trace = sweep_curve(&splits.train, &splits.val, &levels)?;
    let best = trace
        .iter()
        .fold(&trace[0], |b, p| if p.val_acc > b.val_acc { p } else { b });
    Ok(MetricResult {
        metric: best.val_acc,
        q_star: best.q,
        final_left: splits.q_min,
        final_right: splits.q_max,
        q_min: splits.q_min,
        q_max: splits.q_max,
        method: SearchMethod::Brute,
        steps: 0,
        trace,
    })
}

/// The transferability score located by ternary search.
pub fn metric_ternary(
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &SearchConfig,
) -> Result<MetricResult> {
    ternary_on(&prepare(train, val, cfg)?, cfg)
}

/// The transferability score located by evaluating every level.
pub fn metric_brute(
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &SearchConfig,
) -> Result<MetricResult> {
    brute_on(&prepare(train, val, cfg)?)
}

pub fn metric(
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &SearchConfig,
    method: SearchMethod,
) -> Result<MetricResult> {
    match method {
        SearchMethod::Ternary => metric_ternary(train, val, cfg),
        SearchMethod::Brute => metric_brute(train, val, cfg),
    }
}

/// Training and validation accuracy of the optimal policy at each level
/// of `q_list`, in order. The splits are used as given.
pub fn sweep_curve(
    train: &LabeledDataset,
    val: &LabeledDataset,
    q_list: &[u64],
) -> Result<Vec<ProbeRecord>> {
    train.check_compatible(val)?;
    q_list
        .iter()
        .map(|&q| {
            let pair = evaluate_level(train, val, QuantizationLevel::new(q)?)?;
            Ok(ProbeRecord {
                q,
                train_acc: pair.train,
                val_acc: pair.val,
            })
        })
        .collect()
}
