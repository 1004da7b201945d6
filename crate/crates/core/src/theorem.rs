//! Simulation of the binary-target convergence result: as the quantization
//! level grows past a data-dependent threshold, the expected validation
//! accuracy of the optimal policy collapses to 1/2.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::policy::{build_counts, derive_policy, train_accuracy, val_accuracy, Decision};
use crate::quantize::{digit, QuantizationLevel};
use crate::seeds;

/// One component of a uniform mixture on `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformPiece {
    pub weight: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityKind {
    UniformMixture {
        pieces: Vec<UniformPiece>,
    },
    /// pdf `(k+1) x^k`, or `(k+1) (1-x)^k` when reflected.
    Power {
        exponent: u32,
        reflected: bool,
    },
}

/// A density on `[0, 1]` with a finite supremum and closed-form CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoundedDensity {
    kind: DensityKind,
}

impl BoundedDensity {
    pub fn uniform() -> Self {
        BoundedDensity {
            kind: DensityKind::UniformMixture {
                pieces: vec![UniformPiece {
                    weight: 1.0,
                    lo: 0.0,
                    hi: 1.0,
                }],
            },
        }
    }

    pub fn uniform_mixture(pieces: Vec<UniformPiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::config("uniform mixture needs at least one piece"));
        }
        for p in &pieces {
            let valid = p.weight > 0.0 && 0.0 <= p.lo && p.lo < p.hi && p.hi <= 1.0;
            if !valid {
                return Err(Error::config(format!(
                    "invalid mixture piece {}@[{}, {})",
                    p.weight, p.lo, p.hi
                )));
            }
        }
        let total: f64 = pieces.iter().map(|p| p.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!("mixture weights sum to {total}")));
        }
        Ok(BoundedDensity {
            kind: DensityKind::UniformMixture { pieces },
        })
    }

    pub fn power(exponent: u32, reflected: bool) -> Self {
        BoundedDensity {
            kind: DensityKind::Power {
                exponent,
                reflected,
            },
        }
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        match &self.kind {
            DensityKind::UniformMixture { pieces } => pieces
                .iter()
                .filter(|p| p.lo <= x && (x < p.hi || (p.hi == 1.0 && x == 1.0)))
                .map(|p| p.weight / (p.hi - p.lo))
                .sum(),
            DensityKind::Power {
                exponent,
                reflected,
            } => {
                let t = if *reflected { 1.0 - x } else { x };
                (*exponent as f64 + 1.0) * t.powi(*exponent as i32)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match &self.kind {
            DensityKind::UniformMixture { pieces } => pieces
                .iter()
                .map(|p| p.weight * ((x - p.lo) / (p.hi - p.lo)).clamp(0.0, 1.0))
                .sum(),
            DensityKind::Power {
                exponent,
                reflected,
            } => {
                let k = *exponent as i32 + 1;
                if *reflected {
                    1.0 - (1.0 - x).powi(k)
                } else {
                    x.powi(k)
                }
            }
        }
    }

    /// Supremum of the pdf.
    pub fn bound(&self) -> f64 {
        match &self.kind {
            DensityKind::UniformMixture { pieces } => {
                let mut cuts: Vec<f64> = pieces.iter().flat_map(|p| [p.lo, p.hi]).collect();
                cuts.sort_by(f64::total_cmp);
                cuts.windows(2)
                    .filter(|w| w[1] > w[0])
                    .map(|w| self.pdf((w[0] + w[1]) / 2.0))
                    .fold(0.0, f64::max)
            }
            DensityKind::Power { exponent, .. } => *exponent as f64 + 1.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match &self.kind {
            DensityKind::UniformMixture { pieces } => {
                let mut acc = 0.0;
                let pick = pieces
                    .iter()
                    .find(|p| {
                        acc += p.weight;
                        u < acc
                    })
                    .unwrap_or(&pieces[pieces.len() - 1]);
                let v: f64 = rng.random();
                pick.lo + v * (pick.hi - pick.lo)
            }
            DensityKind::Power {
                exponent,
                reflected,
            } => {
                let t = u.powf(1.0 / (*exponent as f64 + 1.0));
                if *reflected {
                    1.0 - t
                } else {
                    t
                }
            }
        }
    }

    /// Probability of the cell `{x : floor(x q) = i}` (the last cell also
    /// holds `x = 1`).
    pub fn cell_mass(&self, i: u64, q: u64) -> f64 {
        let lo = i as f64 / q as f64;
        let hi = (i + 1) as f64 / q as f64;
        (self.cdf(hi) - self.cdf(lo)).max(0.0)
    }
}

/// Parses `uniform`, `uniform:LO-HI`, `mix:W@LO-HI,W@LO-HI,...`,
/// `power:K` and `power-reflected:K`.
impl FromStr for BoundedDensity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("unrecognised density `{s}`"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let range = |t: &str| -> Result<(f64, f64)> {
            let (a, b) = t.split_once('-').ok_or_else(bad)?;
            Ok((num(a)?, num(b)?))
        };
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        match head {
            "uniform" if rest.is_empty() => Ok(BoundedDensity::uniform()),
            "uniform" => {
                let (lo, hi) = range(rest)?;
                BoundedDensity::uniform_mixture(vec![UniformPiece {
                    weight: 1.0,
                    lo,
                    hi,
                }])
            }
            "mix" => {
                let pieces = rest
                    .split(',')
                    .map(|part| {
                        let (w, r) = part.split_once('@').ok_or_else(bad)?;
                        let (lo, hi) = range(r)?;
                        Ok(UniformPiece {
                            weight: num(w)?,
                            lo,
                            hi,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                BoundedDensity::uniform_mixture(pieces)
            }
            "power" | "power-reflected" => {
                let k = rest.trim().parse::<u32>().map_err(|_| bad())?;
                Ok(BoundedDensity::power(k, head == "power-reflected"))
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for BoundedDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DensityKind::UniformMixture { pieces } => {
                if let [p] = pieces.as_slice() {
                    if p.lo == 0.0 && p.hi == 1.0 {
                        return write!(f, "uniform");
                    }
                    return write!(f, "uniform:{}-{}", p.lo, p.hi);
                }
                let parts: Vec<String> = pieces
                    .iter()
                    .map(|p| format!("{}@{}-{}", p.weight, p.lo, p.hi))
                    .collect();
                write!(f, "mix:{}", parts.join(","))
            }
            DensityKind::Power {
                exponent,
                reflected: false,
            } => write!(f, "power:{exponent}"),
            DensityKind::Power {
                exponent,
                reflected: true,
            } => write!(f, "power-reflected:{exponent}"),
        }
    }
}

/// Level beyond which the expected validation accuracy is within `epsilon`
/// of 1/2 with probability at least `1 - delta`, for `n` training samples
/// per class and densities bounded by `b`:
/// `b / (1 - (1 - epsilon delta / (4 b))^(1/n))`.
pub fn q_bound(epsilon: f64, delta: f64, b: f64, n: u64) -> Result<f64> {
    if !(epsilon > 0.0 && delta > 0.0 && b > 0.0) || n == 0 {
        return Err(Error::Domain(format!(
            "need epsilon, delta, B > 0 and n >= 1; got {epsilon}, {delta}, {b}, {n}"
        )));
    }
    let x = epsilon * delta / (4.0 * b);
    if x > 1.0 {
        return Err(Error::Domain(format!(
            "epsilon * delta = {} exceeds 4B = {}",
            epsilon * delta,
            4.0 * b
        )));
    }
    // 1 - (1 - x)^(1/n), accurate for small x.
    let gap = -((-x).ln_1p() / n as f64).exp_m1();
    Ok(b / gap)
}

/// How validation accuracy is obtained for a trained policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ValMode {
    /// Exact expectation over the true class densities.
    Analytic,
    /// Accuracy on `n_val` fresh samples per class.
    Sampled { n_val: usize },
}

/// Mean of per-trial values with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub mean: f64,
    pub stderr: f64,
    pub per_trial: Vec<f64>,
}

impl TrialSummary {
    pub fn from_values(per_trial: Vec<f64>) -> Self {
        let k = per_trial.len() as f64;
        let mean = per_trial.iter().sum::<f64>() / k;
        let stderr = if per_trial.len() > 1 {
            let var = per_trial.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        } else {
            0.0
        };
        TrialSummary {
            mean,
            stderr,
            per_trial,
        }
    }

    /// Share of trials farther than `epsilon` from `target`.
    pub fn violation_fraction(&self, target: f64, epsilon: f64) -> f64 {
        let bad = self
            .per_trial
            .iter()
            .filter(|v| (*v - target).abs() > epsilon)
            .count();
        bad as f64 / self.per_trial.len() as f64
    }
}

fn binary_row(x: f64) -> (Vec<f64>, f64) {
    (vec![1.0 - x, x], x)
}

/// `n` samples per class from `f1` (label 1) and `f2` (label 2), as binary
/// softmax rows `[1 - x, x]`.
pub fn draw_binary<R: Rng + ?Sized>(
    f1: &BoundedDensity,
    f2: &BoundedDensity,
    n: usize,
    rng: &mut R,
) -> Result<LabeledDataset> {
    let mut rows = Vec::with_capacity(2 * n);
    for _ in 0..n {
        rows.push((binary_row(f1.sample(rng)).0, 1));
        rows.push((binary_row(f2.sample(rng)).0, 2));
    }
    LabeledDataset::from_rows(2, rows)
}

/// Exact expected validation accuracy of the policy trained on `train`
/// at level `q`, for balanced classes drawn from `f1` and `f2`.
pub fn analytic_val_accuracy(
    train: &LabeledDataset,
    f1: &BoundedDensity,
    f2: &BoundedDensity,
    q: QuantizationLevel,
) -> Result<f64> {
    let counts = build_counts(train, q)?;
    let policy = derive_policy(&counts);
    let qv = q.get();
    let mut hit = 0.0;
    let mut seen_mass = 0.0;
    for (key, decision) in policy.decisions() {
        let i = key.digits()[0];
        let (p1, p2) = (f1.cell_mass(i, qv), f2.cell_mass(i, qv));
        seen_mass += p1 + p2;
        hit += p1 * decision.hit_probability(1) + p2 * decision.hit_probability(2);
    }
    debug_assert!(matches!(policy.default_decision(), Decision::Tie(_)));
    // Unseen cells fall back to a fair tie.
    let unseen = (2.0 - seen_mass).max(0.0) / 2.0;
    Ok((hit + unseen) / 2.0)
}

/// Per-trial validation and training accuracy at one level.
fn trial_values(
    f1: &BoundedDensity,
    f2: &BoundedDensity,
    n: usize,
    q: QuantizationLevel,
    mode: ValMode,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = draw_binary(f1, f2, n, &mut rng)?;
    let val = match mode {
        ValMode::Analytic => analytic_val_accuracy(&train, f1, f2, q)?,
        ValMode::Sampled { n_val } => {
            let mut vrng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, 1));
            let val = draw_binary(f1, f2, n_val, &mut vrng)?;
            let counts = build_counts(&train, q)?;
            val_accuracy(&val, &derive_policy(&counts), q)?
        }
    };
    let counts = build_counts(&train, q)?;
    let tr = train_accuracy(&counts, &derive_policy(&counts))?;
    Ok((val, tr))
}

fn run_trials(
    f1: &BoundedDensity,
    f2: &BoundedDensity,
    n: usize,
    q: u64,
    trials: usize,
    mode: ValMode,
    seed: u64,
) -> Result<(TrialSummary, TrialSummary)> {
    if trials == 0 || n == 0 {
        return Err(Error::config("trials and n must be >= 1"));
    }
    let q = QuantizationLevel::new(q)?;
    let values = (0..trials)
        .into_par_iter()
        .map(|t| trial_values(f1, f2, n, q, mode, seeds::derive(seed, t as u64)))
        .collect::<Result<Vec<_>>>()?;
    let (val, tr): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();
    Ok((
        TrialSummary::from_values(val),
        TrialSummary::from_values(tr),
    ))
}

/// Monte-Carlo mean and standard error, over training draws, of the
/// expected validation accuracy at level `q`.
///
/// Trial `t` always uses the same training draw for a given seed, so
/// calls at different levels share their training sets.
pub fn expected_val_accuracy(
    f1: &BoundedDensity,
    f2: &BoundedDensity,
    n: usize,
    q: u64,
    trials: usize,
    seed: u64,
) -> Result<TrialSummary> {
    Ok(run_trials(f1, f2, n, q, trials, ValMode::Analytic, seed)?.0)
}

/// Like [`expected_val_accuracy`] with an explicit validation mode.
pub fn val_accuracy_trials(
    f1: &BoundedDensity,
    f2: &BoundedDensity,
    n: usize,
    q: u64,
    trials: usize,
    mode: ValMode,
    seed: u64,
) -> Result<TrialSummary> {
    Ok(run_trials(f1, f2, n, q, trials, mode, seed)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremRunConfig {
    /// Training samples per class.
    pub n: usize,
    pub q_schedule: Vec<u64>,
    pub val_mode: ValMode,
    pub trials: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
}

impl TheoremRunConfig {
    pub fn validate(&self, bound: f64) -> Result<()> {
        if self.n == 0 || self.trials == 0 {
            return Err(Error::config("n and trials must be >= 1"));
        }
        if self.q_schedule.is_empty() {
            return Err(Error::config("q schedule is empty"));
        }
        if self.q_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("q schedule must be strictly increasing"));
        }
        if self.q_schedule[0] < 2 {
            return Err(Error::InvalidLevel(self.q_schedule[0]));
        }
        if let ValMode::Sampled { n_val: 0 } = self.val_mode {
            return Err(Error::config("n_val must be >= 1"));
        }
        let ed = self.epsilon * self.delta;
        if !(self.epsilon > 0.0 && self.delta > 0.0 && self.epsilon <= 1.0 && self.delta <= 1.0) {
            return Err(Error::config("epsilon and delta must lie in (0, 1]"));
        }
        if ed > 4.0 * bound {
            return Err(Error::Domain(format!(
                "epsilon * delta = {ed} exceeds 4B = {}",
                4.0 * bound
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub q: u64,
    pub mean_val_acc: f64,
    pub stderr: f64,
    pub bound_q: f64,
    /// `q` lies beyond the convergence threshold.
    pub satisfied: bool,
    pub mean_train_acc: f64,
    /// Share of trials with `|E[A^val] - 1/2| > epsilon`.
    pub violation_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub bound: f64,
    pub bound_q: f64,
    pub rows: Vec<SweepRow>,
}

/// Evaluates every level of the schedule on shared training draws.
pub fn convergence_sweep(
    cfg: &TheoremRunConfig,
    f1: &BoundedDensity,
    f2: &BoundedDensity,
) -> Result<ConvergenceTable> {
    let bound = f1.bound().max(f2.bound());
    cfg.validate(bound)?;
    let bound_q = q_bound(cfg.epsilon, cfg.delta, bound, cfg.n as u64)?;
    let rows = cfg
        .q_schedule
        .iter()
        .map(|&q| {
            let (val, tr) = run_trials(f1, f2, cfg.n, q, cfg.trials, cfg.val_mode, cfg.seed)?;
            Ok(SweepRow {
                q,
                mean_val_acc: val.mean,
                stderr: val.stderr,
                bound_q,
                satisfied: q as f64 > bound_q,
                mean_train_acc: tr.mean,
                violation_fraction: val.violation_fraction(0.5, cfg.epsilon),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable {
        bound,
        bound_q,
        rows,
    })
}

/// Maps a binary output `x` to a three-class vector whose cell at level
/// `2q` corresponds one-to-one to the binary cell of `x` at level `q^2`.
///
/// Binary cell `c = floor(x q^2)` splits into digits `(c / q, c % q)`,
/// placed at the centres of the matching level-`2q` cells.
pub fn embed_binary_in_ternary(x: f64, q: u64) -> Vec<f64> {
    let c = digit(x, q * q);
    let (a, b) = (c / q, c % q);
    let p2 = (a as f64 + 0.5) / (2 * q) as f64;
    let p3 = (b as f64 + 0.5) / (2 * q) as f64;
    vec![1.0 - p2 - p3, p2, p3]
}
