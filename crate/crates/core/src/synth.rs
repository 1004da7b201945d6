//! Seeded synthetic source dumps with controllable class overlap.
//!
//! Each sample has a latent score `t` in `[0, 1]` that becomes the second
//! softmax coordinate; the other coordinates share the remaining mass at
//! random. Class `j` draws `t` from its own region with probability
//! `1 - overlap` and uniformly from `[0, 1]` otherwise, so the Bayes
//! accuracy is `1 - overlap + overlap / n` in closed form.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, SoftmaxSample};
use crate::error::{Error, Result};
use crate::quantize::SoftmaxVector;
use crate::ranking::{GroundTruth, SourceDumps};
use crate::seeds;

/// Shape of the class-owned regions of the latent score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Class `j` owns `[(j-1)/n, j/n)`, with a bump-shaped density.
    Bump,
    /// The unit interval is cut into `stripes_per_class * n` stripes dealt
    /// round-robin to the classes. Coarse levels mix the classes, fine levels
    /// overfit, so validation accuracy peaks at an interior level.
    Striped { stripes_per_class: u32 },
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "bump" => Ok(Family::Bump),
            Some(("striped", k)) => {
                let k: u32 = k
                    .parse()
                    .map_err(|_| Error::config(format!("bad stripe count in `{s}`")))?;
                if k == 0 {
                    return Err(Error::config("stripe count must be >= 1"));
                }
                Ok(Family::Striped {
                    stripes_per_class: k,
                })
            }
            _ => Err(Error::config(format!(
                "unknown family `{s}` (bump | striped:K)"
            ))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Bump => write!(f, "bump"),
            Family::Striped { stripes_per_class } => write!(f, "striped:{stripes_per_class}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Source classes.
    pub m: usize,
    /// Target classes.
    pub n: usize,
    pub per_class: usize,
    pub overlap: f64,
    pub family: Family,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.n < 2 || self.per_class < 2 {
            return Err(Error::config(format!(
                "need m >= 2, n >= 2, per_class >= 2; got m={}, n={}, per_class={}",
                self.m, self.n, self.per_class
            )));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::config(format!(
                "overlap {} outside [0, 1]",
                self.overlap
            )));
        }
        Ok(())
    }

    /// Bayes accuracy of the class conditionals with equal priors.
    pub fn bayes_accuracy(&self) -> f64 {
        1.0 - self.overlap + self.overlap / self.n as f64
    }
}

/// Beta(2, 2) draw: the median of three uniforms.
fn bump<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let mut u: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    u.sort_by(f64::total_cmp);
    u[1]
}

fn latent<R: Rng + ?Sized>(spec: &SynthSpec, class: usize, rng: &mut R) -> f64 {
    if rng.random::<f64>() < spec.overlap {
        return rng.random();
    }
    let n = spec.n as f64;
    match spec.family {
        Family::Bump => (class as f64 + bump(rng)) / n,
        Family::Striped { stripes_per_class } => {
            let k = rng.random_range(0..stripes_per_class) as usize;
            let stripe = k * spec.n + class;
            (stripe as f64 + bump(rng)) / (stripes_per_class as f64 * n)
        }
    }
}

/// Softmax vector with second coordinate `t`; the rest of the mass is
/// spread over the other coordinates with flat Dirichlet weights.
fn softmax_row<R: Rng + ?Sized>(m: usize, t: f64, rng: &mut R) -> Vec<f64> {
    let rest = 1.0 - t;
    let mut p = vec![0.0; m];
    p[1] = t;
    if m == 2 {
        p[0] = rest;
        return p;
    }
    let e: Vec<f64> = (0..m - 1)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = e.iter().sum();
    let others = (0..m).filter(|&i| i != 1);
    for (i, w) in others.zip(&e) {
        p[i] = rest * w / total;
    }
    p
}

/// Balanced dataset for `spec`. Labels cycle `1, 2, ..., n, 1, 2, ...` so
/// every dataset with the same `n` and `per_class` has the same label layout.
pub fn generate(spec: &SynthSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = Vec::with_capacity(spec.n * spec.per_class);
    for _ in 0..spec.per_class {
        for class in 0..spec.n {
            let t = latent(spec, class, &mut rng);
            samples.push(SoftmaxSample {
                probs: SoftmaxVector::new(softmax_row(spec.m, t, &mut rng))?,
                label: class + 1,
            });
        }
    }
    LabeledDataset::new(spec.n, samples)
}

/// Splits off the last `val_fraction` of each class as validation data.
/// Samples are i.i.d., so a positional split is an unbiased one.
pub fn split(data: &LabeledDataset, val_fraction: f64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::config(format!(
            "val_fraction must be in (0, 1), got {val_fraction}"
        )));
    }
    let counts = data.class_counts();
    let val_counts: Vec<usize> = counts
        .iter()
        .map(|&c| ((c as f64 * val_fraction).round() as usize).clamp(1, c.saturating_sub(1).max(1)))
        .collect();
    let mut seen = vec![0usize; data.n()];
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for s in data.samples() {
        let c = s.label - 1;
        seen[c] += 1;
        if seen[c] > counts[c] - val_counts[c] {
            val.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok((
        LabeledDataset::new(data.n(), train)?,
        LabeledDataset::new(data.n(), val)?,
    ))
}

/// Generates and splits one source.
pub fn generate_split(
    spec: &SynthSpec,
    val_fraction: f64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    split(&generate(spec)?, val_fraction)
}

/// A family of sources on one target with overlap spread evenly over
/// `[0, max_overlap]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub count: usize,
    pub m: usize,
    pub n: usize,
    pub per_class: usize,
    pub max_overlap: f64,
    pub family: Family,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            count: 45,
            m: 2,
            n: 2,
            per_class: 250,
            max_overlap: 0.9,
            family: Family::Bump,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

impl FamilyConfig {
    /// Source ids and specs, `src-00`, `src-01`, ... in order of overlap.
    pub fn specs(&self) -> Result<Vec<(String, SynthSpec)>> {
        if self.count < 3 {
            return Err(Error::config(format!(
                "a family needs >= 3 sources, got {}",
                self.count
            )));
        }
        if !(0.0..=1.0).contains(&self.max_overlap) {
            return Err(Error::config("max_overlap must lie in [0, 1]"));
        }
        let width = (self.count - 1).to_string().len().max(2);
        Ok((0..self.count)
            .map(|i| {
                let spec = SynthSpec {
                    m: self.m,
                    n: self.n,
                    per_class: self.per_class,
                    overlap: self.max_overlap * i as f64 / (self.count - 1) as f64,
                    family: self.family,
                    seed: seeds::derive(self.seed, i as u64),
                };
                (format!("src-{i:0width$}"), spec)
            })
            .collect())
    }
}

/// Dumps for every spec, with Bayes accuracies as ground truth.
pub fn generate_family(
    specs: &[(String, SynthSpec)],
    val_fraction: f64,
) -> Result<(Vec<SourceDumps>, GroundTruth)> {
    if specs.len() < 3 {
        return Err(Error::config(format!(
            "a family needs >= 3 sources, got {}",
            specs.len()
        )));
    }
    let dumps = specs
        .par_iter()
        .map(|(id, spec)| {
            let (train, val) = generate_split(spec, val_fraction)?;
            Ok(SourceDumps {
                source_id: id.clone(),
                train,
                val,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = GroundTruth::new(specs.iter().map(|(id, s)| (id.clone(), s.bayes_accuracy())))?;
    Ok((dumps, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::{metric_brute, SearchConfig};

    fn spec(overlap: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            m: 3,
            n: 2,
            per_class: 100,
            overlap,
            family: Family::Bump,
            seed,
        }
    }

    #[test]
    fn balanced_and_on_the_simplex() {
        let d = generate(&spec(0.3, 1)).unwrap();
        assert_eq!(d.class_counts(), vec![100, 100]);
        for s in d.samples() {
            let sum: f64 = s.probs.as_slice().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(
            generate(&spec(0.5, 3)).unwrap(),
            generate(&spec(0.5, 3)).unwrap()
        );
        assert_ne!(
            generate(&spec(0.5, 3)).unwrap(),
            generate(&spec(0.5, 4)).unwrap()
        );
    }

    #[test]
    fn zero_overlap_is_separable() {
        let d = generate(&spec(0.0, 8)).unwrap();
        for s in d.samples() {
            let t = s.probs.as_slice()[1];
            assert_eq!(t >= 0.5, s.label == 2);
        }
        let (tr, va) = split(&d, 0.2).unwrap();
        let r = metric_brute(&tr, &va, &SearchConfig::default()).unwrap();
        assert_eq!(r.metric, 1.0);
    }

    #[test]
    fn bayes_accuracy_endpoints() {
        assert_eq!(spec(0.0, 0).bayes_accuracy(), 1.0);
        assert_eq!(spec(1.0, 0).bayes_accuracy(), 0.5);
    }

    #[test]
    fn striped_classes_alternate() {
        let s = SynthSpec {
            m: 2,
            n: 2,
            per_class: 200,
            overlap: 0.0,
            family: Family::Striped {
                stripes_per_class: 3,
            },
            seed: 2,
        };
        for x in generate(&s).unwrap().samples() {
            let stripe = (x.probs.as_slice()[1] * 6.0).floor() as usize;
            assert_eq!(stripe % 2 + 1, x.label);
        }
    }

    #[test]
    fn split_keeps_balance() {
        let d = generate(&spec(0.2, 5)).unwrap();
        let (tr, va) = split(&d, 0.2).unwrap();
        assert_eq!(tr.class_counts(), vec![80, 80]);
        assert_eq!(va.class_counts(), vec![20, 20]);
    }

    #[test]
    fn family_truth_is_ordered() {
        let cfg = FamilyConfig {
            per_class: 10,
            ..FamilyConfig::default()
        };
        let specs = cfg.specs().unwrap();
        assert_eq!(specs.len(), 45);
        assert_eq!(specs[0].0, "src-00");
        let (dumps, truth) = generate_family(&specs, cfg.val_fraction).unwrap();
        assert_eq!(dumps.len(), 45);
        let t: Vec<f64> = specs.iter().map(|(id, _)| truth.get(id).unwrap()).collect();
        assert!(t.windows(2).all(|w| w[0] > w[1]));
        // Default family: exactly ten sources above 0.9.
        assert_eq!(t.iter().filter(|&&v| v > 0.9).count(), 10);
    }

    #[test]
    fn family_parses() {
        assert_eq!("bump".parse::<Family>().unwrap(), Family::Bump);
        assert_eq!(
            "striped:4".parse::<Family>().unwrap(),
            Family::Striped {
                stripes_per_class: 4
            }
        );
        assert!("striped:0".parse::<Family>().is_err());
        assert!("gauss".parse::<Family>().is_err());
    }
}
