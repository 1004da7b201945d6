//! Transferability scoring for black-box source classifiers.
//!
//! Source softmax outputs on labelled target data are quantized into cells,
//! an optimal cell-to-label policy is fit on training data, and the best
//! validation accuracy over quantization levels (found by ternary search)
//! scores the source. Sources are then ranked by that score.
//!
//! ```
//! use quantrank::{metric_ternary, LabeledDataset, SearchConfig};
//!
//! let rows = |k: usize| -> Vec<(Vec<f64>, usize)> {
//!     (0..k)
//!         .flat_map(|i| {
//!             let x = 0.4 * (i as f64 + 0.5) / k as f64;
//!             [(vec![1.0 - x, x], 1), (vec![x, 1.0 - x], 2)]
//!         })
//!         .collect()
//! };
//! let train = LabeledDataset::from_rows(2, rows(40)).unwrap();
//! let val = LabeledDataset::from_rows(2, rows(10)).unwrap();
//! let r = metric_ternary(&train, &val, &SearchConfig::default()).unwrap();
//! assert_eq!(r.metric, 1.0);
//! ```

pub mod commands;
pub mod compare;
pub mod cputime;
pub mod dataset;
pub mod error;
pub mod io;
pub mod policy;
pub mod quantize;
pub mod ranking;
pub mod search;
pub mod seeds;
pub mod stats;
pub mod synth;
pub mod theorem;

pub use dataset::{LabeledDataset, SoftmaxSample};
pub use error::{Error, Result};
pub use policy::{
    build_counts, derive_policy, train_accuracy, train_accuracy_exact, val_accuracy,
    ConditionalCounts, Decision, Policy,
};
pub use quantize::{quantize, BinKey, QuantizationLevel, SoftmaxVector};
pub use ranking::{GroundTruth, RankReport, SourceDumps, SourceScore};
pub use search::{
    metric_brute, metric_ternary, sweep_curve, MetricResult, SearchConfig, SearchMethod,
};
