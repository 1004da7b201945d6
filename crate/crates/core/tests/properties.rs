use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quantrank::policy::{build_counts, evaluate_level};
use quantrank::ranking::{correctness_with_slack, rank_deviation, run_protocol, ProtocolConfig};
use quantrank::search::{metric_brute, metric_ternary, ternary_search, SearchConfig};
use quantrank::stats;
use quantrank::synth::{generate_family, generate_split, Family, FamilyConfig, SynthSpec};
use quantrank::{derive_policy, train_accuracy_exact, Decision, LabeledDataset, QuantizationLevel};

fn random_rows(m: usize, n: usize, len: usize, seed: u64) -> Vec<(Vec<f64>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|i| {
            let e: Vec<f64> = (0..m).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let s: f64 = e.iter().sum();
            let label = if i < n {
                i + 1
            } else {
                rng.random_range(1..=n)
            };
            (e.iter().map(|v| v / s).collect(), label)
        })
        .collect()
}

fn synthetic(overlap: f64, per_class: usize, seed: u64) -> (LabeledDataset, LabeledDataset) {
    let spec = SynthSpec {
        m: 2,
        n: 2,
        per_class,
        overlap,
        family: Family::Bump,
        seed,
    };
    generate_split(&spec, 0.2).unwrap()
}

/// Strictly increasing up to `peak`, strictly decreasing after it.
fn peaked(peak: u64, q: u64) -> f64 {
    1.0 - (q as f64 - peak as f64).abs() / 1000.0
}

#[test]
fn known_peak_is_found() {
    let cfg = SearchConfig::default();
    let out = ternary_search(2, 200, &cfg, |q| Ok(peaked(40, q))).unwrap();
    assert!(out.best_q.abs_diff(40) <= cfg.tolerance + 1, "{out:?}");
    assert!(out.final_left <= 40 && 40 <= out.final_right);
}

#[test]
fn degenerate_range_skips_the_loop() {
    let cfg = SearchConfig::default();
    let out = ternary_search(2, 7, &cfg, |q| Ok(q as f64)).unwrap();
    assert_eq!(out.steps, 0);
    assert_eq!(out.value, (2.0 + 7.0) / 2.0);
}

proptest! {
    #[test]
    fn unimodal_peak_stays_bracketed(lo in 2u64..50, width in 0u64..400, frac in 0.0f64..=1.0, tol in 1u64..8) {
        let hi = lo + width;
        let peak = lo + (width as f64 * frac).round() as u64;
        let cfg = SearchConfig { tolerance: tol, max_steps: 1000, ..SearchConfig::default() };
        let out = ternary_search(lo, hi, &cfg, |q| Ok(peaked(peak, q))).unwrap();
        prop_assert!(out.final_left <= peak && peak <= out.final_right, "{:?}", out);
        prop_assert!(out.final_right - out.final_left <= tol.max(2));
        prop_assert!(out.evaluated.iter().all(|&(q, _)| lo <= q && q <= hi));
    }

    #[test]
    fn evaluation_budget(max_steps in 1u32..6, tol in 1u64..6, seed in 0u64..1000) {
        let (train, val) = synthetic(0.4, 150, seed);
        let cfg = SearchConfig { tolerance: tol, max_steps, seed, ..SearchConfig::default() };
        let t = metric_ternary(&train, &val, &cfg).unwrap();
        prop_assert!(t.evaluations() <= 2 * max_steps as usize + 2);
        prop_assert!(t.trace.iter().all(|p| t.q_min <= p.q && p.q <= t.q_max));
        let b = metric_brute(&train, &val, &cfg).unwrap();
        prop_assert_eq!(b.evaluations() as u64, b.q_max - b.q_min + 1);
    }

    #[test]
    fn ternary_never_exceeds_brute(overlap in 0.0f64..=1.0, seed in 0u64..1000) {
        let (train, val) = synthetic(overlap, 60, seed);
        let cfg = SearchConfig { seed, ..SearchConfig::default() };
        let t = metric_ternary(&train, &val, &cfg).unwrap();
        let b = metric_brute(&train, &val, &cfg).unwrap();
        prop_assert!(t.metric <= b.metric);
        prop_assert!((0.0..=1.0).contains(&t.metric) && (0.0..=1.0).contains(&b.metric));
        prop_assert_eq!(&t, &metric_ternary(&train, &val, &cfg).unwrap());
    }

    #[test]
    fn optimal_training_accuracy_is_at_least_one_over_n(m in 2usize..4, n in 2usize..4, q in 2u64..12, seed: u64) {
        let data = LabeledDataset::from_rows(n, random_rows(m, n, 30, seed)).unwrap();
        let counts = build_counts(&data, QuantizationLevel::new(q).unwrap()).unwrap();
        let acc = train_accuracy_exact(&counts, &derive_policy(&counts)).unwrap();
        let floor = num_rational::Ratio::new(1u128, n as u128);
        prop_assert!(acc >= floor && acc <= num_rational::Ratio::from_integer(1));
    }

    #[test]
    fn relabelling_permutes_decisions(m in 2usize..4, q in 2u64..8, seed: u64) {
        let n = 3;
        let perm = [2usize, 3, 1];
        let rows = random_rows(m, n, 40, seed);
        let val_rows = random_rows(m, n, 20, seed ^ 1);
        let relabel = |rows: &[(Vec<f64>, usize)]| -> Vec<(Vec<f64>, usize)> {
            rows.iter().map(|(p, l)| (p.clone(), perm[l - 1])).collect()
        };
        let level = QuantizationLevel::new(q).unwrap();
        let (train, val) = (
            LabeledDataset::from_rows(n, rows.clone()).unwrap(),
            LabeledDataset::from_rows(n, val_rows.clone()).unwrap(),
        );
        let (train_p, val_p) = (
            LabeledDataset::from_rows(n, relabel(&rows)).unwrap(),
            LabeledDataset::from_rows(n, relabel(&val_rows)).unwrap(),
        );
        prop_assert_eq!(evaluate_level(&train, &val, level).unwrap(), evaluate_level(&train_p, &val_p, level).unwrap());
        let a = derive_policy(&build_counts(&train, level).unwrap());
        let b = derive_policy(&build_counts(&train_p, level).unwrap());
        for (key, d) in a.decisions() {
            let expected = match d {
                Decision::Single(c) => Decision::Single(perm[c - 1]),
                Decision::Tie(set) => {
                    let mut s: Vec<usize> = set.iter().map(|c| perm[c - 1]).collect();
                    s.sort_unstable();
                    Decision::Tie(s)
                }
            };
            prop_assert_eq!(b.decide(key), &expected);
        }
    }

    #[test]
    fn rank_invariant_correlations(seed: u64, len in 3usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(0..20) as f64 / 20.0).collect();
        let y: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        let monotone: Vec<f64> = x.iter().map(|v| (3.0 * v).exp() + v.powi(3)).collect();
        let affine: Vec<f64> = x.iter().map(|v| 2.5 * v - 7.0).collect();
        if let Ok(s) = stats::spearman(&x, &y) {
            prop_assert!((s - stats::spearman(&monotone, &y).unwrap()).abs() < 1e-12);
        }
        if let Ok(k) = stats::kendall_tau_b(&x, &y) {
            prop_assert!((k - stats::kendall_tau_b(&monotone, &y).unwrap()).abs() < 1e-12);
        }
        if let Ok(p) = stats::pearson(&x, &y) {
            prop_assert!((p - stats::pearson(&affine, &y).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_ranking_is_fully_correct(len in 1usize..30, slack in 0.0f64..0.1, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truths: Vec<f64> = (0..len).map(|_| rng.random()).collect();
        let mut ranks: Vec<usize> = (1..=len).collect();
        for i in (1..len).rev() {
            ranks.swap(i, rng.random_range(0..=i));
        }
        prop_assert_eq!(correctness_with_slack(&ranks, &ranks, &truths, slack), 1.0);
        prop_assert_eq!(rank_deviation(&ranks, &ranks).0, 0.0);
        if len >= 2 {
            let mut other = ranks.clone();
            other.swap(0, 1);
            prop_assert!(rank_deviation(&other, &ranks).0 > 0.0);
        }
    }
}

#[test]
fn unseen_validation_cells_score_one_over_n() {
    let train = LabeledDataset::from_rows(
        3,
        vec![
            (vec![0.95, 0.05], 1),
            (vec![0.9, 0.1], 2),
            (vec![0.92, 0.08], 3),
            (vec![0.97, 0.03], 1),
        ],
    )
    .unwrap();
    let val = LabeledDataset::from_rows(
        3,
        vec![
            (vec![0.1, 0.9], 1),
            (vec![0.2, 0.8], 2),
            (vec![0.3, 0.7], 3),
        ],
    )
    .unwrap();
    let acc = evaluate_level(&train, &val, QuantizationLevel::new(4).unwrap()).unwrap();
    assert_eq!(acc.val, 1.0 / 3.0);
}

#[test]
fn family_ranking_is_reproducible() {
    let cfg = FamilyConfig {
        per_class: 60,
        seed: 12,
        ..FamilyConfig::default()
    };
    let (dumps, truth) = generate_family(&cfg.specs().unwrap(), cfg.val_fraction).unwrap();
    let protocol = ProtocolConfig {
        tl_frac: 0.5,
        iterations: 2,
        seed: 3,
        ..ProtocolConfig::default()
    };
    let a = run_protocol(&dumps, Some(&truth), &protocol).unwrap();
    let b = run_protocol(&dumps, Some(&truth), &protocol).unwrap();
    let strip = |r: &quantrank::ranking::ProtocolReport| serde_json::to_string(r).unwrap();
    assert_eq!(strip(&a), strip(&b));
    let survivors = a.iterations[0].report.as_ref().unwrap().source_ids.len();
    assert_eq!(survivors, 10);
}

#[test]
fn overlap_lowers_the_metric_on_average() {
    let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let means: Vec<f64> = grid
        .iter()
        .map(|&o| {
            (0..10)
                .map(|seed| {
                    let (train, val) = synthetic(o, 200, 77 + seed);
                    metric_brute(&train, &val, &SearchConfig::default())
                        .unwrap()
                        .metric
                })
                .sum::<f64>()
                / 10.0
        })
        .collect();
    assert!(means.windows(2).all(|w| w[0] > w[1]), "{means:?}");
}

#[test]
fn indistinguishable_classes_score_near_chance() {
    let scores: Vec<f64> = (0..20)
        .map(|seed| {
            let (train, val) = synthetic(1.0, 250, 900 + seed);
            metric_brute(&train, &val, &SearchConfig::default())
                .unwrap()
                .metric
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    // 100 validation samples: sd of one accuracy is 0.05; the maximum over
    // levels is biased upwards, so allow three standard deviations.
    assert!((mean - 0.5).abs() <= 3.0 * 0.05, "{mean}");
}
