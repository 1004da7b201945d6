//! Acceptance checks, one test per criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quantrank::compare::{compare_sources, synthetic_pairs, ComparisonSummary, PairConfig};
use quantrank::cputime;
use quantrank::policy::build_counts;
use quantrank::quantize::{quantize_raw, BinKey};
use quantrank::ranking::{run_protocol, ProtocolConfig};
use quantrank::search::{self, SearchConfig};
use quantrank::stats;
use quantrank::synth::{generate_family, generate_split, Family, FamilyConfig, SynthSpec};
use quantrank::theorem::{expected_val_accuracy, q_bound, BoundedDensity};
use quantrank::{derive_policy, train_accuracy_exact, LabeledDataset, QuantizationLevel};

fn verdict(n: u32, pass: bool, detail: String) {
    println!(
        "criterion {n}: {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} failed: {detail}");
}

fn random_simplex<R: Rng>(m: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..m).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn random_dataset<R: Rng>(m: usize, n: usize, len: usize, rng: &mut R) -> LabeledDataset {
    let rows = (0..len)
        .map(|i| {
            // every class present at least once
            let label = if i < n {
                i + 1
            } else {
                rng.random_range(1..=n)
            };
            (random_simplex(m, rng), label)
        })
        .collect();
    LabeledDataset::from_rows(n, rows).unwrap()
}

/// Best training accuracy `(1/n) sum_cells P(cell | label)` over every
/// deterministic labelling of the occupied cells, as an exact fraction.
fn exhaustive_best(data: &LabeledDataset, q: u64) -> Ratio<u128> {
    let n = data.n();
    let mut table: BTreeMap<BinKey, Vec<u128>> = BTreeMap::new();
    let mut totals = vec![0u128; n];
    for s in data.samples() {
        let key = quantize_raw(s.probs.as_slice(), q).unwrap();
        table.entry(key).or_insert_with(|| vec![0; n])[s.label - 1] += 1;
        totals[s.label - 1] += 1;
    }
    let cells: Vec<Vec<u128>> = table.into_values().collect();
    let count = (n as u128).pow(cells.len() as u32);
    let mut best = Ratio::from_integer(0u128);
    for code in 0..count {
        let mut c = code;
        let mut acc = Ratio::from_integer(0u128);
        for row in &cells {
            let label = (c % n as u128) as usize;
            acc += Ratio::new(row[label], totals[label]);
            c /= n as u128;
        }
        best = best.max(acc / Ratio::from_integer(n as u128));
    }
    best
}

#[test]
fn criterion_1_policy_is_optimal_on_training_data() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    let mut max_cells = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=3);
        // q^(m-1) <= 8 cells reachable
        let (m, q) = if rng.random_bool(0.5) {
            (2, rng.random_range(2..=8))
        } else {
            (3, 2)
        };
        let len = rng.random_range(n..=40);
        let data = random_dataset(m, n, len, &mut rng);
        let level = QuantizationLevel::new(q).unwrap();
        let counts = build_counts(&data, level).unwrap();
        max_cells = max_cells.max(counts.len());
        let got = train_accuracy_exact(&counts, &derive_policy(&counts)).unwrap();
        if got != exhaustive_best(&data, q) {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        mismatches == 0 && max_cells <= 8 && secs < 10.0,
        format!("200 instances, mismatches={mismatches}, max cells={max_cells}, {secs:.2}s"),
    );
}

#[test]
fn criterion_2_refinement_never_lowers_training_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut checks = 0;
    let mut violations = 0;
    for _ in 0..100 {
        let m = rng.random_range(2..=4);
        let n = rng.random_range(2..=3);
        let data = random_dataset(m, n, 80, &mut rng);
        for q in 2..=20u64 {
            let acc = |level: u64| {
                let counts = build_counts(&data, QuantizationLevel::new(level).unwrap()).unwrap();
                train_accuracy_exact(&counts, &derive_policy(&counts)).unwrap()
            };
            let base = acc(q);
            for k in [2, 3] {
                checks += 1;
                if acc(k * q) < base {
                    violations += 1;
                }
            }
        }
    }
    verdict(
        2,
        violations == 0,
        format!("{checks} exact comparisons, violations={violations}"),
    );
}

fn search_deviation(samples: usize) -> ComparisonSummary {
    let cfg = PairConfig {
        pairs: 100,
        samples,
        seed: 303,
        ..PairConfig::default()
    };
    let rows = compare_sources(&synthetic_pairs(&cfg).unwrap(), &SearchConfig::default()).unwrap();
    ComparisonSummary::from_rows(&rows)
}

#[test]
fn criterion_3_ternary_tracks_brute_force() {
    let start = Instant::now();
    let small = search_deviation(100);
    let large = search_deviation(500);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        3,
        small.mean_abs_diff <= 0.05 && large.mean_abs_diff <= 0.025 && secs < 60.0,
        format!(
            "mean |dM| at 100 samples={:.4} (max {:.4}), at 500 samples={:.4} (max {:.4}), {secs:.1}s",
            small.mean_abs_diff, small.max_abs_diff, large.mean_abs_diff, large.max_abs_diff
        ),
    );
}

#[test]
fn criterion_4_validation_accuracy_collapses_to_one_half() {
    let start = Instant::now();
    let f1 = BoundedDensity::power(1, false);
    let f2 = BoundedDensity::power(1, true);
    let b = f1.bound().max(f2.bound());
    let far = expected_val_accuracy(&f1, &f2, 100, 100_000, 50, 404).unwrap();
    let (eps, delta) = (0.1, 0.5);
    let threshold = q_bound(eps, delta, b, 100).unwrap();
    let q = threshold.floor() as u64 + 1;
    let at_bound = expected_val_accuracy(&f1, &f2, 100, q, 50, 405).unwrap();
    let violations = at_bound.violation_fraction(0.5, eps);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        4,
        b <= 4.0 && (far.mean - 0.5).abs() <= 0.05 && violations <= delta && secs < 300.0,
        format!(
            "B={b}, mean at q=1e5: {:.5} (se {:.5}); at q={q} > {threshold:.2}: violation fraction {violations} <= {delta}, {secs:.1}s",
            far.mean, far.stderr
        ),
    );
}

#[test]
fn criterion_5_validation_curve_bends_inside_the_range() {
    let mut interior = 0;
    let mut train_rises = 0;
    let seeds = 50;
    for seed in 0..seeds {
        let spec = SynthSpec {
            m: 2,
            n: 2,
            per_class: 250,
            overlap: 0.5,
            family: Family::Striped {
                stripes_per_class: 4,
            },
            seed: 5000 + seed,
        };
        let (train, val) = generate_split(&spec, 0.2).unwrap();
        let splits = search::prepare(&train, &val, &SearchConfig::default()).unwrap();
        let levels: Vec<u64> = (splits.q_min..=splits.q_max).collect();
        let curve = search::sweep_curve(&splits.train, &splits.val, &levels).unwrap();
        let best = curve
            .iter()
            .fold(&curve[0], |b, p| if p.val_acc > b.val_acc { p } else { b });
        if best.q > splits.q_min && best.q < splits.q_max {
            interior += 1;
        }
        if curve.last().unwrap().train_acc > curve[0].train_acc {
            train_rises += 1;
        }
    }
    let share = interior as f64 / seeds as f64;
    verdict(
        5,
        share >= 0.9 && train_rises == seeds,
        format!("interior maximum in {interior}/{seeds} seeds, training accuracy rises in {train_rises}/{seeds}"),
    );
}

#[test]
fn criterion_6_ranking_matches_ground_truth() {
    let cfg = FamilyConfig {
        seed: 606,
        ..FamilyConfig::default()
    };
    let specs = cfg.specs().unwrap();
    let (dumps, truth) = generate_family(&specs, cfg.val_fraction).unwrap();
    let protocol = ProtocolConfig {
        seed: 606,
        ..ProtocolConfig::default()
    };
    let report = run_protocol(&dumps, Some(&truth), &protocol).unwrap();
    let r = report.iterations[0].report.as_ref().unwrap();
    let spearman = r.correlations.spearman.unwrap_or(f64::NAN);
    verdict(
        6,
        r.fraction_correct >= 0.8 && r.mean_dev <= 2.0 && spearman >= 0.8,
        format!(
            "{} sources x {} samples, survivors={}, fraction_correct={:.3}, mean rank deviation={:.3}, spearman={spearman:.4}",
            dumps.len(),
            cfg.per_class * cfg.n,
            r.source_ids.len(),
            r.fraction_correct,
            r.mean_dev
        ),
    );
}

mod reference {
    pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    /// Rank = 1 + number smaller + (number equal - 1) / 2.
    fn ranks(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|a| {
                let less = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                1.0 + less + (equal - 1.0) / 2.0
            })
            .collect()
    }

    pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
        pearson(&ranks(x), &ranks(y))
    }

    pub fn kendall_b(x: &[f64], y: &[f64]) -> f64 {
        let (mut conc, mut disc, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                let dx = x[i] - x[j];
                let dy = y[i] - y[j];
                if dx == 0.0 && dy == 0.0 {
                    continue;
                } else if dx == 0.0 {
                    tx += 1;
                } else if dy == 0.0 {
                    ty += 1;
                } else if (dx > 0.0) == (dy > 0.0) {
                    conc += 1;
                } else {
                    disc += 1;
                }
            }
        }
        let num = (conc - disc) as f64;
        num / (((conc + disc + tx) as f64) * ((conc + disc + ty) as f64)).sqrt()
    }
}

#[test]
fn criterion_7_correlations_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for _ in 0..1000 {
        let len = rng.random_range(3..=60);
        // Coarse grids produce plenty of ties.
        let levels = rng.random_range(2..=12);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..len)
                .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
                .collect()
        };
        let x = draw(&mut rng);
        let y: Vec<f64> = if rng.random_bool(0.5) {
            draw(&mut rng)
        } else {
            x.iter().map(|v| v + 0.3 * rng.random::<f64>()).collect()
        };
        let pairs = [
            (stats::pearson(&x, &y), reference::pearson(&x, &y)),
            (stats::spearman(&x, &y), reference::spearman(&x, &y)),
            (stats::kendall_tau_b(&x, &y), reference::kendall_b(&x, &y)),
        ];
        for (got, want) in pairs {
            match got {
                Ok(v) => {
                    worst = worst.max((v - want).abs());
                    compared += 1;
                }
                // Undefined exactly when the reference divides by zero.
                Err(_) => assert!(!want.is_finite(), "undefined but reference = {want}"),
            }
        }
    }
    verdict(
        7,
        worst <= 1e-9 && compared > 2500,
        format!("{compared} coefficients compared, max abs error {worst:.2e}"),
    );
}

fn run_cli(args: &[&str], out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_quantrank"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&status.stderr)
    );
}

/// Report files (timing files excluded) and their bytes.
fn reports(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.file_name().unwrap().to_string_lossy().contains("timing"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn criterion_8_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let synth = tmp.path().join("synth");
    let synth_s = synth.to_str().unwrap();
    run_cli(
        &[
            "gen-synth",
            "--count",
            "8",
            "--per-class",
            "60",
            "--seed",
            "8",
        ],
        &synth,
    );
    let train = synth.join("src-00_train.csv");
    let val = synth.join("src-00_val.csv");
    let truth = synth.join("truth.csv");
    let (train, val, truth) = (
        train.to_str().unwrap(),
        val.to_str().unwrap(),
        truth.to_str().unwrap(),
    );

    let commands: Vec<(&str, Vec<&str>)> = vec![
        (
            "gen-synth",
            vec![
                "gen-synth",
                "--count",
                "5",
                "--per-class",
                "40",
                "--seed",
                "3",
            ],
        ),
        (
            "score",
            vec!["score", "--train", train, "--val", val, "--seed", "1"],
        ),
        (
            "rank",
            vec![
                "rank",
                "--sources",
                synth_s,
                "--truth",
                truth,
                "--threshold",
                "0.7",
                "--tl-frac",
                "0.5",
                "--iterations",
                "3",
                "--seed",
                "2",
            ],
        ),
        ("sweep", vec!["sweep", "--train", train, "--val", val]),
        (
            "simulate-theorem",
            vec![
                "simulate-theorem",
                "--n",
                "20",
                "--q",
                "2,10,100,1000",
                "--trials",
                "8",
            ],
        ),
        (
            "compare-search",
            vec!["compare-search", "--pairs", "6", "--samples", "80"],
        ),
    ];
    let mut identical = Vec::new();
    let mut differing = Vec::new();
    for (name, args) in &commands {
        let a = tmp.path().join(format!("{name}-a"));
        let b = tmp.path().join(format!("{name}-b"));
        run_cli(args, &a);
        run_cli(args, &b);
        let (ra, rb) = (reports(&a), reports(&b));
        if !ra.is_empty() && ra == rb {
            identical.push(*name);
        } else {
            differing.push(*name);
        }
    }
    verdict(
        8,
        differing.is_empty() && identical.len() == 6,
        format!("identical reruns: {identical:?}, differing: {differing:?}"),
    );
}

fn cpu_per_call(samples: usize, repeats: usize) -> f64 {
    let spec = SynthSpec {
        m: 2,
        n: 2,
        per_class: samples / 2,
        overlap: 0.3,
        family: Family::Bump,
        seed: 909,
    };
    let (train, val) = generate_split(&spec, 0.2).unwrap();
    let cfg = SearchConfig::default();
    let mut times: Vec<f64> = (0..repeats)
        .map(|_| cputime::measure(|| search::metric_ternary(&train, &val, &cfg).unwrap()).1)
        .collect();
    times.sort_by(f64::total_cmp);
    times[repeats / 2]
}

#[test]
fn criterion_9_metric_cost_stays_small_and_sublinear() {
    // warm up allocator and caches
    cpu_per_call(500, 3);
    let t100 = cpu_per_call(100, 41);
    let t500 = cpu_per_call(500, 41);
    let ratio = t500 / t100;
    verdict(
        9,
        t500 < 1.0 && ratio < 5.0,
        format!("median CPU per metric call: 100 samples {t100:.2e}s, 500 samples {t500:.2e}s, ratio {ratio:.2} (limit 5)"),
    );
}
