//! Pearson, Spearman and Kendall tau-b correlation coefficients.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "correlation inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::config(format!(
            "correlation needs at least 3 points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::config("correlation inputs must be finite"));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pearson_unchecked(x: &[f64], y: &[f64], name: &'static str) -> Result<f64> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(name));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson_unchecked(x, y, "pearson")
}

/// 1-based ranks with ties sharing the average of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson_unchecked(&average_ranks(x), &average_ranks(y), "spearman")
}

/// Counts pairs with equal values in a sorted slice: sum of t(t-1)/2.
fn tied_pairs<T, F: Fn(&T, &T) -> bool>(sorted: &[T], eq: F) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if eq(&w[0], &w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Stable merge sort on `y` returning the number of strict inversions.
fn sort_counting_swaps(v: &mut [(f64, f64)], buf: &mut Vec<(f64, f64)>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps =
        sort_counting_swaps(&mut v[..mid], buf) + sort_counting_swaps(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j].1 < v[i].1 {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall tau-b, computed in `O(n log n)`.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = pairs.len() as u64;
    let n0 = n * (n - 1) / 2;
    let ties_x = tied_pairs(&pairs, |a, b| a.0 == b.0);
    let ties_xy = tied_pairs(&pairs, |a, b| a.0 == b.0 && a.1 == b.1);
    let mut buf = Vec::with_capacity(pairs.len());
    let swaps = sort_counting_swaps(&mut pairs, &mut buf);
    let ties_y = tied_pairs(&pairs, |a, b| a.1 == b.1);
    if ties_x == n0 || ties_y == n0 {
        return Err(Error::UndefinedCorrelation("kendall"));
    }
    let numer = n0 as f64 - ties_x as f64 - ties_y as f64 + ties_xy as f64 - 2.0 * swaps as f64;
    let denom = ((n0 - ties_x) as f64).sqrt() * ((n0 - ties_y) as f64).sqrt();
    Ok((numer / denom).clamp(-1.0, 1.0))
}

/// All three coefficients; `None` where the coefficient is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
}

pub fn correlations(x: &[f64], y: &[f64]) -> Result<Correlations> {
    check_pair(x, y)?;
    let defined = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(Correlations {
        pearson: defined(pearson(x, y))?,
        spearman: defined(spearman(x, y))?,
        kendall: defined(kendall_tau_b(x, y))?,
    })
}

/// Orders floats descending; used for ranking scores.
pub(crate) fn desc(a: f64, b: f64) -> Ordering {
    b.total_cmp(&a)
}

#[cfg(test)]
mod tests {
    use super::*;

    const X: [f64; 8] = [1.0, 2.0, 2.0, 3.0, 5.0, 5.0, 5.0, 8.0];
    const Y: [f64; 8] = [2.0, 1.0, 4.0, 4.0, 3.0, 7.0, 7.0, 6.0];

    // Reference values from scipy.stats (pearsonr, spearmanr, kendalltau
    // with variant="b") on X and Y.
    #[test]
    fn matches_reference_values() {
        assert!((pearson(&X, &Y).unwrap() - 0.6978807055019931).abs() < 1e-12);
        assert!((spearman(&X, &Y).unwrap() - 0.6895607149652165).abs() < 1e-12);
        assert!((kendall_tau_b(&X, &Y).unwrap() - 0.5204164998665333).abs() < 1e-12);
    }

    #[test]
    fn identical_and_reversed() {
        let m = [0.3, 0.9, 0.1, 0.5, 0.7];
        let c = correlations(&m, &m).unwrap();
        for v in [c.pearson, c.spearman, c.kendall] {
            assert!((v.unwrap() - 1.0).abs() < 1e-12);
        }
        let r: Vec<f64> = m.iter().map(|v| 2.0 - v).collect();
        let c = correlations(&m, &r).unwrap();
        assert!((c.pearson.unwrap() + 1.0).abs() < 1e-12);
        assert!((c.spearman.unwrap() + 1.0).abs() < 1e-12);
        assert!((c.kendall.unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_input_is_undefined() {
        let x = [1.0, 2.0, 3.0];
        let c = [0.5, 0.5, 0.5];
        assert!(matches!(
            pearson(&x, &c),
            Err(Error::UndefinedCorrelation("pearson"))
        ));
        assert!(matches!(
            spearman(&c, &x),
            Err(Error::UndefinedCorrelation("spearman"))
        ));
        assert!(matches!(
            kendall_tau_b(&x, &c),
            Err(Error::UndefinedCorrelation("kendall"))
        ));
        let all = correlations(&x, &c).unwrap();
        assert_eq!(all.pearson, None);
    }

    #[test]
    fn short_or_mismatched_input() {
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(matches!(
            kendall_tau_b(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 10.0, 5.0]),
            vec![2.5, 4.0, 2.5, 1.0]
        );
    }
}
