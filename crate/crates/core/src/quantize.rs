//! Quantization of softmax vectors onto a uniform grid over the simplex.
//!
//! A vector `p = (p_1, .., p_m)` is identified by the `m - 1` digits
//! `floor(p_j * q)` for `j = 2..m`; `p_1` is implied by the others. A digit
//! equal to `q` (only possible when `p_j = 1`) is clamped to `q - 1`, which
//! places every vertex of the simplex in its own cell while keeping all
//! digits in range.
//!
//! Digits are computed exactly from the binary representation of `p_j`, so
//! refined grids nest: the cell at level `q` is always the parent of the
//! cell at level `k * q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute deviation of the entry sum from 1 that is silently renormalized.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// A probability vector over `m >= 2` source classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SoftmaxVector(Vec<f64>);

impl SoftmaxVector {
    /// Validates `probs`, renormalizing when the sum is within
    /// [`SUM_TOLERANCE`] of 1.
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::TooFewClasses(probs.len()));
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(Error::EntryOutOfRange { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::NotNormalized { sum });
        }
        if sum != 1.0 {
            for v in probs.iter_mut() {
                *v = (*v / sum).min(1.0);
            }
        }
        Ok(SoftmaxVector(probs))
    }

    /// Like [`SoftmaxVector::new`], but keeps the entries as given when the
    /// sum is off by no more than `rounding` (the error budget of a decimal
    /// serialization), so written vectors parse back to the same values.
    pub fn from_rounded(probs: Vec<f64>, rounding: f64) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > rounding {
            return Self::new(probs);
        }
        if probs.len() < 2 {
            return Err(Error::TooFewClasses(probs.len()));
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(Error::EntryOutOfRange { index, value });
            }
        }
        Ok(SoftmaxVector(probs))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for SoftmaxVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Number of bins per softmax coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct QuantizationLevel(u64);

impl QuantizationLevel {
    pub fn new(q: u64) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidLevel(q));
        }
        Ok(QuantizationLevel(q))
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

impl TryFrom<u64> for QuantizationLevel {
    type Error = Error;

    fn try_from(q: u64) -> Result<Self> {
        QuantizationLevel::new(q)
    }
}

impl From<QuantizationLevel> for u64 {
    fn from(q: QuantizationLevel) -> u64 {
        q.0
    }
}

/// Identity of one quantization cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BinKey {
    level: u64,
    digits: Box<[u64]>,
}

impl BinKey {
    /// Builds a key from raw digits; every digit must lie in `[0, q - 1]`.
    pub fn from_digits(level: QuantizationLevel, digits: Vec<u64>) -> Result<Self> {
        if digits.is_empty() {
            return Err(Error::TooFewClasses(digits.len() + 1));
        }
        if let Some(&d) = digits.iter().find(|&&d| d >= level.get()) {
            return Err(Error::Domain(format!(
                "digit {d} outside [0, {}]",
                level.get() - 1
            )));
        }
        Ok(BinKey {
            level: level.get(),
            digits: digits.into_boxed_slice(),
        })
    }

    pub fn level(&self) -> u64 {
        self.level
    }

    /// Source class count `m`.
    pub fn m(&self) -> usize {
        self.digits.len() + 1
    }

    /// Digits for coordinates `2..=m`, in order.
    pub fn digits(&self) -> &[u64] {
        &self.digits
    }

    /// 1-based flattened index `1 + sum_j digit_j * q^(j-2)`. Display only.
    pub fn flat_index(&self) -> Result<u128> {
        let q = self.level as u128;
        let overflow = || Error::IndexNotRepresentable {
            q: self.level,
            m: self.m(),
        };
        let exponent = u32::try_from(self.digits.len()).map_err(|_| overflow())?;
        q.checked_pow(exponent).ok_or_else(overflow)?;
        let mut index: u128 = 0;
        let mut place: u128 = 1;
        for (j, &d) in self.digits.iter().enumerate() {
            index += d as u128 * place;
            if j + 1 < self.digits.len() {
                place *= q;
            }
        }
        Ok(index + 1)
    }
}

/// `floor(p * q)` computed without rounding error for `p` in `[0, 1]`.
pub fn exact_floor_mul(p: f64, q: u64) -> u64 {
    debug_assert!((0.0..=1.0).contains(&p));
    if p <= 0.0 {
        return 0;
    }
    let bits = p.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, exp) = if raw_exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), raw_exp - 1075)
    };
    let product = mantissa as u128 * q as u128;
    // p <= 1 means exp <= -52, so this is always a right shift.
    let shift = (-exp) as u32;
    if shift >= 128 {
        0
    } else {
        (product >> shift) as u64
    }
}

/// Digit of a single coordinate at level `q`.
#[inline]
pub fn digit(p: f64, q: u64) -> u64 {
    exact_floor_mul(p, q).min(q - 1)
}

/// Maps a softmax vector to the cell that contains it at level `q`.
pub fn quantize(p: &SoftmaxVector, q: QuantizationLevel) -> BinKey {
    let q = q.get();
    let digits: Box<[u64]> = p.as_slice()[1..].iter().map(|&pj| digit(pj, q)).collect();
    BinKey { level: q, digits }
}

/// Same as [`quantize`] for a raw slice that has already been validated.
pub(crate) fn quantize_slice(p: &[f64], q: u64) -> BinKey {
    let digits: Box<[u64]> = p[1..].iter().map(|&pj| digit(pj, q)).collect();
    BinKey { level: q, digits }
}

/// Validates a raw vector and quantizes it.
pub fn quantize_raw(probs: &[f64], q: u64) -> Result<BinKey> {
    let p = SoftmaxVector::new(probs.to_vec())?;
    Ok(quantize(&p, QuantizationLevel::new(q)?))
}
