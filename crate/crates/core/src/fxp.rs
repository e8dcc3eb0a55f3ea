//! Bit-accurate signed two's-complement fixed-point arithmetic.
//!
//! Values carry a raw integer and a [`FxFormat`]; the real value is
//! `raw * 2^-frac_bits`. Multiplication produces the exact `2b`-fraction-bit
//! product and truncates it back to `b` bits by an arithmetic right shift,
//! which rounds toward negative infinity for both signs. Additions are exact
//! unless they overflow, in which case the [`OverflowPolicy`] decides.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A signed fixed-point format with `int_bits` integer bits (sign included)
/// and `frac_bits` fraction bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawFormat", into = "RawFormat")]
pub struct FxFormat {
    int_bits: u32,
    frac_bits: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFormat {
    int_bits: u32,
    frac_bits: u32,
}

impl TryFrom<RawFormat> for FxFormat {
    type Error = Error;
    fn try_from(r: RawFormat) -> Result<Self> {
        FxFormat::new(r.int_bits, r.frac_bits)
    }
}

impl From<FxFormat> for RawFormat {
    fn from(f: FxFormat) -> Self {
        RawFormat {
            int_bits: f.int_bits,
            frac_bits: f.frac_bits,
        }
    }
}

impl FxFormat {
    pub fn new(int_bits: u32, frac_bits: u32) -> Result<Self> {
        if int_bits < 1 || frac_bits < 1 {
            return Err(Error::InvalidFormat(format!(
                "Q{int_bits}.{frac_bits}: need at least one integer and one fraction bit"
            )));
        }
        if int_bits + frac_bits > 64 {
            return Err(Error::InvalidFormat(format!(
                "Q{int_bits}.{frac_bits}: total width exceeds 64 bits"
            )));
        }
        Ok(FxFormat {
            int_bits,
            frac_bits,
        })
    }

    /// Smallest format whose integer part holds `bound`: `ceil(log2(bound)) + 2`
    /// integer bits (sign plus one guard bit), at least one.
    pub fn for_bound(bound: f64, frac_bits: u32) -> Result<Self> {
        FxFormat::new(int_bits_for_bound(bound), frac_bits)
    }

    pub fn int_bits(&self) -> u32 {
        self.int_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn width(&self) -> u32 {
        self.int_bits + self.frac_bits
    }

    pub fn min_raw(&self) -> i64 {
        (-(1i128 << (self.width() - 1))) as i64
    }

    pub fn max_raw(&self) -> i64 {
        ((1i128 << (self.width() - 1)) - 1) as i64
    }

    /// Resolution `2^-b`.
    pub fn lsb(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn min_value(&self) -> f64 {
        self.min_raw() as f64 * self.lsb()
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.lsb()
    }

    /// Same fraction bits, different integer bits.
    pub fn with_int_bits(&self, int_bits: u32) -> Result<Self> {
        FxFormat::new(int_bits, self.frac_bits)
    }

    pub(crate) fn contains_raw(&self, raw: i128) -> bool {
        raw >= self.min_raw() as i128 && raw <= self.max_raw() as i128
    }
}

impl fmt::Display for FxFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.int_bits, self.frac_bits)
    }
}

pub fn int_bits_for_bound(bound: f64) -> u32 {
    if !(bound > 0.0) {
        return 1;
    }
    let bits = bound.log2().ceil() as i64 + 2;
    bits.max(1) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// Floor toward negative infinity at `2^-b` resolution.
    Truncate,
    /// Round half away from zero.
    Nearest,
    /// Ceiling toward positive infinity. Used to quantize lower bounds inward.
    Ceil,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowPolicy {
    #[default]
    Checked,
    Saturate,
    Wrap,
}

/// Brings an exact intermediate back into `fmt` according to `policy`.
#[inline]
pub(crate) fn fit(v: i128, fmt: FxFormat, policy: OverflowPolicy, signal: &'static str) -> Result<i64> {
    if fmt.contains_raw(v) {
        return Ok(v as i64);
    }
    match policy {
        OverflowPolicy::Checked => Err(Error::Overflow {
            signal,
            int_bits: fmt.int_bits,
            frac_bits: fmt.frac_bits,
        }),
        OverflowPolicy::Saturate => Ok(v.clamp(fmt.min_raw() as i128, fmt.max_raw() as i128) as i64),
        OverflowPolicy::Wrap => {
            let w = fmt.width();
            let modulus = 1i128 << w;
            let mut m = v.rem_euclid(modulus);
            if m >= 1i128 << (w - 1) {
                m -= modulus;
            }
            Ok(m as i64)
        }
    }
}

/// Exact product of two raws with `frac` fraction bits each, truncated to
/// `frac` bits.
#[inline]
pub(crate) fn mul_trunc_raw(a: i64, b: i64, frac: u32) -> i128 {
    (a as i128 * b as i128) >> frac
}

/// Per-product truncated dot product with every cumulative sum checked
/// against `acc`.
#[inline]
pub(crate) fn dot_raw(
    row: &[i64],
    col: &[i64],
    frac: u32,
    acc: FxFormat,
    policy: OverflowPolicy,
    signal: &'static str,
) -> Result<i64> {
    let mut s: i64 = 0;
    for (&a, &b) in row.iter().zip(col) {
        if a == 0 || b == 0 {
            continue;
        }
        s = fit(s as i128 + mul_trunc_raw(a, b, frac), acc, policy, signal)?;
    }
    Ok(s)
}

pub(crate) fn quantize_raw(x: f64, fmt: FxFormat, mode: Rounding) -> Result<i64> {
    let range_err = || Error::Range {
        value: x,
        int_bits: fmt.int_bits,
        frac_bits: fmt.frac_bits,
    };
    if !x.is_finite() {
        return Err(range_err());
    }
    let scaled = x * (fmt.frac_bits as f64).exp2();
    let r = match mode {
        Rounding::Truncate => scaled.floor(),
        Rounding::Nearest => scaled.round(),
        Rounding::Ceil => scaled.ceil(),
    };
    let half = ((fmt.width() - 1) as f64).exp2();
    if r < -half || r >= half {
        return Err(range_err());
    }
    Ok(r as i64)
}

/// A fixed-point scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FxValue {
    raw: i64,
    format: FxFormat,
}

impl FxValue {
    pub fn from_raw(raw: i64, format: FxFormat) -> Result<Self> {
        if !format.contains_raw(raw as i128) {
            return Err(Error::Range {
                value: raw as f64 * format.lsb(),
                int_bits: format.int_bits,
                frac_bits: format.frac_bits,
            });
        }
        Ok(FxValue { raw, format })
    }

    pub fn zero(format: FxFormat) -> Self {
        FxValue { raw: 0, format }
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn format(&self) -> FxFormat {
        self.format
    }

    pub fn to_f64(&self) -> f64 {
        self.raw as f64 * self.format.lsb()
    }

    /// Two's-complement raw bits, zero-padded to the format width.
    pub fn to_hex(&self) -> String {
        let w = self.format.width();
        let mask: u128 = if w == 128 { u128::MAX } else { (1u128 << w) - 1 };
        let bits = (self.raw as i128 as u128) & mask;
        let digits = w.div_ceil(4) as usize;
        format!("0x{bits:0digits$x}")
    }

    /// Exact decimal expansion (a `b`-fraction-bit number has at most `b`
    /// decimal fraction digits).
    pub fn to_decimal(&self) -> String {
        let b = self.format.frac_bits;
        let neg = self.raw < 0;
        let mag = (self.raw as i128).unsigned_abs();
        let int_part = mag >> b;
        let mut frac = mag & ((1u128 << b) - 1);
        let mut s = String::new();
        if neg {
            s.push('-');
        }
        s.push_str(&int_part.to_string());
        s.push('.');
        if frac == 0 {
            s.push('0');
            return s;
        }
        while frac != 0 {
            frac *= 10;
            let d = frac >> b;
            s.push(char::from(b'0' + d as u8));
            frac &= (1u128 << b) - 1;
        }
        s
    }
}

impl fmt::Display for FxValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.to_decimal(), self.to_hex())
    }
}

pub fn quantize(x: f64, fmt: FxFormat, mode: Rounding) -> Result<FxValue> {
    Ok(FxValue {
        raw: quantize_raw(x, fmt, mode)?,
        format: fmt,
    })
}

fn same_format(a: &FxValue, b: &FxValue) -> Result<()> {
    if a.format != b.format {
        return Err(Error::FormatMismatch(format!("{} vs {}", a.format, b.format)));
    }
    Ok(())
}

pub fn fx_add(a: FxValue, b: FxValue, policy: OverflowPolicy) -> Result<FxValue> {
    same_format(&a, &b)?;
    let raw = fit(a.raw as i128 + b.raw as i128, a.format, policy, "add")?;
    Ok(FxValue { raw, format: a.format })
}

pub fn fx_sub(a: FxValue, b: FxValue, policy: OverflowPolicy) -> Result<FxValue> {
    same_format(&a, &b)?;
    let raw = fit(a.raw as i128 - b.raw as i128, a.format, policy, "sub")?;
    Ok(FxValue { raw, format: a.format })
}

/// Truncating multiplication with the checked policy.
pub fn fx_mul_trunc(a: FxValue, b: FxValue) -> Result<FxValue> {
    fx_mul_trunc_with(a, b, OverflowPolicy::Checked)
}

pub fn fx_mul_trunc_with(a: FxValue, b: FxValue, policy: OverflowPolicy) -> Result<FxValue> {
    same_format(&a, &b)?;
    let raw = fit(
        mul_trunc_raw(a.raw, b.raw, a.format.frac_bits),
        a.format,
        policy,
        "mul",
    )?;
    Ok(FxValue { raw, format: a.format })
}

/// Dot product with one truncation per scalar product and an exact sum.
pub fn fx_dot(row: &FxVector, col: &FxVector, policy: OverflowPolicy) -> Result<FxValue> {
    if row.format != col.format {
        return Err(Error::FormatMismatch(format!("{} vs {}", row.format, col.format)));
    }
    if row.len() != col.len() {
        return Err(Error::Dimension(format!(
            "dot of lengths {} and {}",
            row.len(),
            col.len()
        )));
    }
    let fmt = row.format;
    let raw = dot_raw(&row.raw, &col.raw, fmt.frac_bits, fmt, policy, "dot")?;
    Ok(FxValue { raw, format: fmt })
}

/// A vector whose elements share one format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FxVector {
    format: FxFormat,
    raw: Vec<i64>,
}

impl FxVector {
    pub fn quantize(xs: &[f64], format: FxFormat, mode: Rounding) -> Result<Self> {
        let raw = xs
            .iter()
            .map(|&x| quantize_raw(x, format, mode))
            .collect::<Result<Vec<_>>>()?;
        Ok(FxVector { format, raw })
    }

    pub fn from_raw(raw: Vec<i64>, format: FxFormat) -> Result<Self> {
        if let Some(&bad) = raw.iter().find(|&&r| !format.contains_raw(r as i128)) {
            return Err(Error::Range {
                value: bad as f64 * format.lsb(),
                int_bits: format.int_bits,
                frac_bits: format.frac_bits,
            });
        }
        Ok(FxVector { format, raw })
    }

    pub fn zeros(len: usize, format: FxFormat) -> Self {
        FxVector {
            format,
            raw: vec![0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn format(&self) -> FxFormat {
        self.format
    }

    pub fn raw(&self) -> &[i64] {
        &self.raw
    }

    pub fn get(&self, i: usize) -> FxValue {
        FxValue {
            raw: self.raw[i],
            format: self.format,
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        let lsb = self.format.lsb();
        self.raw.iter().map(|&r| r as f64 * lsb).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.raw.iter().map(|r| r.unsigned_abs()).max().unwrap_or(0) as f64 * self.format.lsb()
    }
}

/// A dense row-major matrix whose elements share one format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FxMatrix {
    format: FxFormat,
    rows: usize,
    cols: usize,
    raw: Vec<i64>,
}

impl FxMatrix {
    pub fn quantize(m: &DMatrix<f64>, format: FxFormat, mode: Rounding) -> Result<Self> {
        let mut raw = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                raw.push(quantize_raw(m[(i, j)], format, mode)?);
            }
        }
        Ok(FxMatrix {
            format,
            rows: m.nrows(),
            cols: m.ncols(),
            raw,
        })
    }

    pub fn format(&self) -> FxFormat {
        self.format
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.raw[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> FxValue {
        FxValue {
            raw: self.raw[i * self.cols + j],
            format: self.format,
        }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let lsb = self.format.lsb();
        DMatrix::from_row_iterator(self.rows, self.cols, self.raw.iter().map(|&r| r as f64 * lsb))
    }

    /// Matrix-vector product: each row is an [`fx_dot`] whose cumulative sums
    /// must fit `acc`.
    pub fn matvec(
        &self,
        v: &FxVector,
        acc: FxFormat,
        policy: OverflowPolicy,
        signal: &'static str,
    ) -> Result<FxVector> {
        if v.len() != self.cols {
            return Err(Error::Dimension(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        if v.format.frac_bits != self.format.frac_bits || acc.frac_bits != self.format.frac_bits {
            return Err(Error::FormatMismatch(format!(
                "{} * {} -> {}",
                self.format, v.format, acc
            )));
        }
        let frac = self.format.frac_bits;
        let raw = (0..self.rows)
            .map(|i| dot_raw(self.row(i), &v.raw, frac, acc, policy, signal))
            .collect::<Result<Vec<_>>>()?;
        Ok(FxVector { format: acc, raw })
    }
}
