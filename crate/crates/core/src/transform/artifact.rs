//! Bit-exact JSON form of the offline data. Fixed-point entries are stored
//! as raw integers `v * 2^b`; double-precision entries as their IEEE-754
//! bit patterns.

use serde::{Deserialize, Serialize};

use super::{AdmmOffline, FgmOffline};
use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Raw two's-complement integer with this many fraction bits.
    Fixed { frac_bits: u32 },
    /// `f64::to_bits` reinterpreted as `i64`.
    F64Bits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMatrix {
    pub rows: usize,
    pub cols: usize,
    pub encoding: Encoding,
    /// Row-major.
    pub data: Vec<i64>,
}

fn encode(v: f64, enc: Encoding) -> Result<i64> {
    match enc {
        Encoding::F64Bits => Ok(v.to_bits() as i64),
        Encoding::Fixed { frac_bits } => {
            let scaled = v * (frac_bits as f64).exp2();
            if scaled.fract() != 0.0 || scaled.abs() >= 9.2e18 {
                return Err(Error::Precision(format!("{v} is not on the 2^-{frac_bits} grid")));
            }
            Ok(scaled as i64)
        }
    }
}

fn decode(raw: i64, enc: Encoding) -> f64 {
    match enc {
        Encoding::F64Bits => f64::from_bits(raw as u64),
        Encoding::Fixed { frac_bits } => raw as f64 * (-(frac_bits as f64)).exp2(),
    }
}

impl RawMatrix {
    pub fn new(m: &Mat, enc: Encoding) -> Result<Self> {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(encode(m[(r, c)], enc)?);
            }
        }
        Ok(RawMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            encoding: enc,
            data,
        })
    }

    pub fn vector(v: &[f64], enc: Encoding) -> Result<Self> {
        Self::new(&Mat::from_column_slice(v.len(), 1, v), enc)
    }

    pub fn to_mat(&self) -> Mat {
        Mat::from_row_iterator(self.rows, self.cols, self.data.iter().map(|&r| decode(r, self.encoding)))
    }
}

fn encoding(frac_bits: Option<u32>) -> Encoding {
    match frac_bits {
        Some(frac_bits) => Encoding::Fixed { frac_bits },
        None => Encoding::F64Bits,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FgmArtifact {
    pub h_n: RawMatrix,
    pub phi_n: RawMatrix,
    pub beta: RawMatrix,
    pub z_min: RawMatrix,
    pub z_max: RawMatrix,
}

impl FgmArtifact {
    /// `z_min` and `z_max` are the bounds the solver actually uses.
    pub fn new(off: &FgmOffline, z_min: &[f64], z_max: &[f64]) -> Result<Self> {
        let enc = encoding(off.frac_bits);
        Ok(FgmArtifact {
            h_n: RawMatrix::new(&off.h_n, enc)?,
            phi_n: RawMatrix::new(&off.phi_n, enc)?,
            beta: RawMatrix::vector(&[off.beta], enc)?,
            z_min: RawMatrix::vector(z_min, enc)?,
            z_max: RawMatrix::vector(z_max, enc)?,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmmArtifact {
    pub rho: f64,
    pub m11: RawMatrix,
    pub m12: RawMatrix,
    pub f: RawMatrix,
    /// `z_scaled = scale .* z`, as `f64` bits.
    pub scale: RawMatrix,
}

impl AdmmArtifact {
    /// `exact` stores the unquantized inverse as `f64` bits.
    pub fn new(off: &AdmmOffline, f: &Mat, scale: &[f64], exact: bool) -> Result<Self> {
        let (m11, m12, f, enc) = if exact {
            (&off.m11, &off.m12, f, Encoding::F64Bits)
        } else {
            (&off.m11_hat, &off.m12_hat, &off.f_hat, Encoding::Fixed { frac_bits: off.frac_bits })
        };
        Ok(AdmmArtifact {
            rho: off.rho,
            m11: RawMatrix::new(m11, enc)?,
            m12: RawMatrix::new(m12, enc)?,
            f: RawMatrix::new(f, enc)?,
            scale: RawMatrix::vector(scale, Encoding::F64Bits)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_round_trip() {
        let m = Mat::from_row_slice(2, 2, &[0.5, -0.25, 1.75, -3.0]);
        let raw = RawMatrix::new(&m, Encoding::Fixed { frac_bits: 4 }).unwrap();
        assert_eq!(raw.data, vec![8, -4, 28, -48]);
        assert_eq!(raw.to_mat(), m);
        assert!(RawMatrix::new(&Mat::from_element(1, 1, 0.1), Encoding::Fixed { frac_bits: 4 }).is_err());
    }

    #[test]
    fn f64_bits_round_trip() {
        let m = Mat::from_row_slice(1, 3, &[0.1, -1e-300, f64::MAX]);
        let raw = RawMatrix::new(&m, Encoding::F64Bits).unwrap();
        let back: RawMatrix = serde_json::from_str(&serde_json::to_string(&raw).unwrap()).unwrap();
        assert_eq!(back.to_mat(), m);
    }
}
