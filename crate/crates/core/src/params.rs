//! Model parameter vectors and 32-byte digests.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;

/// SHA-256 digest used to identify parameter vectors, blocks and messages.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest32(pub [u8; 32]);

impl Digest32 {
    pub const ZERO: Digest32 = Digest32([0u8; 32]);

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(64);
        for b in &self.0 {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    pub fn from_hex(s: &str) -> Option<Digest32> {
        if s.len() != 64 {
            return None;
        }
        let mut b = [0u8; 32];
        for i in 0..32 {
            b[i] = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
        }
        Some(Digest32(b))
    }

    pub fn of_bytes(bytes: &[u8]) -> Digest32 {
        let mut h = Sha256::new();
        h.update(bytes);
        Digest32(h.finalize().into())
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest32({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest32 {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest32 {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest32::from_hex(&s).ok_or_else(|| serde::de::Error::custom("invalid 32-byte hex digest"))
    }
}

/// The parameter point being optimized.
///
/// Every element is finite and the dimension is fixed for the lifetime of a
/// run. Identity comparisons in the protocols go through [`ParamVector::digest`],
/// which is bit-exact (unlike `f64` equality, which conflates 0.0 and -0.0).
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self, Error> {
        if values.is_empty() {
            return Err(Error::InvalidParams("parameter vector must be non-empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite parameter at index {i}")));
        }
        Ok(ParamVector { values })
    }

    pub fn filled(value: f64, dim: usize) -> Result<Self, Error> {
        ParamVector::new(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Little-endian IEEE-754 concatenation of all elements.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        out
    }

    /// SHA-256 over the little-endian binary64 concatenation of the elements.
    pub fn digest(&self) -> Digest32 {
        Digest32::of_bytes(&self.to_bytes())
    }

    /// `self + scale * delta`, elementwise; fails if a result is non-finite.
    pub fn add_scaled(&self, delta: &[f64], scale: f64) -> Result<ParamVector, Error> {
        debug_assert_eq!(delta.len(), self.values.len());
        let mut out = Vec::with_capacity(self.values.len());
        for (v, d) in self.values.iter().zip(delta.iter()) {
            let x = v + scale * d;
            if !x.is_finite() {
                return Err(Error::LandscapeOverflow);
            }
            out.push(x);
        }
        Ok(ParamVector { values: out })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(ParamVector::new(vec![]).is_err());
        assert!(ParamVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ParamVector::new(vec![f64::INFINITY]).is_err());
        assert!(ParamVector::new(vec![0.0, -1.5]).is_ok());
    }

    #[test]
    fn digest_is_bit_sensitive() {
        let a = ParamVector::new(vec![0.0, 1.0]).unwrap();
        let b = ParamVector::new(vec![-0.0, 1.0]).unwrap();
        // 0.0 == -0.0 under f64 comparison but the digests must differ.
        assert_eq!(a.as_slice()[0], b.as_slice()[0]);
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.clone().digest());
    }

    #[test]
    fn add_scaled_detects_overflow() {
        let a = ParamVector::new(vec![f64::MAX]).unwrap();
        assert!(a.add_scaled(&[f64::MAX], 1.0).is_err());
        let b = ParamVector::new(vec![1.0, 2.0]).unwrap();
        let c = b.add_scaled(&[10.0, -10.0], 0.5).unwrap();
        assert_eq!(c.as_slice(), &[6.0, -3.0]);
    }

    #[test]
    fn hex_digest_roundtrip() {
        let d = ParamVector::new(vec![3.0, 4.0]).unwrap().digest();
        assert_eq!(Digest32::from_hex(&d.to_hex()), Some(d));
    }
}
