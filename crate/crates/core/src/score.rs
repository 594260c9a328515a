//! 256-bit block scores and mining targets.
//!
//! A score is the SHA-256 of an evaluation preimage interpreted as a
//! big-endian 256-bit unsigned integer. Scores are compared against a
//! mining target: a score strictly below the target wins leader election.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A 256-bit unsigned integer stored big-endian, ordered numerically.
///
/// Big-endian byte order makes numeric comparison equal to lexicographic
/// byte comparison, so the derived `Ord` is the numeric order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Score256(pub [u8; 32]);

impl Score256 {
    /// Zero.
    pub const ZERO: Score256 = Score256([0u8; 32]);
    /// One; the smallest admissible mining target.
    pub const ONE: Score256 = {
        let mut b = [0u8; 32];
        b[31] = 1;
        Score256(b)
    };
    /// 2^256 - 1, the largest representable score.
    pub const MAX: Score256 = Score256([0xff; 32]);

    /// 2^bit for `bit` in `0..=255`.
    pub fn pow2(bit: u32) -> Score256 {
        assert!(bit < 256, "pow2 bit out of range: {bit}");
        let mut b = [0u8; 32];
        b[31 - (bit / 8) as usize] = 1u8 << (bit % 8);
        Score256(b)
    }

    /// Target whose hit probability under uniform scores is 2^-k, i.e.
    /// 2^(256-k), for `k` in `1..=256` (k = 256 gives the minimal target 1).
    pub fn from_hit_exponent(k: u32) -> Score256 {
        assert!((1..=256).contains(&k), "hit exponent out of range: {k}");
        if k == 256 {
            Score256::ONE
        } else {
            Score256::pow2(256 - k)
        }
    }

    /// `self - 1`, saturating at zero.
    pub fn saturating_dec(&self) -> Score256 {
        let mut b = self.0;
        for i in (0..32).rev() {
            if b[i] > 0 {
                b[i] -= 1;
                break;
            }
            b[i] = 0xff;
        }
        if self.0 == [0u8; 32] {
            return Score256::ZERO;
        }
        Score256(b)
    }

    /// Approximate value as f64 (exact for values with <= 53 significant bits).
    pub fn to_f64(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, &b| acc * 256.0 + b as f64)
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(64);
        for b in &self.0 {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    pub fn from_hex(s: &str) -> Option<Score256> {
        if s.len() != 64 {
            return None;
        }
        let mut b = [0u8; 32];
        for i in 0..32 {
            b[i] = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
        }
        Some(Score256(b))
    }
}

impl fmt::Debug for Score256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Score256({})", self.to_hex())
    }
}

impl fmt::Display for Score256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Score256 {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Score256 {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Score256::from_hex(&s).ok_or_else(|| serde::de::Error::custom("invalid 256-bit hex score"))
    }
}
