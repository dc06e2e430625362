use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite string over {0, 1}.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn push(&mut self, b: bool) {
        self.0.push(b);
    }

    pub fn pop(&mut self) -> Option<bool> {
        self.0.pop()
    }

    pub fn with(&self, b: bool) -> Self {
        let mut out = self.clone();
        out.push(b);
        out
    }

    pub fn prefix(&self, len: usize) -> Self {
        Self(self.0[..len].to_vec())
    }

    pub fn is_prefix_of(&self, other: &BitString) -> bool {
        other.0.starts_with(&self.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    /// `2^-|q|`, the probability of `q` under fair coin flips.
    pub fn dyadic_weight(&self) -> f64 {
        (-(self.len() as f64)).exp2()
    }

    /// 32-bit big-endian bit count, then the bits most-significant first,
    /// zero-padded to a byte boundary.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.len().div_ceil(8));
        out.extend_from_slice(&(self.len() as u32).to_be_bytes());
        for chunk in self.0.chunks(8) {
            let mut byte = 0u8;
            for (i, &b) in chunk.iter().enumerate() {
                if b {
                    byte |= 0x80 >> i;
                }
            }
            out.push(byte);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Format("bitstream shorter than its 4-byte header".into()));
        }
        let n = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
        let body = &bytes[4..];
        if body.len() != n.div_ceil(8) {
            return Err(Error::Format(format!(
                "bitstream declares {n} bits but carries {} bytes",
                body.len()
            )));
        }
        let bits = (0..n).map(|i| body[i / 8] & (0x80 >> (i % 8)) != 0).collect();
        if !n.is_multiple_of(8) && body[n / 8] & (0xffu8 >> (n % 8)) != 0 {
            return Err(Error::Format("bitstream padding is not zero".into()));
        }
        Ok(Self(bits))
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("ε");
        }
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "ε" {
            return Ok(Self::new());
        }
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Format(format!("invalid bit {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl Serialize for BitString {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let text: String = self.0.iter().map(|&b| if b { '1' } else { '0' }).collect();
        serializer.serialize_str(&text)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s.is_empty() {
            return Ok(Self::new());
        }
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}
