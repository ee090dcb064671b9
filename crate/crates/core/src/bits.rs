//! Compact bitstrings.
//!
//! Convention used throughout the crate: position 0 is the leftmost
//! character of the printed string and the most significant bit of the
//! packed integer value. A register outcome string therefore reads in
//! qubit order, qubit 0 first.

use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

/// A bitstring of length ≤ 63 packed into a `u64`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    len: u8,
    bits: u64,
}

impl BitString {
    pub const MAX_LEN: usize = 63;

    /// The empty string.
    pub fn empty() -> Self {
        BitString { len: 0, bits: 0 }
    }

    /// Builds from an integer value; bit `len-1-j` of `value` becomes position `j`.
    pub fn from_value(value: u64, len: usize) -> Self {
        assert!(len <= Self::MAX_LEN, "bitstring too long");
        assert!(len == 64 || value < (1u64 << len), "value out of range for length");
        BitString { len: len as u8, bits: value }
    }

    pub fn zeros(len: usize) -> Self {
        Self::from_value(0, len)
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Packed integer value (position 0 is the MSB).
    pub fn value(&self) -> u64 {
        self.bits
    }

    pub fn get(&self, pos: usize) -> bool {
        assert!(pos < self.len(), "bit index out of range");
        (self.bits >> (self.len() - 1 - pos)) & 1 == 1
    }

    /// Appends a bit on the right.
    pub fn push(&self, bit: bool) -> Self {
        assert!(self.len() < Self::MAX_LEN);
        BitString { len: self.len + 1, bits: (self.bits << 1) | bit as u64 }
    }

    /// The first `i` positions.
    pub fn prefix(&self, i: usize) -> Self {
        assert!(i <= self.len());
        BitString { len: i as u8, bits: self.bits >> (self.len() - i) }
    }

    /// The positions after the first `i`.
    pub fn suffix(&self, i: usize) -> Self {
        assert!(i <= self.len());
        let k = self.len() - i;
        BitString { len: k as u8, bits: self.bits & ones(k) }
    }

    pub fn concat(&self, other: &BitString) -> Self {
        assert!(self.len() + other.len() <= Self::MAX_LEN);
        BitString {
            len: self.len + other.len,
            bits: (self.bits << other.len()) | other.bits,
        }
    }

    pub fn xor(&self, other: &BitString) -> Self {
        assert_eq!(self.len, other.len, "length mismatch in xor");
        BitString { len: self.len, bits: self.bits ^ other.bits }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |j| self.get(j))
    }

    /// All strings of the given length in numeric order.
    pub fn all(len: usize) -> impl Iterator<Item = BitString> {
        assert!(len < 40, "enumeration too large");
        (0u64..(1u64 << len)).map(move |v| BitString::from_value(v, len))
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        if s.len() > Self::MAX_LEN {
            return Err(format!("bitstring longer than {}", Self::MAX_LEN));
        }
        let mut out = BitString::empty();
        for c in s.chars() {
            match c {
                '0' => out = out.push(false),
                '1' => out = out.push(true),
                _ => return Err(format!("invalid bit character {c:?}")),
            }
        }
        Ok(out)
    }
}

fn ones(k: usize) -> u64 {
    if k == 0 {
        0
    } else {
        u64::MAX >> (64 - k)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            write!(f, "{}", if b { '1' } else { '0' })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{self}\"")
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        BitString::parse(&s).map_err(serde::de::Error::custom)
    }
}
