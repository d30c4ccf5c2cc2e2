//! Binary configurations and sample multisets.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// A fixed-length vector of bits stored one byte per unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinaryState {
    bits: Vec<u8>,
}

impl BinaryState {
    pub fn zeros(len: usize) -> Self {
        Self { bits: vec![0; len] }
    }

    pub fn ones(len: usize) -> Self {
        Self { bits: vec![1; len] }
    }

    /// Builds a state from 0/1 values; any other value is rejected.
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if let Some(v) = bits.iter().find(|&&v| v > 1) {
            return Err(Error::invalid(format!("bit value {v} is not 0 or 1")));
        }
        Ok(Self { bits })
    }

    /// Unpacks the low `len` bits of `word` (bit `i` is unit `i`).
    pub fn from_word(word: u64, len: usize) -> Self {
        Self {
            bits: (0..len).map(|i| ((word >> i) & 1) as u8).collect(),
        }
    }

    /// Packs into a word. Panics if longer than 64 units.
    pub fn to_word(&self) -> u64 {
        pack(&self.bits)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [u8] {
        &mut self.bits
    }

    /// Complemented state `1 - x`.
    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| 1 - b).collect(),
        }
    }
}

impl std::ops::Deref for BinaryState {
    type Target = [u8];
    fn deref(&self) -> &[u8] {
        &self.bits
    }
}

/// Packs a 0/1 slice into a word.
#[inline]
pub fn pack(bits: &[u8]) -> u64 {
    assert!(bits.len() <= 64, "state of {} units does not fit a word", bits.len());
    bits.iter().enumerate().fold(0u64, |w, (i, &b)| w | ((b as u64) << i))
}

/// Unpacks the low `out.len()` bits of `word` into `out`.
#[inline]
pub fn unpack_into(word: u64, out: &mut [u8]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = ((word >> i) & 1) as u8;
    }
}

/// Multiset of visible configurations, stored row-major with one byte per unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    m: usize,
    data: Vec<u8>,
}

impl SampleSet {
    pub fn new(m: usize) -> Self {
        Self { m, data: Vec::new() }
    }

    pub fn with_capacity(m: usize, count: usize) -> Self {
        Self {
            m,
            data: Vec::with_capacity(m * count),
        }
    }

    /// Wraps a row-major buffer of 0/1 values.
    pub fn from_flat(m: usize, data: Vec<u8>) -> Result<Self> {
        if m == 0 || data.len() % m != 0 {
            return Err(Error::invalid(format!(
                "buffer of {} bytes is not a whole number of rows of {m}",
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::invalid("sample values must be 0 or 1"));
        }
        Ok(Self { m, data })
    }

    pub fn from_words(m: usize, words: &[u64]) -> Self {
        let mut s = Self::with_capacity(m, words.len());
        for &w in words {
            s.push_word(w);
        }
        s
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        if self.m == 0 {
            0
        } else {
            self.data.len() / self.m
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, row: &[u8]) {
        assert_eq!(row.len(), self.m, "row length does not match sample width");
        self.data.extend_from_slice(row);
    }

    pub fn push_word(&mut self, word: u64) {
        let start = self.data.len();
        self.data.resize(start + self.m, 0);
        unpack_into(word, &mut self.data[start..]);
    }

    pub fn row(&self, k: usize) -> &[u8] {
        &self.data[k * self.m..(k + 1) * self.m]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u8]> + '_ {
        self.data.chunks_exact(self.m.max(1))
    }

    pub fn flat(&self) -> &[u8] {
        &self.data
    }

    /// Mutable flat storage; entries must stay 0 or 1.
    pub fn flat_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    /// Packed rows; requires `m <= 64`.
    pub fn words(&self) -> Vec<u64> {
        self.rows().map(pack).collect()
    }

    /// Subset selected by row indices, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut s = Self::with_capacity(self.m, idx.len());
        for &k in idx {
            s.push(self.row(k));
        }
        s
    }

    /// Per-unit mean activation.
    pub fn unit_means(&self) -> Vec<f64> {
        let mut acc = vec![0u64; self.m];
        for r in self.rows() {
            for (a, &b) in acc.iter_mut().zip(r) {
                *a += b as u64;
            }
        }
        let n = self.len().max(1) as f64;
        acc.into_iter().map(|c| c as f64 / n).collect()
    }

    /// Distinct rows in lexicographic order with their multiplicities.
    pub fn counts(&self) -> Vec<(&[u8], usize)> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.row(a).cmp(self.row(b)));
        let mut out: Vec<(&[u8], usize)> = Vec::new();
        for k in idx {
            let r = self.row(k);
            match out.last_mut() {
                Some((last, c)) if *last == r => *c += 1,
                _ => out.push((r, 1)),
            }
        }
        out
    }

    /// Writes the packed dump: magic, `m`, count and seed as little-endian
    /// integers, then each row as `ceil(m/8)` bytes with unit `i` in bit
    /// `i % 8` of byte `i / 8`.
    pub fn write_packed<W: Write>(&self, mut out: W, seed: u64) -> Result<()> {
        out.write_all(SAMPLE_MAGIC)?;
        out.write_all(&(self.m as u32).to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        out.write_all(&seed.to_le_bytes())?;
        let bytes = self.m.div_ceil(8);
        let mut buf = vec![0u8; bytes];
        for r in self.rows() {
            buf.iter_mut().for_each(|b| *b = 0);
            for (i, &v) in r.iter().enumerate() {
                buf[i / 8] |= v << (i % 8);
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    /// Reads a dump written by [`SampleSet::write_packed`]; returns the seed too.
    pub fn read_packed<R: Read>(mut input: R) -> Result<(Self, u64)> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != SAMPLE_MAGIC {
            return Err(Error::parse("not a sample dump (bad magic)"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b4)?;
        let m = u32::from_le_bytes(b4) as usize;
        input.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        if m == 0 {
            return Err(Error::parse("sample dump with zero width"));
        }
        let bytes = m.div_ceil(8);
        let mut buf = vec![0u8; bytes];
        let mut s = Self::with_capacity(m, count);
        let mut row = vec![0u8; m];
        for _ in 0..count {
            input.read_exact(&mut buf)?;
            for (i, v) in row.iter_mut().enumerate() {
                *v = (buf[i / 8] >> (i % 8)) & 1;
            }
            s.push(&row);
        }
        Ok((s, seed))
    }
}

const SAMPLE_MAGIC: &[u8; 8] = b"RBMSMP01";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_roundtrip() {
        let s = BinaryState::from_word(0b1011, 6);
        assert_eq!(s.bits(), &[1, 1, 0, 1, 0, 0]);
        assert_eq!(s.to_word(), 0b1011);
        assert_eq!(s.complement().to_word(), 0b110100);
    }

    #[test]
    fn rejects_non_binary() {
        assert!(BinaryState::from_bits(vec![0, 2]).is_err());
        assert!(SampleSet::from_flat(2, vec![0, 1, 1]).is_err());
    }

    #[test]
    fn counts_merge_duplicates() {
        let s = SampleSet::from_words(3, &[5, 1, 5, 5, 2]);
        let c = s.counts();
        let got: Vec<(u64, usize)> = c.iter().map(|(r, k)| (pack(r), *k)).collect();
        assert_eq!(got.len(), 3);
        assert!(got.contains(&(5, 3)) && got.contains(&(1, 1)) && got.contains(&(2, 1)));
    }

    #[test]
    fn packed_dump_roundtrip() {
        let s = SampleSet::from_words(11, &[0, 2047, 1234, 7]);
        let mut buf = Vec::new();
        s.write_packed(&mut buf, 99).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 8 + 8 + 4 * 2);
        let (back, seed) = SampleSet::read_packed(&buf[..]).unwrap();
        assert_eq!(back, s);
        assert_eq!(seed, 99);
    }
}
