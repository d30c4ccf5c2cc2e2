//! Sparse exact probability tables over packed visible states.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::state::SampleSet;
use crate::sum::{kahan, KahanSum};

/// Probability table keyed by packed state words, sorted ascending.
/// Zero-probability states are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDistribution {
    m: usize,
    entries: Vec<(u64, f64)>,
}

/// Normalization slack accepted by [`TabulatedDistribution::new`].
pub const NORM_TOL: f64 = 1e-10;

impl TabulatedDistribution {
    /// Builds a table from `(state, probability)` pairs. Duplicate states are
    /// summed, non-positive entries dropped, and the total must be 1 within
    /// [`NORM_TOL`].
    pub fn new(m: usize, entries: Vec<(u64, f64)>) -> Result<Self> {
        let d = Self::from_unnormalized_inner(m, entries)?;
        let total = d.total();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(d)
    }

    /// Like [`TabulatedDistribution::new`] but rescales the weights to sum to one.
    pub fn from_weights(m: usize, entries: Vec<(u64, f64)>) -> Result<Self> {
        let mut d = Self::from_unnormalized_inner(m, entries)?;
        let total = d.total();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::invalid("weights must have a positive finite sum"));
        }
        d.entries.iter_mut().for_each(|e| e.1 /= total);
        Ok(d)
    }

    fn from_unnormalized_inner(m: usize, mut entries: Vec<(u64, f64)>) -> Result<Self> {
        if m == 0 || m > 63 {
            return Err(Error::invalid(format!("tabulated states need 1..=63 units, got {m}")));
        }
        let limit = 1u64 << m;
        if let Some(&(s, _)) = entries.iter().find(|e| e.0 >= limit) {
            return Err(Error::invalid(format!("state {s} has bits beyond unit {m}")));
        }
        if entries.iter().any(|e| !e.1.is_finite() || e.1 < 0.0) {
            return Err(Error::invalid("probabilities must be finite and nonnegative"));
        }
        entries.sort_unstable_by_key(|e| e.0);
        entries.dedup_by(|next, kept| {
            if next.0 == kept.0 {
                kept.1 += next.1;
                true
            } else {
                false
            }
        });
        entries.retain(|e| e.1 > 0.0);
        Ok(Self { m, entries })
    }

    /// Wraps already sorted, merged, positive entries without checks beyond
    /// debug assertions.
    pub fn from_sorted_unchecked(m: usize, entries: Vec<(u64, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(entries.iter().all(|e| e.1 > 0.0));
        Self { m, entries }
    }

    /// Dense vector of length `2^m` (only for small `m`).
    pub fn from_dense(m: usize, probs: &[f64]) -> Result<Self> {
        Error::check_dim("dense table", 1usize << m, probs.len())?;
        Self::new(
            m,
            probs
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(s, &p)| (s as u64, p))
                .collect(),
        )
    }

    /// Empirical distribution of a sample set (`m <= 63`).
    pub fn empirical(samples: &SampleSet) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("empirical distribution of an empty sample set"));
        }
        let n = samples.len() as f64;
        let mut words = samples.words();
        words.sort_unstable();
        let mut entries: Vec<(u64, f64)> = Vec::new();
        let mut k = 0;
        while k < words.len() {
            let mut e = k;
            while e < words.len() && words[e] == words[k] {
                e += 1;
            }
            entries.push((words[k], (e - k) as f64 / n));
            k = e;
        }
        Ok(Self::from_sorted_unchecked(samples.m(), entries))
    }

    /// Uniform distribution over all `2^m` states.
    pub fn uniform(m: usize) -> Result<Self> {
        let p = 0.5f64.powi(m as i32);
        Self::new(m, (0..1u64 << m).map(|s| (s, p)).collect())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<(u64, f64)> {
        self.entries
    }

    /// Probability of a packed state (0 outside the support).
    pub fn prob(&self, state: u64) -> f64 {
        match self.entries.binary_search_by_key(&state, |e| e.0) {
            Ok(k) => self.entries[k].1,
            Err(_) => 0.0,
        }
    }

    /// Compensated total mass.
    pub fn total(&self) -> f64 {
        kahan(self.entries.iter().map(|e| e.1))
    }

    /// Single-unit marginals `p_i(x_i = 1)`.
    pub fn marginals(&self) -> Vec<f64> {
        let mut acc = vec![KahanSum::new(); self.m];
        for &(s, p) in &self.entries {
            let mut bits = s;
            while bits != 0 {
                let i = bits.trailing_zeros() as usize;
                acc[i].add(p);
                bits &= bits - 1;
            }
        }
        acc.iter().map(|a| a.value()).collect()
    }

    /// Dense vector over all `2^m` states.
    pub fn to_dense(&self) -> Vec<f64> {
        assert!(self.m <= 30, "dense table of 2^{} states", self.m);
        let mut v = vec![0.0; 1usize << self.m];
        for &(s, p) in &self.entries {
            v[s as usize] = p;
        }
        v
    }

    /// Total variation distance `½ Σ |p - q|`.
    pub fn total_variation(&self, other: &Self) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j) = (0, 0);
        let mut acc = KahanSum::new();
        while i < a.len() || j < b.len() {
            let sa = a.get(i).map(|e| e.0).unwrap_or(u64::MAX);
            let sb = b.get(j).map(|e| e.0).unwrap_or(u64::MAX);
            if sa == sb {
                acc.add((a[i].1 - b[j].1).abs());
                i += 1;
                j += 1;
            } else if sa < sb {
                acc.add(a[i].1);
                i += 1;
            } else {
                acc.add(b[j].1);
                j += 1;
            }
        }
        0.5 * acc.value()
    }

    /// Text form: a header line `# m=<m> support=<k>` followed by one
    /// `<state-word> <probability>` line per entry in ascending state order.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# m={} support={}", self.m, self.entries.len())?;
        for &(s, p) in &self.entries {
            writeln!(out, "{s} {p:e}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::parse("empty table"))??;
        let m = header
            .split_whitespace()
            .find_map(|t| t.strip_prefix("m="))
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| Error::parse("missing m= in table header"))?;
        let mut entries = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let s = it.next().and_then(|v| v.parse::<u64>().ok());
            let p = it.next().and_then(|v| v.parse::<f64>().ok());
            match (s, p) {
                (Some(s), Some(p)) => entries.push((s, p)),
                _ => return Err(Error::parse(format!("bad table line {line:?}"))),
            }
        }
        Self::new(m, entries)
    }

    /// Binary form: magic `RBMTAB01`, `m` as u32, entry count as u64, then
    /// `(state u64, probability f64)` pairs, all little-endian.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(TABLE_MAGIC)?;
        out.write_all(&(self.m as u32).to_le_bytes())?;
        out.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for &(s, p) in &self.entries {
            out.write_all(&s.to_le_bytes())?;
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != TABLE_MAGIC {
            return Err(Error::parse("not a binary table (bad magic)"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b4)?;
        let m = u32::from_le_bytes(b4) as usize;
        input.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            input.read_exact(&mut b8)?;
            let s = u64::from_le_bytes(b8);
            input.read_exact(&mut b8)?;
            entries.push((s, f64::from_le_bytes(b8)));
        }
        Self::new(m, entries)
    }

    /// Stable 64-bit FNV-1a checksum of the binary form.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(&(self.m as u32).to_le_bytes());
        for &(s, p) in &self.entries {
            eat(&s.to_le_bytes());
            eat(&p.to_le_bytes());
        }
        h
    }

    /// Exact i.i.d. samples via an alias table.
    pub fn sample(&self, count: usize, rng: &mut Rng) -> SampleSet {
        let mut out = SampleSet::with_capacity(self.m, count);
        if count == 0 {
            return out;
        }
        let alias = AliasTable::new(self.entries.iter().map(|e| e.1));
        for _ in 0..count {
            out.push_word(self.entries[alias.draw(rng)].0);
        }
        out
    }
}

const TABLE_MAGIC: &[u8; 8] = b"RBMTAB01";

/// Walker/Vose alias table for O(1) categorical draws.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    pub fn new<I: IntoIterator<Item = f64>>(weights: I) -> Self {
        let w: Vec<f64> = weights.into_iter().collect();
        let k = w.len();
        assert!(k > 0 && k <= u32::MAX as usize);
        let total = kahan(w.iter().copied());
        let mut prob: Vec<f64> = w.iter().map(|v| v * k as f64 / total).collect();
        let mut alias = vec![0u32; k];
        let mut small: Vec<u32> = Vec::new();
        let mut large: Vec<u32> = Vec::new();
        for (i, &p) in prob.iter().enumerate() {
            if p < 1.0 {
                small.push(i as u32);
            } else {
                large.push(i as u32);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            alias[s as usize] = l;
            prob[l as usize] -= 1.0 - prob[s as usize];
            if prob[l as usize] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        for i in large.into_iter().chain(small) {
            prob[i as usize] = 1.0;
        }
        Self { prob, alias }
    }

    #[inline]
    pub fn draw(&self, rng: &mut Rng) -> usize {
        let i = rng::index(rng, self.prob.len());
        if rng::uniform(rng) < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn sample_dist() -> TabulatedDistribution {
        TabulatedDistribution::new(3, vec![(5, 0.5), (1, 0.25), (7, 0.125), (0, 0.125)]).unwrap()
    }

    #[test]
    fn construction_sorts_and_merges() {
        let d = TabulatedDistribution::new(2, vec![(3, 0.25), (1, 0.5), (3, 0.25), (2, 0.0)]).unwrap();
        assert_eq!(d.entries(), &[(1, 0.5), (3, 0.5)]);
        assert!(TabulatedDistribution::new(2, vec![(1, 0.5)]).is_err());
        assert!(TabulatedDistribution::new(2, vec![(4, 1.0)]).is_err());
    }

    #[test]
    fn marginals_and_lookup() {
        let d = sample_dist();
        assert_eq!(d.prob(5), 0.5);
        assert_eq!(d.prob(6), 0.0);
        let mg = d.marginals();
        assert!((mg[0] - 0.875).abs() < 1e-15);
        assert!((mg[1] - 0.125).abs() < 1e-15);
        assert!((mg[2] - 0.625).abs() < 1e-15);
    }

    #[test]
    fn text_and_binary_roundtrip() {
        let d = TabulatedDistribution::from_weights(4, vec![(3, 1.0 / 3.0), (9, 0.1), (15, 2.0)]).unwrap();
        let mut t = Vec::new();
        d.write_text(&mut t).unwrap();
        assert_eq!(TabulatedDistribution::read_text(&t[..]).unwrap(), d);
        let mut b = Vec::new();
        d.write_binary(&mut b).unwrap();
        assert_eq!(TabulatedDistribution::read_binary(&b[..]).unwrap(), d);
    }

    #[test]
    fn sampling_matches_table() {
        let d = sample_dist();
        let s = d.sample(200_000, &mut stream(11, 0));
        let e = TabulatedDistribution::empirical(&s).unwrap();
        assert!(d.total_variation(&e) < 0.005);
        assert!(d.sample(0, &mut stream(1, 1)).is_empty());
        let point = TabulatedDistribution::new(3, vec![(6, 1.0)]).unwrap();
        assert!(point.sample(50, &mut stream(2, 0)).words().iter().all(|&w| w == 6));
    }

    #[test]
    fn total_variation_of_disjoint_tables_is_one() {
        let a = TabulatedDistribution::new(2, vec![(0, 1.0)]).unwrap();
        let b = TabulatedDistribution::new(2, vec![(3, 1.0)]).unwrap();
        assert!((a.total_variation(&b) - 1.0).abs() < 1e-15);
        assert_eq!(a.total_variation(&a), 0.0);
    }
}
