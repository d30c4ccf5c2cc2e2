//! Noisy digit-pattern images on a 7×5 frame (7 rows, 5 columns, open
//! boundaries).
//!
//! A digit is drawn uniformly, then a placement uniformly among the admissible
//! positions of its glyph, then every cell outside the glyph and its ring is
//! white with probability `q`.

use rbm_core::{Error, Result, TabulatedDistribution};

use crate::patterns::{push_images, Frame, PatternSpec, Placement};

pub const DIGIT_ROWS: usize = 7;
pub const DIGIT_COLS: usize = 5;

const GLYPH_TEXT: &str = include_str!("../data/digits.txt");

/// White cells `(row, col)` of each digit's glyph, parsed from the embedded table.
pub fn glyphs() -> Vec<Vec<(isize, isize)>> {
    parse_glyphs(GLYPH_TEXT).expect("embedded glyph table is well formed")
}

/// Parses the glyph table format of `data/digits.txt`.
pub fn parse_glyphs(text: &str) -> Result<Vec<Vec<(isize, isize)>>> {
    let mut out: Vec<Vec<(isize, isize)>> = Vec::new();
    let mut row = 0isize;
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with("# ") {
            continue;
        }
        if let Ok(d) = line.parse::<usize>() {
            if d != out.len() {
                return Err(Error::parse(format!("digit {d} out of order")));
            }
            out.push(Vec::new());
            row = 0;
            continue;
        }
        let glyph = out
            .last_mut()
            .ok_or_else(|| Error::parse("glyph row before any digit label"))?;
        for (c, ch) in line.chars().enumerate() {
            match ch {
                '#' => glyph.push((row, c as isize)),
                '.' => {}
                other => return Err(Error::parse(format!("unexpected glyph character {other:?}"))),
            }
        }
        row += 1;
    }
    if out.len() != 10 || out.iter().any(|g| g.is_empty()) {
        return Err(Error::parse("glyph table must define ten nonempty digits"));
    }
    Ok(out)
}

fn frame() -> Frame {
    Frame {
        height: DIGIT_ROWS,
        width: DIGIT_COLS,
        periodic: false,
    }
}

/// Pattern specification of digit `k`.
pub fn digit_spec(k: usize, q: f64) -> Result<PatternSpec> {
    let g = glyphs();
    let core = g.get(k).ok_or_else(|| Error::invalid(format!("no digit {k}")))?.clone();
    PatternSpec::with_ring(frame(), core, q)
}

/// Admissible placements of every digit.
pub fn digit_placements(q: f64) -> Result<Vec<Vec<Placement>>> {
    (0..10).map(|k| Ok(digit_spec(k, q)?.placements())).collect()
}

/// Bookkeeping gathered while tabulating the digit distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitStats {
    /// `|K_k|`: distinct images generated by digit `k`.
    pub per_digit_support: [usize; 10],
    /// Total probability contributed by each digit.
    pub per_digit_mass: [f64; 10],
    pub placements: [usize; 10],
    /// Distinct images over all digits.
    pub union_support: usize,
}

impl DigitStats {
    /// `Σ_k |K_k|`, counting images shared by two digits twice.
    pub fn summed_support(&self) -> usize {
        self.per_digit_support.iter().sum()
    }
}

/// Digit target distribution over the 35-pixel frame.
pub fn digit_distribution(q: f64) -> Result<TabulatedDistribution> {
    Ok(digit_distribution_with_stats(q)?.0)
}

/// [`digit_distribution`] together with per-digit cardinalities and masses.
pub fn digit_distribution_with_stats(q: f64) -> Result<(TabulatedDistribution, DigitStats)> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("noise probability {q} outside [0, 1]")));
    }
    let m = DIGIT_ROWS * DIGIT_COLS;
    let all = digit_placements(q)?;
    let mut placements = [0usize; 10];
    // Keys carry the digit in the low 4 bits so that one sort yields both the
    // per-digit and the merged supports.
    let mut entries: Vec<(u64, f64)> = Vec::new();
    let mut scratch = Vec::new();
    for (k, pl) in all.iter().enumerate() {
        placements[k] = pl.len();
        let weight = 0.1 / pl.len() as f64;
        for &p in pl {
            scratch.clear();
            push_images(&mut scratch, m, p, weight, q);
            entries.extend(scratch.iter().map(|&(s, v)| ((s << 4) | k as u64, v)));
        }
    }
    entries.sort_unstable_by_key(|e| e.0);
    let mut per_digit_support = [0usize; 10];
    let mut per_digit_mass = [rbm_core::sum::KahanSum::new(); 10];
    let mut merged: Vec<(u64, f64)> = Vec::with_capacity(entries.len());
    let mut last_key = u64::MAX;
    for (key, p) in entries {
        let (state, digit) = (key >> 4, (key & 15) as usize);
        per_digit_mass[digit].add(p);
        if key != last_key {
            per_digit_support[digit] += 1;
            last_key = key;
        }
        match merged.last_mut() {
            Some(e) if e.0 == state => e.1 += p,
            _ => merged.push((state, p)),
        }
    }
    merged.shrink_to_fit();
    let union_support = merged.len();
    let dist = TabulatedDistribution::from_sorted_unchecked(m, merged);
    let total = dist.total();
    if (total - 1.0).abs() > rbm_core::dist::NORM_TOL {
        return Err(Error::invalid(format!("digit table sums to {total}")));
    }
    let stats = DigitStats {
        per_digit_support,
        per_digit_mass: per_digit_mass.map(|s| s.value()),
        placements,
        union_support,
    };
    Ok((dist, stats))
}

/// Renders a 35-pixel state as seven rows of `#`/`.`.
pub fn render(state: u64) -> String {
    let mut s = String::new();
    for r in 0..DIGIT_ROWS {
        for c in 0..DIGIT_COLS {
            s.push(if state >> (r * DIGIT_COLS + c) & 1 == 1 {
                '#'
            } else {
                '.'
            });
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyph_table_parses() {
        let g = glyphs();
        assert_eq!(g.len(), 10);
        assert_eq!(g[1].len(), 5);
        assert_eq!(g[8].len(), 13);
        assert!(parse_glyphs("0\n#x\n").is_err());
    }

    #[test]
    fn placement_counts() {
        let p = digit_placements(0.1).unwrap();
        let counts: Vec<usize> = p.iter().map(|v| v.len()).collect();
        assert_eq!(counts, vec![9, 15, 12, 12, 9, 12, 9, 9, 9, 9]);
    }

    #[test]
    fn render_shows_rows() {
        let spec = digit_spec(1, 0.1).unwrap();
        let p = spec.placements()[0];
        assert_eq!(render(p.white).lines().next().unwrap(), "#....");
    }
}
