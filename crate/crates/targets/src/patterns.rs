//! Implanted-pattern targets: a pattern of white cells with a black boundary
//! is placed in a frame and every remaining cell is independently white with
//! probability `q`.
//!
//! The probability of an image is the literal sum over all placements that
//! match it, so an image matching several placements collects all of their
//! contributions.

use rbm_core::{Error, Result, TabulatedDistribution};

/// Frame geometry. Cell `(r, c)` maps to unit `r * width + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub periodic: bool,
}

impl Frame {
    pub fn units(&self) -> usize {
        self.height * self.width
    }

    /// Unit index of a cell, wrapping periodically or returning `None`
    /// outside an open frame.
    fn unit(&self, r: isize, c: isize) -> Option<usize> {
        let (h, w) = (self.height as isize, self.width as isize);
        let (r, c) = if self.periodic {
            (r.rem_euclid(h), c.rem_euclid(w))
        } else if (0..h).contains(&r) && (0..w).contains(&c) {
            (r, c)
        } else {
            return None;
        };
        Some((r * w + c) as usize)
    }
}

/// Core cells `I₀` (white) and boundary cells `I₁` (black or out of frame),
/// relative to the placement anchor, with noise probability `q` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSpec {
    pub frame: Frame,
    pub core: Vec<(isize, isize)>,
    pub boundary: Vec<(isize, isize)>,
    pub q: f64,
}

/// One admissible placement as bit masks over the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub white: u64,
    pub black: u64,
}

impl Placement {
    pub fn matches(&self, x: u64) -> bool {
        x & self.white == self.white && x & self.black == 0
    }
}

/// Cells at Chebyshev distance 1 from `core` that are not in `core`, in
/// row-major order.
pub fn chebyshev_ring(core: &[(isize, isize)]) -> Vec<(isize, isize)> {
    let mut ring = Vec::new();
    for &(r, c) in core {
        for dr in -1..=1 {
            for dc in -1..=1 {
                let cell = (r + dr, c + dc);
                if !core.contains(&cell) && !ring.contains(&cell) {
                    ring.push(cell);
                }
            }
        }
    }
    ring.sort();
    ring
}

impl PatternSpec {
    /// Pattern whose boundary is the Chebyshev ring around `core`.
    pub fn with_ring(frame: Frame, core: Vec<(isize, isize)>, q: f64) -> Result<Self> {
        let boundary = chebyshev_ring(&core);
        let s = Self {
            frame,
            core,
            boundary,
            q,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::invalid(format!("noise probability {} outside [0, 1]", self.q)));
        }
        if self.core.is_empty() {
            return Err(Error::invalid("pattern without core cells"));
        }
        if self.core.iter().any(|c| self.boundary.contains(c)) {
            return Err(Error::invalid("core and boundary cells overlap"));
        }
        if self.frame.units() == 0 || self.frame.units() > 63 {
            return Err(Error::invalid("frame must have 1..=63 cells"));
        }
        Ok(())
    }

    /// Placements in row-major anchor order. Periodic frames admit every
    /// anchor; open frames admit anchors whose core cells all lie inside,
    /// with boundary cells outside the frame dropped.
    pub fn placements(&self) -> Vec<Placement> {
        let f = self.frame;
        let (rmin, rmax, cmin, cmax) = if f.periodic {
            (0, f.height as isize - 1, 0, f.width as isize - 1)
        } else {
            let rlo = self.core.iter().map(|c| c.0).min().unwrap();
            let rhi = self.core.iter().map(|c| c.0).max().unwrap();
            let clo = self.core.iter().map(|c| c.1).min().unwrap();
            let chi = self.core.iter().map(|c| c.1).max().unwrap();
            (-rlo, f.height as isize - 1 - rhi, -clo, f.width as isize - 1 - chi)
        };
        let mut out = Vec::new();
        for r0 in rmin..=rmax {
            for c0 in cmin..=cmax {
                let mut white = 0u64;
                let mut black = 0u64;
                for &(r, c) in &self.core {
                    white |= 1 << f.unit(r + r0, c + c0).expect("core cell inside frame");
                }
                for &(r, c) in &self.boundary {
                    if let Some(u) = f.unit(r + r0, c + c0) {
                        black |= 1 << u;
                    }
                }
                if white & black == 0 {
                    out.push(Placement { white, black });
                }
            }
        }
        out
    }
}

/// Appends every image generated by `placement` with its contribution
/// `weight · q^{#white noise} (1-q)^{#black noise}`.
pub fn push_images(out: &mut Vec<(u64, f64)>, m: usize, placement: Placement, weight: f64, q: f64) {
    let full = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
    let free = full & !(placement.white | placement.black);
    let nfree = free.count_ones() as i32;
    let pw: Vec<f64> = (0..=nfree)
        .map(|k| weight * q.powi(k) * (1.0 - q).powi(nfree - k))
        .collect();
    let mut sub = 0u64;
    loop {
        let p = pw[sub.count_ones() as usize];
        if p > 0.0 {
            out.push((placement.white | sub, p));
        }
        if sub == free {
            break;
        }
        sub = sub.wrapping_sub(free) & free;
    }
}

/// Tabulates the uniform mixture over the placements of `spec`.
pub fn pattern_distribution(spec: &PatternSpec) -> Result<TabulatedDistribution> {
    spec.validate()?;
    let placements = spec.placements();
    if placements.is_empty() {
        return Err(Error::invalid("pattern admits no placement in the frame"));
    }
    let m = spec.frame.units();
    let weight = 1.0 / placements.len() as f64;
    let mut entries = Vec::new();
    for p in placements {
        push_images(&mut entries, m, p, weight, spec.q);
    }
    TabulatedDistribution::new(m, entries)
}

/// Hook pattern on an `L×L` periodic frame: core `{(0,0), (-1,0), (0,1)}`
/// with its 12-cell Chebyshev ring.
pub fn hook_spec(side: usize, q: f64) -> Result<PatternSpec> {
    let frame = Frame {
        height: side,
        width: side,
        periodic: true,
    };
    PatternSpec::with_ring(frame, vec![(0, 0), (-1, 0), (0, 1)], q)
}

/// Hook target distribution.
pub fn hook_distribution(side: usize, q: f64) -> Result<TabulatedDistribution> {
    if side < 4 {
        return Err(Error::invalid(
            "hook frame needs side >= 4 to hold the pattern and its ring",
        ));
    }
    pattern_distribution(&hook_spec(side, q)?)
}

/// One-dimensional periodic black-white(-white)-black pattern on `m ∈ {4, 5}`
/// units: a white core of `m - 3` cells, one black cell on each side and one
/// free cell.
pub fn mini_pattern_spec(m: usize, q: f64) -> Result<PatternSpec> {
    if !(m == 4 || m == 5) {
        return Err(Error::invalid(format!(
            "mini pattern is defined for m = 4 or 5, got {m}"
        )));
    }
    let core_len = (m - 3) as isize;
    let frame = Frame {
        height: 1,
        width: m,
        periodic: true,
    };
    let spec = PatternSpec {
        frame,
        core: (0..core_len).map(|c| (0, c)).collect(),
        boundary: vec![(0, -1), (0, core_len)],
        q,
    };
    spec.validate()?;
    Ok(spec)
}

/// Default noise probability of the free cell in the mini patterns.
pub const MINI_DEFAULT_Q: f64 = 0.1;

pub fn mini_pattern_distribution(m: usize, q: f64) -> Result<TabulatedDistribution> {
    pattern_distribution(&mini_pattern_spec(m, q)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hook_ring_has_twelve_cells() {
        let s = hook_spec(5, 0.1).unwrap();
        assert_eq!(s.boundary.len(), 12);
        assert_eq!(s.placements().len(), 25);
    }

    #[test]
    fn mini_m4_table() {
        let d = mini_pattern_distribution(4, 0.1).unwrap();
        assert_eq!(d.support_size(), 6);
        for s in [1u64, 2, 4, 8] {
            assert!((d.prob(s) - 0.225).abs() < 1e-15);
        }
        assert!((d.prob(0b0101) - 0.05).abs() < 1e-15);
        assert!((d.prob(0b1010) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn mini_m5_normalizes() {
        let d = mini_pattern_distribution(5, 0.1).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-12);
        assert!(mini_pattern_distribution(6, 0.1).is_err());
    }

    #[test]
    fn open_frame_drops_outside_boundary() {
        let frame = Frame {
            height: 3,
            width: 3,
            periodic: false,
        };
        let s = PatternSpec::with_ring(frame, vec![(0, 0)], 0.5).unwrap();
        let p = s.placements();
        assert_eq!(p.len(), 9);
        assert_eq!(p[0].white, 1);
        assert_eq!(p[0].black, 0b011010);
    }

    #[test]
    fn push_images_enumerates_all_noise_patterns() {
        let mut v = Vec::new();
        push_images(&mut v, 4, Placement { white: 1, black: 2 }, 1.0, 0.25);
        assert_eq!(v.len(), 4);
        let total: f64 = v.iter().map(|e| e.1).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }
}
