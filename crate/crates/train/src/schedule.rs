use serde::{Deserialize, Serialize};

/// Epochs (or flow times) at which measurements are taken. Time zero and
/// the final time are always included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// `first · 10^(k / per_decade)` for `k = 0, 1, …`.
    Geometric {
        first: f64,
        per_decade: usize,
    },
    Every {
        interval: f64,
    },
    Explicit {
        points: Vec<f64>,
    },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Geometric {
            first: 1.0,
            per_decade: 10,
        }
    }
}

impl Schedule {
    /// Sorted, de-duplicated measurement times in `[0, end]`; rounded to
    /// whole epochs when `integer` is set.
    pub fn points(&self, end: f64, integer: bool) -> Vec<f64> {
        let mut out = vec![0.0];
        match self {
            Schedule::Geometric { first, per_decade } => {
                let per = (*per_decade).max(1) as f64;
                let mut k = 0;
                loop {
                    let t = first * 10f64.powf(k as f64 / per);
                    if !(t < end) || !t.is_finite() {
                        break;
                    }
                    out.push(t);
                    k += 1;
                }
            }
            Schedule::Every { interval } => {
                if *interval > 0.0 {
                    let mut k = 1;
                    while (k as f64) * interval < end {
                        out.push(k as f64 * interval);
                        k += 1;
                    }
                }
            }
            Schedule::Explicit { points } => out.extend(points.iter().copied().filter(|&t| t > 0.0 && t < end)),
        }
        out.push(end);
        if integer {
            out.iter_mut().for_each(|t| *t = t.round());
        }
        out.retain(|t| *t >= 0.0 && *t <= end);
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_grid() {
        let s = Schedule::Geometric {
            first: 1.0,
            per_decade: 3,
        };
        assert_eq!(s.points(100.0, true), vec![0.0, 1.0, 2.0, 5.0, 10.0, 22.0, 46.0, 100.0]);
        assert_eq!(s.points(0.0, true), vec![0.0]);
        let e = Schedule::Explicit {
            points: vec![3.0, 1.0, 9.0],
        };
        assert_eq!(e.points(5.0, true), vec![0.0, 1.0, 3.0, 5.0]);
        assert_eq!(
            Schedule::Every { interval: 2.0 }.points(5.0, true),
            vec![0.0, 2.0, 4.0, 5.0]
        );
    }
}
