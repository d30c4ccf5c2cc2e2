//! Compensated accumulators.

/// Kahan-Babuska (Neumaier) compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    fn scale(&mut self, f: f64) {
        self.sum *= f;
        self.comp *= f;
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}

/// Compensated sum of an iterator.
pub fn kahan<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

/// Streaming `ln Σ e^{v}` with a running maximum and a compensated sum of
/// the rescaled terms.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: KahanSum,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: KahanSum::new(),
        }
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            if self.max != f64::NEG_INFINITY {
                self.sum.scale((self.max - v).exp());
            }
            self.max = v;
            self.sum.add(1.0);
        } else {
            self.sum.add((v - self.max).exp());
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.value().ln()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_terms() {
        let mut s = KahanSum::new();
        s.add(1.0);
        for _ in 0..1_000_000 {
            s.add(1e-16);
        }
        assert!((s.value() - (1.0 + 1e-10)).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let vals = [0.3, -2.0, 5.0, 1.0, 4.9];
        let mut l = LogSumExp::new();
        for v in vals {
            l.add(v);
        }
        let direct: f64 = vals.iter().map(|v| v.exp()).sum::<f64>().ln();
        assert!((l.value() - direct).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_handles_huge_values() {
        let mut l = LogSumExp::new();
        l.add(1000.0);
        l.add(1000.0);
        assert!((l.value() - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(LogSumExp::new().value(), f64::NEG_INFINITY);
    }
}
