//! Exact evaluation by enumeration: partition function, model marginal,
//! losses, entropies, total correlation and the n-step CD distribution.
//!
//! All sums run in ascending state-word order with compensated accumulation,
//! so results are reproducible to the last bit.

use crate::dist::TabulatedDistribution;
use crate::error::{Error, Result};
use crate::params::{logistic, softplus, RbmParams};
use crate::state::SampleSet;
use crate::sum::{KahanSum, LogSumExp};

/// Largest layer (in bits) that exact operations will enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationCap(pub usize);

impl Default for EnumerationCap {
    fn default() -> Self {
        EnumerationCap(25)
    }
}

impl EnumerationCap {
    fn check(self, dimension: &'static str, bits: usize) -> Result<()> {
        if bits > self.0 || bits > 63 {
            Err(Error::Capacity {
                dimension,
                bits,
                cap: self.0.min(63),
            })
        } else {
            Ok(())
        }
    }
}

/// `ln Z` of a machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPartition {
    pub log_z: f64,
}

const CHUNK: usize = 8;

/// Evaluates `ln[e^{a·x} Π_j (1 + e^{b_j + Σ_i w_ij x_i})]` for packed
/// states using per-byte lookup tables of partial fields.
#[derive(Debug, Clone)]
pub struct LogWeight {
    m: usize,
    n: usize,
    b: Vec<f64>,
    /// `field[c][pattern * n + j]`: contribution of byte `c` to hidden field `j`.
    field: Vec<Vec<f64>>,
    /// `bias[c][pattern]`: contribution of byte `c` to `a·x`.
    bias: Vec<Vec<f64>>,
}

impl LogWeight {
    pub fn new(params: &RbmParams) -> Self {
        let (m, n) = (params.m, params.n);
        assert!(m <= 64, "packed evaluation needs m <= 64");
        let chunks = m.div_ceil(CHUNK);
        let mut field = Vec::with_capacity(chunks);
        let mut bias = Vec::with_capacity(chunks);
        for c in 0..chunks {
            let lo = c * CHUNK;
            let width = (m - lo).min(CHUNK);
            let mut f = vec![0.0; (1 << width) * n];
            let mut bb = vec![0.0; 1 << width];
            for pat in 1usize..(1 << width) {
                let low = pat.trailing_zeros() as usize;
                let prev = pat & (pat - 1);
                let i = lo + low;
                for j in 0..n {
                    f[pat * n + j] = f[prev * n + j] + params.w[i * n + j];
                }
                bb[pat] = bb[prev] + params.a[i];
            }
            field.push(f);
            bias.push(bb);
        }
        Self {
            m,
            n,
            b: params.b.clone(),
            field,
            bias,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Hidden fields of packed state `x` written into `u` (length `n`);
    /// returns `a·x`.
    #[inline]
    pub fn fields(&self, x: u64, u: &mut [f64]) -> f64 {
        u.copy_from_slice(&self.b);
        let mut ax = 0.0;
        let mask = (1u64 << CHUNK) - 1;
        for (c, (f, bb)) in self.field.iter().zip(&self.bias).enumerate() {
            let pat = ((x >> (c * CHUNK)) & mask) as usize;
            if pat == 0 {
                continue;
            }
            ax += bb[pat];
            let row = &f[pat * self.n..(pat + 1) * self.n];
            for (o, v) in u.iter_mut().zip(row) {
                *o += v;
            }
        }
        ax
    }

    /// Log of the unnormalized marginal weight of `x`. `u` is scratch of length `n`.
    #[inline]
    pub fn eval(&self, x: u64, u: &mut [f64]) -> f64 {
        let ax = self.fields(x, u);
        ax + u.iter().map(|&v| softplus(v)).sum::<f64>()
    }

    pub fn scratch(&self) -> Vec<f64> {
        vec![0.0; self.n]
    }
}

/// `ln Z`, enumerating the smaller layer.
pub fn log_partition(params: &RbmParams, cap: EnumerationCap) -> Result<LogPartition> {
    params.validate()?;
    let (machine, dimension) = if params.n <= params.m {
        (params.transpose(), "hidden layer")
    } else {
        (params.clone(), "visible layer")
    };
    cap.check(dimension, machine.m)?;
    let lw = LogWeight::new(&machine);
    let mut u = lw.scratch();
    let mut acc = LogSumExp::new();
    for s in 0..1u64 << machine.m {
        acc.add(lw.eval(s, &mut u));
    }
    Ok(LogPartition { log_z: acc.value() })
}

/// `p̂(x)` for one visible state.
pub fn model_marginal(params: &RbmParams, x: &[u8], log_z: LogPartition) -> Result<f64> {
    Error::check_dim("visible state", params.m, x.len())?;
    Ok((params.log_unnormalized_marginal(x) - log_z.log_z).exp())
}

/// Full model marginal table over all `2^m` states.
pub fn model_table(params: &RbmParams, cap: EnumerationCap) -> Result<TabulatedDistribution> {
    cap.check("visible layer", params.m)?;
    let log_z = log_partition(params, cap)?;
    let lw = LogWeight::new(params);
    let mut u = lw.scratch();
    let entries: Vec<(u64, f64)> = (0..1u64 << params.m)
        .map(|s| (s, (lw.eval(s, &mut u) - log_z.log_z).exp()))
        .filter(|e| e.1 > 0.0)
        .collect();
    Ok(TabulatedDistribution::from_sorted_unchecked(params.m, entries))
}

/// Exact loss together with the number of support states where the model
/// probability is zero or not representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub delta: f64,
    pub non_finite_states: usize,
}

/// `D_KL(p ‖ p̂)` over the target's support.
pub fn exact_loss(params: &RbmParams, target: &TabulatedDistribution, cap: EnumerationCap) -> Result<f64> {
    Ok(exact_loss_report(params, target, cap)?.delta)
}

/// [`exact_loss`] with the count of support states where `ln p̂` is not finite;
/// any such state makes the loss `+∞`.
pub fn exact_loss_report(
    params: &RbmParams,
    target: &TabulatedDistribution,
    cap: EnumerationCap,
) -> Result<LossReport> {
    Error::check_dim("target visible units", params.m, target.m())?;
    let log_z = log_partition(params, cap)?;
    Ok(exact_loss_with(params, target, log_z))
}

/// [`exact_loss_report`] with a precomputed partition function.
pub fn exact_loss_with(params: &RbmParams, target: &TabulatedDistribution, log_z: LogPartition) -> LossReport {
    let lw = LogWeight::new(params);
    let mut u = lw.scratch();
    let mut acc = KahanSum::new();
    let mut bad = 0;
    for &(s, p) in target.entries() {
        let log_q = lw.eval(s, &mut u) - log_z.log_z;
        if !log_q.is_finite() || log_q.exp() == 0.0 && log_q < -745.0 {
            bad += 1;
            continue;
        }
        acc.add(p * (p.ln() - log_q));
    }
    LossReport {
        delta: if bad > 0 { f64::INFINITY } else { acc.value() },
        non_finite_states: bad,
    }
}

/// Empirical loss
/// `-(1/|S|) Σ_x [Σ_i a_i x_i + Σ_j softplus(Σ_i w_ij x_i + b_j)] + ln Z - ln|S|`.
pub fn empirical_loss(params: &RbmParams, data: &SampleSet, log_z: LogPartition) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("empirical loss of an empty dataset"));
    }
    Error::check_dim("dataset width", params.m, data.m())?;
    let mut acc = KahanSum::new();
    for row in data.rows() {
        acc.add(params.log_unnormalized_marginal(row));
    }
    let k = data.len() as f64;
    Ok(-acc.value() / k + log_z.log_z - k.ln())
}

/// `-Σ p ln p` with `0 ln 0 = 0`.
pub fn entropy(dist: &TabulatedDistribution) -> f64 {
    let mut acc = KahanSum::new();
    for &(_, p) in dist.entries() {
        acc.add(-p * p.ln());
    }
    acc.value()
}

/// Entropy of a Bernoulli variable, `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let t = |v: f64| if v > 0.0 { -v * v.ln() } else { 0.0 };
    t(p) + t(1.0 - p)
}

/// `C_tot(p) = Σ_i S(p_i) - S(p)`.
pub fn total_correlation(dist: &TabulatedDistribution) -> f64 {
    let marg: f64 = dist.marginals().into_iter().map(binary_entropy).sum();
    marg - entropy(dist)
}

/// Total correlation of the model marginal, enumerating all `2^m` states.
pub fn model_total_correlation(params: &RbmParams, cap: EnumerationCap) -> Result<f64> {
    cap.check("visible layer", params.m)?;
    let log_z = log_partition(params, cap)?;
    let lw = LogWeight::new(params);
    let mut u = lw.scratch();
    let mut s = KahanSum::new();
    let mut marg = vec![KahanSum::new(); params.m];
    for x in 0..1u64 << params.m {
        let lp = lw.eval(x, &mut u) - log_z.log_z;
        let p = lp.exp();
        if p == 0.0 {
            continue;
        }
        s.add(-p * lp);
        let mut bits = x;
        while bits != 0 {
            marg[bits.trailing_zeros() as usize].add(p);
            bits &= bits - 1;
        }
    }
    let h: f64 = marg.iter().map(|a| binary_entropy(a.value().clamp(0.0, 1.0))).sum();
    Ok(h - s.value())
}

/// Largest `m + n` for which dense transition tables are built.
pub const KERNEL_MAX_BITS: usize = 22;

fn check_kernel(params: &RbmParams) -> Result<()> {
    let bits = params.m + params.n;
    if bits > KERNEL_MAX_BITS {
        return Err(Error::Capacity {
            dimension: "visible+hidden layers",
            bits,
            cap: KERNEL_MAX_BITS,
        });
    }
    Ok(())
}

/// Dense `p(h | x)` table, row `x`, column `h`.
pub fn hidden_given_visible_table(params: &RbmParams) -> Result<Vec<f64>> {
    check_kernel(params)?;
    Ok(conditional_table(params))
}

fn conditional_table(params: &RbmParams) -> Vec<f64> {
    let (m, n) = (params.m, params.n);
    let lw = LogWeight::new(params);
    let mut u = lw.scratch();
    let mut out = vec![0.0; 1usize << (m + n)];
    let mut probs = vec![0.0; n];
    for x in 0..1u64 << m {
        lw.fields(x, &mut u);
        for (p, &v) in probs.iter_mut().zip(&u) {
            *p = logistic(v);
        }
        let row = &mut out[(x as usize) << n..((x as usize) + 1) << n];
        for (h, r) in row.iter_mut().enumerate() {
            let mut prod = 1.0;
            for (j, &p) in probs.iter().enumerate() {
                prod *= if h >> j & 1 == 1 { p } else { 1.0 - p };
            }
            *r = prod;
        }
    }
    out
}

/// Dense one-step visible kernel `K[x'][x] = Σ_h p(h|x') p(x|h)`, row-major.
pub fn visible_kernel(params: &RbmParams) -> Result<Vec<f64>> {
    check_kernel(params)?;
    if params.m > 14 {
        return Err(Error::Capacity {
            dimension: "visible layer",
            bits: params.m,
            cap: 14,
        });
    }
    let (m, n) = (params.m, params.n);
    let (sm, sn) = (1usize << m, 1usize << n);
    let hx = conditional_table(params);
    let xh = conditional_table(&params.transpose());
    let mut k = vec![0.0; sm * sm];
    for xp in 0..sm {
        for h in 0..sn {
            let a = hx[xp * sn + h];
            if a == 0.0 {
                continue;
            }
            let row = &xh[h * sm..(h + 1) * sm];
            let out = &mut k[xp * sm..(xp + 1) * sm];
            for (o, &b) in out.iter_mut().zip(row) {
                *o += a * b;
            }
        }
    }
    Ok(k)
}

/// Distribution after `n_steps` block-Gibbs steps started from `target`.
/// Returns `target` itself for zero steps and a dense table otherwise.
pub fn cd_distribution(
    params: &RbmParams,
    target: &TabulatedDistribution,
    n_steps: usize,
) -> Result<TabulatedDistribution> {
    Error::check_dim("target visible units", params.m, target.m())?;
    if n_steps == 0 {
        return Ok(target.clone());
    }
    let stepper = CdStepper::new(params)?;
    let mut p = target.to_dense();
    for _ in 0..n_steps {
        p = stepper.step(&p);
    }
    Ok(TabulatedDistribution::from_sorted_unchecked(
        params.m,
        p.into_iter()
            .enumerate()
            .filter(|e| e.1 > 0.0)
            .map(|(s, v)| (s as u64, v))
            .collect(),
    ))
}

/// Precomputed conditional tables for repeated application of the one-step
/// kernel to dense visible distributions.
#[derive(Debug, Clone)]
pub struct CdStepper {
    m: usize,
    n: usize,
    hx: Vec<f64>,
    xh: Vec<f64>,
}

impl CdStepper {
    pub fn new(params: &RbmParams) -> Result<Self> {
        check_kernel(params)?;
        Ok(Self {
            m: params.m,
            n: params.n,
            hx: conditional_table(params),
            xh: conditional_table(&params.transpose()),
        })
    }

    /// Hidden distribution `q(h) = Σ_x p(h|x) p(x)`.
    pub fn to_hidden(&self, p: &[f64]) -> Vec<f64> {
        let sn = 1usize << self.n;
        let mut q = vec![KahanSum::new(); sn];
        for (x, &px) in p.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            for (qh, &c) in q.iter_mut().zip(&self.hx[x * sn..(x + 1) * sn]) {
                qh.add(c * px);
            }
        }
        q.iter().map(|v| v.value()).collect()
    }

    /// One step `p ↦ Σ_{x',h} p(x|h) p(h|x') p(x')`.
    pub fn step(&self, p: &[f64]) -> Vec<f64> {
        let sm = 1usize << self.m;
        let q = self.to_hidden(p);
        let mut out = vec![KahanSum::new(); sm];
        for (h, &qh) in q.iter().enumerate() {
            for (o, &c) in out.iter_mut().zip(&self.xh[h * sm..(h + 1) * sm]) {
                o.add(c * qh);
            }
        }
        out.iter().map(|v| v.value()).collect()
    }
}
