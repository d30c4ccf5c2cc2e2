//! RBM parameters, energy, conditionals and initialization.

use std::io::{Read, Write};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::state::SampleSet;

/// Logistic function, evaluated on the side of zero that cannot overflow.
#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Entropy in nats of a Bernoulli variable with success probability
/// `logistic(z)`, written as `softplus(z) - z·logistic(z)`.
#[inline]
pub fn logistic_entropy(z: f64) -> f64 {
    let v = softplus(z) - z * logistic(z);
    v.max(0.0)
}

/// Weights `w` (row-major `m×n`, entry `(i, j)` at `i*n + j`), visible
/// biases `a` and hidden biases `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    pub m: usize,
    pub n: usize,
    pub w: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl RbmParams {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            w: vec![0.0; m * n],
            a: vec![0.0; m],
            b: vec![0.0; n],
        }
    }

    /// Validated constructor.
    pub fn new(m: usize, n: usize, w: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let p = Self { m, n, w, a, b };
        p.validate()?;
        Ok(p)
    }

    /// Checks shapes, `m, n >= 1` and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::invalid("an RBM needs at least one visible and one hidden unit"));
        }
        Error::check_dim("weights", self.m * self.n, self.w.len())?;
        Error::check_dim("visible biases", self.m, self.a.len())?;
        Error::check_dim("hidden biases", self.n, self.b.len())?;
        if let Some(name) = self.first_non_finite() {
            return Err(Error::NonFinite(name));
        }
        Ok(())
    }

    /// Name of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        if let Some(k) = self.w.iter().position(|v| !v.is_finite()) {
            return Some(format!("w[{}][{}]", k / self.n, k % self.n));
        }
        if let Some(i) = self.a.iter().position(|v| !v.is_finite()) {
            return Some(format!("a[{i}]"));
        }
        self.b.iter().position(|v| !v.is_finite()).map(|j| format!("b[{j}]"))
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    /// Machine with the roles of visible and hidden layers exchanged.
    pub fn transpose(&self) -> Self {
        let mut w = vec![0.0; self.m * self.n];
        for i in 0..self.m {
            for j in 0..self.n {
                w[j * self.m + i] = self.w[i * self.n + j];
            }
        }
        Self {
            m: self.n,
            n: self.m,
            w,
            a: self.b.clone(),
            b: self.a.clone(),
        }
    }

    /// `E(x, h) = -Σ w_ij x_i h_j - Σ a_i x_i - Σ b_j h_j`.
    pub fn energy(&self, x: &[u8], h: &[u8]) -> Result<f64> {
        Error::check_dim("visible state", self.m, x.len())?;
        Error::check_dim("hidden state", self.n, h.len())?;
        let mut e = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0 {
                continue;
            }
            e -= self.a[i];
            let row = &self.w[i * self.n..(i + 1) * self.n];
            for (wij, &hj) in row.iter().zip(h) {
                if hj != 0 {
                    e -= wij;
                }
            }
        }
        for (bj, &hj) in self.b.iter().zip(h) {
            if hj != 0 {
                e -= bj;
            }
        }
        Ok(e)
    }

    /// Hidden pre-activations `u_j = b_j + Σ_i w_ij x_i` written into `out`.
    #[inline]
    pub fn hidden_field_into(&self, x: &[u8], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.m);
        out.copy_from_slice(&self.b);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0 {
                let row = &self.w[i * self.n..(i + 1) * self.n];
                for (o, wij) in out.iter_mut().zip(row) {
                    *o += wij;
                }
            }
        }
    }

    /// Visible pre-activations `v_i = a_i + Σ_j w_ij h_j` written into `out`.
    #[inline]
    pub fn visible_field_into(&self, h: &[u8], out: &mut [f64]) {
        debug_assert_eq!(h.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.w[i * self.n..(i + 1) * self.n];
            let mut s = self.a[i];
            for (wij, &hj) in row.iter().zip(h) {
                if hj != 0 {
                    s += wij;
                }
            }
            *o = s;
        }
    }

    /// `p(h_j = 1 | x)` for every hidden unit.
    pub fn hidden_conditional(&self, x: &[u8]) -> Result<Vec<f64>> {
        Error::check_dim("visible state", self.m, x.len())?;
        let mut u = vec![0.0; self.n];
        self.hidden_field_into(x, &mut u);
        u.iter_mut().for_each(|v| *v = logistic(*v));
        Ok(u)
    }

    /// `p(x_i = 1 | h)` for every visible unit.
    pub fn visible_conditional(&self, h: &[u8]) -> Result<Vec<f64>> {
        Error::check_dim("hidden state", self.n, h.len())?;
        let mut v = vec![0.0; self.m];
        self.visible_field_into(h, &mut v);
        v.iter_mut().for_each(|p| *p = logistic(*p));
        Ok(v)
    }

    /// Shannon entropy (nats) of `p(h | x)`.
    pub fn conditional_entropy_hidden(&self, x: &[u8]) -> Result<f64> {
        Error::check_dim("visible state", self.m, x.len())?;
        let mut u = vec![0.0; self.n];
        self.hidden_field_into(x, &mut u);
        Ok(u.into_iter().map(logistic_entropy).sum())
    }

    /// `ln[e^{a·x} Π_j (1 + e^{u_j})]`, the log of the unnormalized marginal.
    pub fn log_unnormalized_marginal(&self, x: &[u8]) -> f64 {
        let mut u = vec![0.0; self.n];
        self.hidden_field_into(x, &mut u);
        let bias: f64 = x.iter().zip(&self.a).filter(|(&xi, _)| xi != 0).map(|(_, a)| a).sum();
        bias + u.into_iter().map(softplus).sum::<f64>()
    }

    /// `σ_w = sqrt(Σ w² / (MN - 1))`, the second moment about zero with an
    /// `MN - 1` denominator. Zero for a single-weight machine.
    pub fn weights_std(&self) -> f64 {
        let denom = (self.m * self.n) as f64 - 1.0;
        if denom <= 0.0 {
            return 0.0;
        }
        let ss: f64 = crate::sum::kahan(self.w.iter().map(|w| w * w));
        (ss / denom).sqrt()
    }

    /// Adds `scale * delta` entry-wise.
    pub fn add_scaled(&mut self, delta: &RbmParams, scale: f64) {
        for (p, d) in self.w.iter_mut().zip(&delta.w) {
            *p += scale * d;
        }
        for (p, d) in self.a.iter_mut().zip(&delta.a) {
            *p += scale * d;
        }
        for (p, d) in self.b.iter_mut().zip(&delta.b) {
            *p += scale * d;
        }
    }

    /// Flattened `(w, a, b)`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w.len() + self.m + self.n);
        v.extend_from_slice(&self.w);
        v.extend_from_slice(&self.a);
        v.extend_from_slice(&self.b);
        v
    }

    /// Inverse of [`RbmParams::to_vector`].
    pub fn from_vector(m: usize, n: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), m * n + m + n);
        Self {
            m,
            n,
            w: v[..m * n].to_vec(),
            a: v[m * n..m * n + m].to_vec(),
            b: v[m * n + m..].to_vec(),
        }
    }
}

/// Initialization schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitScheme {
    /// Independent normal draws for weights and for biases.
    Gaussian {
        mu_w: f64,
        sigma_w: f64,
        mu_b: f64,
        sigma_b: f64,
    },
    /// Small random weights, zero hidden biases, visible biases set to the
    /// logit of the data activation frequency and clamped to `±c_max`.
    Hinton {
        c_max: f64,
    },
    Zeros,
    Snapshot {
        params: RbmParams,
    },
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Gaussian {
            mu_w: 0.0,
            sigma_w: 0.01,
            mu_b: 0.0,
            sigma_b: 0.1,
        }
    }
}

impl InitScheme {
    pub fn hinton() -> Self {
        InitScheme::Hinton { c_max: 2.0 }
    }

    /// Short label used in snapshot headers and logs.
    pub fn label(&self) -> String {
        match self {
            InitScheme::Gaussian {
                mu_w,
                sigma_w,
                mu_b,
                sigma_b,
            } => format!("gaussian(mu_w={mu_w},sigma_w={sigma_w},mu_b={mu_b},sigma_b={sigma_b})"),
            InitScheme::Hinton { c_max } => format!("hinton(c_max={c_max})"),
            InitScheme::Zeros => "zeros".into(),
            InitScheme::Snapshot { .. } => "snapshot".into(),
        }
    }
}

fn normal(mu: f64, sigma: f64) -> Result<Normal<f64>> {
    Normal::new(mu, sigma).map_err(|e| Error::invalid(format!("normal({mu}, {sigma}): {e}")))
}

/// Draws an initial machine. Weights are drawn row-major, then `a`, then `b`.
pub fn init(scheme: &InitScheme, m: usize, n: usize, dataset: Option<&SampleSet>, rng: &mut Rng) -> Result<RbmParams> {
    let mut p = RbmParams::zeros(m, n);
    match scheme {
        InitScheme::Gaussian {
            mu_w,
            sigma_w,
            mu_b,
            sigma_b,
        } => {
            let dw = normal(*mu_w, *sigma_w)?;
            let db = normal(*mu_b, *sigma_b)?;
            p.w.iter_mut().for_each(|v| *v = dw.sample(rng));
            p.a.iter_mut().for_each(|v| *v = db.sample(rng));
            p.b.iter_mut().for_each(|v| *v = db.sample(rng));
        }
        InitScheme::Hinton { c_max } => {
            if !(*c_max > 0.0) {
                return Err(Error::invalid("hinton bias cap must be positive"));
            }
            let data = dataset.ok_or_else(|| Error::invalid("hinton initialization needs a dataset"))?;
            Error::check_dim("dataset width", m, data.m())?;
            if data.is_empty() {
                return Err(Error::invalid("hinton initialization needs a nonempty dataset"));
            }
            let dw = normal(0.0, 0.01)?;
            p.w.iter_mut().for_each(|v| *v = dw.sample(rng));
            for (a, nu) in p.a.iter_mut().zip(data.unit_means()) {
                let logit = nu.ln() - (1.0 - nu).ln();
                *a = logit.clamp(-c_max, *c_max);
            }
        }
        InitScheme::Zeros => {}
        InitScheme::Snapshot { params } => {
            Error::check_dim("snapshot visible units", m, params.m)?;
            Error::check_dim("snapshot hidden units", n, params.n)?;
            p = params.clone();
        }
    }
    p.validate()?;
    Ok(p)
}

/// Parameter snapshot file (JSON). Field order on disk: `format`, `m`, `n`,
/// `init`, `seed`, `epoch`, `w` (row-major, `m*n` values), `a`, `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: String,
    pub m: usize,
    pub n: usize,
    pub init: String,
    pub seed: u64,
    pub epoch: Option<f64>,
    pub w: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

pub const SNAPSHOT_FORMAT: &str = "rbm-snapshot/1";

impl Snapshot {
    pub fn new(params: &RbmParams, init: &InitScheme, seed: u64, epoch: Option<f64>) -> Self {
        Self {
            format: SNAPSHOT_FORMAT.into(),
            m: params.m,
            n: params.n,
            init: init.label(),
            seed,
            epoch,
            w: params.w.clone(),
            a: params.a.clone(),
            b: params.b.clone(),
        }
    }

    pub fn params(&self) -> Result<RbmParams> {
        RbmParams::new(self.m, self.n, self.w.clone(), self.a.clone(), self.b.clone())
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let s: Snapshot = serde_json::from_reader(input)?;
        if s.format != SNAPSHOT_FORMAT {
            return Err(Error::parse(format!("unsupported snapshot format {:?}", s.format)));
        }
        s.params()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::state::unpack_into;

    fn random_params(m: usize, n: usize, seed: u64, scale: f64) -> RbmParams {
        let s = InitScheme::Gaussian {
            mu_w: 0.0,
            sigma_w: scale,
            mu_b: 0.0,
            sigma_b: scale,
        };
        init(&s, m, n, None, &mut stream(seed, 0)).unwrap()
    }

    #[test]
    fn energy_trivial_cases() {
        let z = RbmParams::zeros(3, 2);
        assert_eq!(z.energy(&[1, 0, 1], &[1, 1]).unwrap(), 0.0);
        let p = RbmParams::new(1, 1, vec![1.0], vec![0.0], vec![0.0]).unwrap();
        assert_eq!(p.energy(&[1], &[1]).unwrap(), -1.0);
        assert!(p.energy(&[1, 0], &[1]).is_err());
    }

    #[test]
    fn energy_matches_triple_loop() {
        let p = random_params(3, 2, 4, 1.0);
        let (mut x, mut h) = ([0u8; 3], [0u8; 2]);
        for xw in 0..8u64 {
            for hw in 0..4u64 {
                unpack_into(xw, &mut x);
                unpack_into(hw, &mut h);
                let mut e = 0.0;
                for i in 0..3 {
                    for j in 0..2 {
                        e -= p.weight(i, j) * x[i] as f64 * h[j] as f64;
                    }
                }
                for i in 0..3 {
                    e -= p.a[i] * x[i] as f64;
                }
                for j in 0..2 {
                    e -= p.b[j] * h[j] as f64;
                }
                assert!((p.energy(&x, &h).unwrap() - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conditional_examples() {
        let z = RbmParams::zeros(3, 4);
        assert!(z.hidden_conditional(&[1, 1, 0]).unwrap().iter().all(|&p| p == 0.5));
        assert!(z.visible_conditional(&[1, 0, 0, 1]).unwrap().iter().all(|&p| p == 0.5));
        let p = RbmParams::new(1, 1, vec![3f64.ln()], vec![0.0], vec![0.0]).unwrap();
        assert!((p.hidden_conditional(&[1]).unwrap()[0] - 0.75).abs() < 1e-15);
        let big = RbmParams::new(1, 1, vec![50.0], vec![0.0], vec![0.0]).unwrap();
        assert!((1.0 - big.hidden_conditional(&[1]).unwrap()[0]).abs() < 1e-20);
        let neg = RbmParams::new(1, 1, vec![-50.0], vec![0.0], vec![0.0]).unwrap();
        let v = neg.hidden_conditional(&[1]).unwrap()[0];
        assert!(v < 1e-20 && v > 0.0);
    }

    #[test]
    fn visible_conditional_is_transposed_hidden_conditional() {
        let p = random_params(4, 3, 8, 1.0);
        let t = p.transpose();
        for hw in 0..8u64 {
            let mut h = [0u8; 3];
            unpack_into(hw, &mut h);
            let direct: Vec<f64> = (0..4)
                .map(|i| {
                    let z = p.a[i] + (0..3).map(|j| p.weight(i, j) * h[j] as f64).sum::<f64>();
                    1.0 / (1.0 + (-z).exp())
                })
                .collect();
            let v = p.visible_conditional(&h).unwrap();
            assert_eq!(v, t.hidden_conditional(&h).unwrap());
            for (a, b) in v.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conditional_entropy_examples() {
        let z = RbmParams::zeros(2, 5);
        assert!((z.conditional_entropy_hidden(&[0, 1]).unwrap() - 5.0 * 2f64.ln()).abs() < 1e-15);
        let mut f = RbmParams::zeros(2, 5);
        f.b[0] = 1e3;
        assert!((f.conditional_entropy_hidden(&[0, 1]).unwrap() - 4.0 * 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn conditional_entropy_matches_enumeration() {
        let p = random_params(3, 3, 21, 1.5);
        let x = [1u8, 0, 1];
        let ph = p.hidden_conditional(&x).unwrap();
        let mut s = 0.0;
        for hw in 0..8u64 {
            let prob: f64 = (0..3)
                .map(|j| if hw >> j & 1 == 1 { ph[j] } else { 1.0 - ph[j] })
                .product();
            s -= prob * prob.ln();
        }
        assert!((p.conditional_entropy_hidden(&x).unwrap() - s).abs() < 1e-12);
    }

    #[test]
    fn init_examples() {
        let data = SampleSet::from_words(2, &[0b01, 0b10]);
        let p = init(&InitScheme::hinton(), 2, 3, Some(&data), &mut stream(1, 0)).unwrap();
        assert_eq!(p.a, vec![0.0, 0.0]);
        assert_eq!(p.b, vec![0.0; 3]);

        let mut rows = vec![1u8; 100];
        rows[0] = 0;
        let data = SampleSet::from_flat(1, rows).unwrap();
        let p = init(&InitScheme::hinton(), 1, 1, Some(&data), &mut stream(1, 0)).unwrap();
        assert_eq!(p.a[0], 2.0);

        let all_zero = SampleSet::from_words(2, &[0, 0]);
        let p = init(&InitScheme::hinton(), 2, 1, Some(&all_zero), &mut stream(1, 0)).unwrap();
        assert_eq!(p.a, vec![-2.0, -2.0]);

        assert!(init(&InitScheme::hinton(), 2, 1, None, &mut stream(1, 0)).is_err());

        let g = InitScheme::Gaussian {
            mu_w: 0.0,
            sigma_w: 0.0,
            mu_b: 0.0,
            sigma_b: 0.0,
        };
        assert_eq!(init(&g, 3, 2, None, &mut stream(1, 0)).unwrap(), RbmParams::zeros(3, 2));
    }

    #[test]
    fn default_gaussian_spread() {
        let p = init(&InitScheme::default(), 100, 100, None, &mut stream(3, 0)).unwrap();
        let sw = p.weights_std();
        assert!((sw - 0.01).abs() < 0.0005, "{sw}");
        let sb = (p.b.iter().map(|v| v * v).sum::<f64>() / 100.0).sqrt();
        assert!((sb - 0.1).abs() < 0.03);
    }

    #[test]
    fn weights_std_formula() {
        let mut p = RbmParams::zeros(2, 2);
        assert_eq!(p.weights_std(), 0.0);
        p.w[0] = 1.0;
        assert!((p.weights_std() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn snapshot_roundtrip() {
        let p = random_params(3, 2, 5, 1.0);
        let s = Snapshot::new(&p, &InitScheme::default(), 5, Some(10.0));
        let mut buf = Vec::new();
        s.write(&mut buf).unwrap();
        let back = Snapshot::read(&buf[..]).unwrap();
        assert_eq!(back.params().unwrap(), p);
    }

    #[test]
    fn stable_logistic_and_softplus() {
        assert_eq!(logistic(0.0), 0.5);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) == 1.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(logistic_entropy(1e3), 0.0);
    }
}
