//! Ground state of the periodic transverse-field Ising chain
//! `H = -½ Σ_i (σˣ_i σˣ_{i+1} + g σᶻ_i)`.
//!
//! Bit value 0 is spin up. The ground state is found by restarted Lanczos in
//! the full `2^m` space, started from (and projected onto) the sector with an
//! even number of down spins. Its amplitudes are nonnegative in the σᶻ basis;
//! the σˣ basis is reached with a normalized Walsh–Hadamard transform.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use rbm_core::{Error, Result, TabulatedDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Z,
    X,
}

impl std::str::FromStr for Basis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z" | "Z" => Ok(Basis::Z),
            "x" | "X" => Ok(Basis::X),
            other => Err(Error::invalid(format!("unknown basis {other:?}"))),
        }
    }
}

/// Coupling `J` of the Hamiltonian written as `-J Σ (σˣσˣ + g σᶻ)`.
pub const J: f64 = 0.5;

/// Free-fermion quantities of the even-parity sector.
#[derive(Debug, Clone, PartialEq)]
pub struct TficSpectrum {
    /// Antiperiodic momenta `π(2n+1)/m`.
    pub k: Vec<f64>,
    pub eps: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub omega: Vec<f64>,
    pub u: Vec<f64>,
    /// Imaginary part of `v_k` (its real part is zero).
    pub v_im: Vec<f64>,
}

impl TficSpectrum {
    pub fn new(m: usize, g: f64) -> Self {
        let k: Vec<f64> = (0..m)
            .map(|n| std::f64::consts::PI * (2 * n + 1) as f64 / m as f64)
            .collect();
        let alpha: Vec<f64> = k.iter().map(|k| -2.0 * J * (g + k.cos())).collect();
        let beta: Vec<f64> = k.iter().map(|k| 2.0 * J * k.sin()).collect();
        let eps: Vec<f64> = alpha.iter().zip(&beta).map(|(a, b)| a.hypot(*b)).collect();
        let omega: Vec<f64> = eps
            .iter()
            .zip(&alpha)
            .map(|(e, a)| (2.0 * e * (e + a)).sqrt())
            .collect();
        let u = eps
            .iter()
            .zip(&alpha)
            .zip(&omega)
            .map(|((e, a), w)| (e + a) / w)
            .collect();
        let v_im = beta.iter().zip(&omega).map(|(b, w)| b / w).collect();
        Self {
            k,
            eps,
            alpha,
            beta,
            omega,
            u,
            v_im,
        }
    }

    /// `E₀ = -½ Σ_k ε_k`.
    pub fn ground_energy(&self) -> f64 {
        -0.5 * rbm_core::sum::kahan(self.eps.iter().copied())
    }
}

/// Applies `H` to `psi` in the σᶻ basis.
pub fn apply_hamiltonian(m: usize, g: f64, psi: &[f64], out: &mut [f64]) {
    let masks: Vec<usize> = (0..m).map(|i| (1 << i) | (1 << ((i + 1) % m))).collect();
    for (s, o) in out.iter_mut().enumerate() {
        let downs = s.count_ones() as f64;
        let mut acc = -0.5 * g * (m as f64 - 2.0 * downs) * psi[s];
        for &mk in &masks {
            acc -= 0.5 * psi[s ^ mk];
        }
        *o = acc;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    n
}

fn project_even(v: &mut [f64]) {
    for (s, x) in v.iter_mut().enumerate() {
        if s.count_ones() % 2 == 1 {
            *x = 0.0;
        }
    }
}

/// Ground state with its energy and the final residual `‖Hψ - Eψ‖`.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub m: usize,
    pub g: f64,
    pub energy: f64,
    pub residual: f64,
    /// Real amplitudes in the σᶻ basis, normalized, with nonnegative sum.
    pub psi: Vec<f64>,
}

/// Restarted Lanczos with full reorthogonalization.
pub fn ground_state(m: usize, g: f64) -> Result<GroundState> {
    if m < 2 || m % 2 == 1 || m > 24 {
        return Err(Error::invalid(format!(
            "TFIC chain length must be even and in 2..=24, got {m}"
        )));
    }
    let dim = 1usize << m;
    let krylov = 40.min(dim / 2);
    // Residual tolerance relative to the energy scale, so that large fields converge too.
    let scale = 1.0 + 0.5 * m as f64 * (1.0 + g.abs());
    let tol = 1e-10 * scale;
    let mut v = vec![1.0; dim];
    project_even(&mut v);
    normalize(&mut v);
    let mut w = vec![0.0; dim];
    let mut best = (f64::NAN, f64::INFINITY);
    for _restart in 0..200 {
        let mut basis: Vec<Vec<f64>> = vec![v.clone()];
        let mut alphas = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        for j in 0..krylov {
            apply_hamiltonian(m, g, &basis[j], &mut w);
            let a = dot(&w, &basis[j]);
            alphas.push(a);
            for _pass in 0..2 {
                for b in &basis {
                    let c = dot(&w, b);
                    w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let beta = dot(&w, &w).sqrt();
            if beta < 1e-13 || j + 1 == krylov {
                break;
            }
            betas.push(beta);
            basis.push(w.iter().map(|x| x / beta).collect());
        }
        let k = alphas.len();
        let t = DMatrix::from_fn(k, k, |r, c| {
            if r == c {
                alphas[r]
            } else if r + 1 == c {
                betas[r]
            } else if c + 1 == r {
                betas[c]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (imin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .expect("nonempty tridiagonal");
        let y = eig.eigenvectors.column(imin);
        let mut ritz = vec![0.0; dim];
        for (coef, b) in y.iter().zip(&basis) {
            ritz.iter_mut().zip(b).for_each(|(r, x)| *r += coef * x);
        }
        project_even(&mut ritz);
        normalize(&mut ritz);
        apply_hamiltonian(m, g, &ritz, &mut w);
        let e = dot(&w, &ritz);
        let res = w
            .iter()
            .zip(&ritz)
            .map(|(h, r)| (h - e * r).powi(2))
            .sum::<f64>()
            .sqrt();
        best = (e, res);
        v = ritz;
        if res < tol {
            break;
        }
    }
    if !(best.1 < 1e-8 * scale) {
        return Err(Error::invalid(format!(
            "Lanczos did not converge for m={m}, g={g}: residual {}",
            best.1
        )));
    }
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(GroundState {
        m,
        g,
        energy: best.0,
        residual: best.1,
        psi: v,
    })
}

/// In-place Walsh–Hadamard transform scaled by `2^{-m/2}` (an involution).
pub fn hadamard(v: &mut [f64]) {
    let n = v.len();
    assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            for i in start..start + h {
                let (a, b) = (v[i], v[i + h]);
                v[i] = a + b;
                v[i + h] = a - b;
            }
        }
        h *= 2;
    }
    let scale = 1.0 / (n as f64).sqrt();
    v.iter_mut().for_each(|x| *x *= scale);
}

/// Amplitudes below this are treated as rounding noise around zero.
pub const NEGATIVE_AMPLITUDE_TOL: f64 = 1e-9;

/// Ground-state amplitudes in the requested basis, with the global sign
/// chosen so that all are nonnegative.
pub fn amplitudes(state: &GroundState, basis: Basis) -> Result<Vec<f64>> {
    let mut psi = state.psi.clone();
    if basis == Basis::X {
        hadamard(&mut psi);
        if psi.iter().sum::<f64>() < 0.0 {
            psi.iter_mut().for_each(|x| *x = -*x);
        }
    }
    if let Some((s, &a)) = psi.iter().enumerate().find(|(_, &a)| a < -NEGATIVE_AMPLITUDE_TOL) {
        return Err(Error::invalid(format!(
            "negative amplitude {a} at state {s} in the {basis:?} basis"
        )));
    }
    Ok(psi)
}

/// Measurement distribution `p(x) = ψ(x)²`.
pub fn tfic_ground_state(m: usize, g: f64, basis: Basis) -> Result<TabulatedDistribution> {
    let gs = ground_state(m, g)?;
    distribution_from(&gs, basis)
}

/// `p = ψ²` in `basis` for an already computed ground state.
pub fn distribution_from(gs: &GroundState, basis: Basis) -> Result<TabulatedDistribution> {
    let psi = amplitudes(gs, basis)?;
    let probs: Vec<f64> = psi.iter().map(|a| a * a).collect();
    let total = rbm_core::sum::kahan(probs.iter().copied());
    let entries = probs
        .into_iter()
        .enumerate()
        .filter(|e| e.1 > 0.0)
        .map(|(s, p)| (s as u64, p / total))
        .collect();
    Ok(TabulatedDistribution::from_sorted_unchecked(gs.m, entries))
}

/// Outcome of the parity (σᶻ) or spin-flip (σˣ) symmetry check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub basis: Basis,
    /// σᶻ basis: total probability on states with an odd number of down spins.
    pub odd_parity_mass: f64,
    /// σˣ basis: `max |p(x) - p(1-x)|`.
    pub max_flip_asymmetry: f64,
    pub passed: bool,
    pub details: Vec<String>,
}

pub fn tfic_symmetry_checks(dist: &TabulatedDistribution, basis: Basis) -> SymmetryReport {
    let m = dist.m();
    let full = (1u64 << m) - 1;
    let mut details = Vec::new();
    let mut odd = 0.0;
    let mut flip: f64 = 0.0;
    match basis {
        Basis::Z => {
            for &(s, p) in dist.entries() {
                if s.count_ones() % 2 == 1 {
                    odd += p;
                    if details.len() < 10 {
                        details.push(format!("odd-parity state {s:#x} has probability {p:e}"));
                    }
                }
            }
        }
        Basis::X => {
            for &(s, p) in dist.entries() {
                let d = (p - dist.prob(full ^ s)).abs();
                if d > 1e-10 && details.len() < 10 {
                    details.push(format!("p({s:#x}) and its complement differ by {d:e}"));
                }
                flip = flip.max(d);
            }
        }
    }
    SymmetryReport {
        basis,
        odd_parity_mass: odd,
        max_flip_asymmetry: flip,
        passed: odd == 0.0 && flip < 1e-10,
        details,
    }
}
