//! Continuous-time limit of the exact gradient updates:
//! `ẇ_ij = Σ_x x_i σ(u_j(x)) [p(x) − p̂⁽ⁿ⁾(x)]`, with `ȧ` and `ḃ` analogous,
//! where `p̂⁽ⁿ⁾` is the distribution after `n` Gibbs steps started from the
//! target (`n = ∞` is the model marginal).
//!
//! Integration uses the Dormand–Prince 5(4) pair with adaptive steps. Steps
//! are clipped so that every requested output time is hit exactly.

use serde::{Deserialize, Serialize};

use rbm_core::exact::{model_table, CdStepper};
use rbm_core::params::logistic;
use rbm_core::{EnumerationCap, Error, RbmParams, TabulatedDistribution};

use crate::error::{Result, TrainError};

/// Chain length defining the negative phase of the flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FlowOrder {
    Steps(usize),
    /// Serialized as the string `"inf"`.
    Infinite(InfTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfTag {
    #[serde(rename = "inf")]
    Inf,
}

impl FlowOrder {
    pub const INFINITE: FlowOrder = FlowOrder::Infinite(InfTag::Inf);

    pub fn label(&self) -> String {
        match self {
            FlowOrder::Steps(n) => n.to_string(),
            FlowOrder::Infinite(_) => "inf".into(),
        }
    }
}

impl std::str::FromStr for FlowOrder {
    type Err = Error;
    fn from_str(s: &str) -> rbm_core::Result<Self> {
        match s {
            "inf" | "infinity" | "∞" => Ok(FlowOrder::INFINITE),
            n => n
                .parse()
                .map(FlowOrder::Steps)
                .map_err(|_| Error::invalid(format!("flow order must be a count or 'inf', got {n:?}"))),
        }
    }
}

/// `p̂⁽ⁿ⁾` as a dense table over all visible states.
pub fn negative_distribution(params: &RbmParams, target: &[f64], order: FlowOrder) -> Result<Vec<f64>> {
    Ok(match order {
        FlowOrder::Infinite(_) => model_table(params, EnumerationCap::default())?.to_dense(),
        FlowOrder::Steps(0) => target.to_vec(),
        FlowOrder::Steps(k) => {
            let stepper = CdStepper::new(params)?;
            let mut p = target.to_vec();
            for _ in 0..k {
                p = stepper.step(&p);
            }
            p
        }
    })
}

/// Right-hand side of the flow for a dense target table.
pub fn flow_rhs(params: &RbmParams, target: &[f64], order: FlowOrder) -> Result<RbmParams> {
    let m = params.m;
    if target.len() != 1usize << m {
        return Err(Error::DimensionMismatch {
            what: "dense target length",
            expected: 1 << m,
            got: target.len(),
        }
        .into());
    }
    let neg = negative_distribution(params, target, order)?;
    let n = params.n;
    let mut g = RbmParams::zeros(m, n);
    let mut x = vec![0u8; m];
    let mut u = vec![0.0; n];
    for (s, (&p, &q)) in target.iter().zip(&neg).enumerate() {
        let d = p - q;
        if d == 0.0 {
            continue;
        }
        rbm_core::state::unpack_into(s as u64, &mut x);
        params.hidden_field_into(&x, &mut u);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0 {
                continue;
            }
            g.a[i] += d;
            for (w, &uj) in g.w[i * n..(i + 1) * n].iter_mut().zip(&u) {
                *w += d * logistic(uj);
            }
        }
        for (b, &uj) in g.b.iter_mut().zip(&u) {
            *b += d * logistic(uj);
        }
    }
    Ok(g)
}

/// Integrator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step.
    pub h0: f64,
    /// Steps below `h_min · max(1, |t|)` abort the integration.
    pub h_min: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h0: 1e-3,
            h_min: 1e-14,
        }
    }
}

const A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
    &[
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights minus the embedded fourth-order weights.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Integrates the flow from `params0` at `t = 0` and calls `on_point` at
/// `t = 0` and at each of the (sorted, positive) `times`.
pub fn exact_flow_with<F>(
    params0: &RbmParams,
    target: &TabulatedDistribution,
    order: FlowOrder,
    times: &[f64],
    opts: &FlowOptions,
    mut on_point: F,
) -> Result<()>
where
    F: FnMut(f64, &RbmParams) -> Result<()>,
{
    let (m, n) = (params0.m, params0.n);
    if target.m() != m {
        return Err(Error::DimensionMismatch {
            what: "target visible units",
            expected: m,
            got: target.m(),
        }
        .into());
    }
    if times.windows(2).any(|w| w[1] <= w[0]) || times.first().is_some_and(|&t| t <= 0.0) {
        return Err(Error::invalid("flow output times must be positive and strictly increasing").into());
    }
    let dense = target.to_dense();
    let rhs =
        |y: &[f64]| -> Result<Vec<f64>> { Ok(flow_rhs(&RbmParams::from_vector(m, n, y), &dense, order)?.to_vector()) };
    let mut y = params0.to_vector();
    let dim = y.len();
    let mut t = 0.0;
    let mut h = opts.h0;
    let mut k1 = rhs(&y)?;
    on_point(0.0, params0)?;
    let mut stages: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    for &t_out in times {
        while t < t_out {
            let last = t + h >= t_out;
            let step = if last { t_out - t } else { h };
            stages[0].clone_from(&k1);
            let mut tmp = vec![0.0; dim];
            for s in 0..6 {
                for d in 0..dim {
                    let mut acc = 0.0;
                    for (r, &a) in A[s].iter().enumerate() {
                        acc += a * stages[r][d];
                    }
                    tmp[d] = y[d] + step * acc;
                }
                stages[s + 1] = rhs(&tmp)?;
            }
            // tmp now holds the fifth-order solution (the last stage row is its weights).
            let mut err = 0.0;
            for d in 0..dim {
                let e: f64 = (0..7).map(|s| E[s] * stages[s][d]).sum::<f64>() * step;
                let sc = opts.atol + opts.rtol * y[d].abs().max(tmp[d].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / dim as f64).sqrt();
            if !err.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch: t,
                    detail: "flow right-hand side became non-finite".into(),
                });
            }
            if err <= 1.0 {
                t = if last { t_out } else { t + step };
                y = tmp;
                k1 = stages[6].clone();
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 && last {
                // Keep the proposal size; a clipped final step says nothing about it.
                h = h.max(step * factor);
            } else {
                h = step * factor;
            }
            if h < opts.h_min * t.abs().max(1.0) {
                return Err(TrainError::StepUnderflow { t, h });
            }
        }
        on_point(t_out, &RbmParams::from_vector(m, n, &y))?;
    }
    Ok(())
}

/// Dense path `(t, θ(t))` at `t = 0` and each requested time.
pub fn exact_flow(
    params0: &RbmParams,
    target: &TabulatedDistribution,
    order: FlowOrder,
    times: &[f64],
    opts: &FlowOptions,
) -> Result<Vec<(f64, RbmParams)>> {
    let mut path = Vec::with_capacity(times.len() + 1);
    exact_flow_with(params0, target, order, times, opts, |t, p| {
        path.push((t, p.clone()));
        Ok(())
    })?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_parses() {
        assert_eq!("inf".parse::<FlowOrder>().unwrap(), FlowOrder::INFINITE);
        assert_eq!("3".parse::<FlowOrder>().unwrap(), FlowOrder::Steps(3));
        assert!("x".parse::<FlowOrder>().is_err());
        let json = serde_json::to_string(&FlowOrder::INFINITE).unwrap();
        assert_eq!(json, "\"inf\"");
    }

    #[test]
    fn matches_fine_euler_and_converges() {
        let target = TabulatedDistribution::new(1, vec![(0, 0.3), (1, 0.7)]).unwrap();
        let dense = target.to_dense();
        let p0 = RbmParams::new(1, 1, vec![0.2], vec![-0.1], vec![0.3]).unwrap();
        let path = exact_flow(
            &p0,
            &target,
            FlowOrder::INFINITE,
            &[1.0, 200.0],
            &FlowOptions::default(),
        )
        .unwrap();
        let mut y = p0.clone();
        let dt = 1e-5;
        for _ in 0..100_000 {
            let g = flow_rhs(&y, &dense, FlowOrder::INFINITE).unwrap();
            y.add_scaled(&g, dt);
        }
        for (a, b) in path[1].1.to_vector().iter().zip(y.to_vector()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
        let model = model_table(&path[2].1, EnumerationCap::default()).unwrap();
        assert!((model.prob(1) - 0.7).abs() < 1e-6);
    }
}
