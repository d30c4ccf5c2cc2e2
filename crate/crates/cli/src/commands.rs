//! The subcommands, as library functions returning an exit code.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use rbm_analysis::proxy::model_samples as model_samples_for;
use rbm_analysis::tradeoff::bound_constant;
use rbm_analysis::{
    analyze, calibrate_sigma, default_sigma_grid, rescale_collapse, CollapseCurve, FitError, FitSummary, ProxyConfig,
    ProxyMeasurer, Stage, StagePoint,
};
use rbm_core::exact::exact_loss;
use rbm_core::params::Snapshot;
use rbm_core::rng::stream;
use rbm_core::{EnumerationCap, RbmParams, TabulatedDistribution};
use rbm_mcmc::autocorr::{estimate_tau, exact_unit_tau};
use rbm_mcmc::TauProtocol;
use rbm_train::{flow_rhs, FlowOrder};

use crate::config::ExperimentConfig;
use crate::error::{exit, CliError, Result};
use crate::output::{self, Row};
use crate::run::{run_experiment, ExperimentOutcome};
use crate::target::{prepare, target_info};

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

pub fn cmd_target_info(spec: &crate::config::TargetSpec) -> Result<i32> {
    print_json(&target_info(spec)?)?;
    Ok(exit::OK)
}

#[derive(Serialize)]
struct RunLine<'a> {
    run_id: &'a str,
    dir: &'a Path,
    points: usize,
    resumed: bool,
    error: Option<&'a str>,
}

fn report(outcome: &ExperimentOutcome) -> Result<()> {
    let lines: Vec<RunLine> = outcome
        .cells
        .iter()
        .flat_map(|c| &c.runs)
        .map(|r| RunLine {
            run_id: &r.run_id,
            dir: &r.dir,
            points: r.rows.len(),
            resumed: r.resumed,
            error: r.error.as_deref(),
        })
        .collect();
    print_json(&lines)
}

/// Runs the grid; exit code 2 when some autocorrelation estimate was unreliable.
pub fn cmd_train(cfg: &ExperimentConfig, threads: usize) -> Result<i32> {
    let outcome = run_experiment(cfg, threads)?;
    report(&outcome)?;
    let outcome = outcome.into_result()?;
    Ok(if outcome.unreliable_tau() {
        exit::UNRELIABLE_TAU
    } else {
        exit::OK
    })
}

#[derive(Debug, Serialize)]
pub struct TauAudit {
    pub tau: f64,
    pub spread: f64,
    pub reliable: bool,
    pub degenerate: bool,
    pub n_max: usize,
    pub steps_per_chain: usize,
    pub burn_in: usize,
    pub note: Option<String>,
    /// Spectral value from the exact kernel, for machines small enough.
    pub exact_tau: Option<f64>,
}

pub fn tau_audit(
    params: &RbmParams,
    protocol: &TauProtocol,
    seed: u64,
    diagnostics: Option<&Path>,
) -> Result<TauAudit> {
    let r = estimate_tau(params, protocol, seed)?;
    if let Some(p) = diagnostics {
        r.diagnostics
            .write_table(std::io::BufWriter::new(std::fs::File::create(p)?))?;
    }
    let exact_tau = if params.m + params.n <= 20 {
        exact_unit_tau(params).ok()
    } else {
        None
    };
    Ok(TauAudit {
        tau: r.estimate.tau,
        spread: r.estimate.spread,
        reliable: r.estimate.reliable,
        degenerate: r.estimate.degenerate,
        n_max: r.estimate.n_max_used,
        steps_per_chain: r.diagnostics.steps_per_chain,
        burn_in: r.diagnostics.burn_in,
        note: r.diagnostics.note,
        exact_tau,
    })
}

pub fn load_snapshot(path: &Path) -> Result<RbmParams> {
    let f = std::fs::File::open(path)?;
    Ok(Snapshot::read(std::io::BufReader::new(f))?.params()?)
}

pub fn cmd_tau(snapshot: &Path, protocol: &TauProtocol, seed: u64, diagnostics: Option<&Path>) -> Result<i32> {
    let audit = tau_audit(&load_snapshot(snapshot)?, protocol, seed, diagnostics)?;
    print_json(&audit)?;
    Ok(if audit.reliable { exit::OK } else { exit::UNRELIABLE_TAU })
}

/// Rows of a per-run or seed-averaged trajectory file as stage points.
pub fn stage_points(rows: &[Row]) -> Vec<StagePoint> {
    let mut pts: Vec<StagePoint> = rows
        .iter()
        .filter_map(|r| match (r.delta, r.tau) {
            (Some(d), Some(t)) if d.is_finite() && t.is_finite() => Some(StagePoint {
                epoch: r.epoch,
                delta: d,
                tau: t,
                train_delta: r.extra.get("delta_train").copied(),
            }),
            _ => None,
        })
        .collect();
    pts.sort_by(|a, b| a.epoch.total_cmp(&b.epoch));
    pts
}

#[derive(Debug, Serialize)]
pub struct TradeoffReport {
    pub trajectory: PathBuf,
    #[serde(flatten)]
    pub summary: FitSummary,
    /// `min Δτ^α` at the requested fixed exponent.
    pub c_at_fixed_alpha: Option<(f64, f64)>,
    pub gap_opened: bool,
    pub stages: Vec<(f64, Stage)>,
}

pub fn tradeoff_report(path: &Path, ctot: f64, fixed_alpha: Option<f64>) -> Result<TradeoffReport> {
    let rows = output::read_trajectory(path)?;
    let pts = stage_points(&rows);
    if pts.is_empty() {
        return Err(FitError::TooFewPoints(0).into());
    }
    let (fit, stages) = analyze(&pts, ctot)?;
    let pairs: Vec<(f64, f64)> = pts.iter().map(|p| (p.delta, p.tau)).collect();
    Ok(TradeoffReport {
        trajectory: path.to_path_buf(),
        summary: FitSummary::new(&fit, &stages),
        c_at_fixed_alpha: fixed_alpha.map(|a| (a, bound_constant(&pairs, a))),
        gap_opened: stages.gap_opened,
        stages: pts.iter().map(|p| p.epoch).zip(stages.labels.iter().copied()).collect(),
    })
}

#[derive(Debug, Serialize)]
struct CollapseOut {
    labels: Vec<String>,
    pairwise: Vec<(usize, usize, f64)>,
    max_distance: Option<f64>,
}

/// Fits every trajectory; with several, also reports their collapse.
pub fn cmd_tradeoff(paths: &[PathBuf], ctots: &[f64], fixed_alpha: Option<f64>, output: Option<&Path>) -> Result<i32> {
    if paths.is_empty() {
        return Err(FitError::TooFewPoints(0).into());
    }
    if !(ctots.len() == 1 || ctots.len() == paths.len()) {
        return Err(CliError::Config("give one C_tot or one per trajectory".into()));
    }
    let ctot = |k: usize| if ctots.len() == 1 { ctots[0] } else { ctots[k] };
    let mut reports = Vec::new();
    let mut curves = Vec::new();
    for (k, p) in paths.iter().enumerate() {
        let r = tradeoff_report(p, ctot(k), fixed_alpha)?;
        let pts = stage_points(&output::read_trajectory(p)?);
        let pre = r.stages.iter().take_while(|s| s.1 != Stage::Degradation).count();
        curves.push(CollapseCurve {
            label: p.display().to_string(),
            ctot: ctot(k),
            points: pts.iter().map(|q| (q.tau, q.delta)).collect(),
            pre_degradation: pre,
        });
        reports.push(r);
    }
    print_json(&reports)?;
    if let Some(out) = output {
        let summaries: Vec<&FitSummary> = reports.iter().map(|r| &r.summary).collect();
        let f = std::fs::File::create(out)?;
        if summaries.len() == 1 {
            serde_json::to_writer_pretty(f, summaries[0])?;
        } else {
            serde_json::to_writer_pretty(f, &summaries)?;
        }
    }
    if curves.len() > 1 {
        let c = rescale_collapse(&curves, 1.1);
        print_json(&CollapseOut {
            labels: curves.iter().map(|c| c.label.clone()).collect(),
            pairwise: c.pairwise,
            max_distance: c.max_distance,
        })?;
    }
    Ok(exit::OK)
}

/// Euclidean relative error between the infinite-order flow and a central
/// finite difference of `−Δ_θ`.
pub fn gradient_check(params: &RbmParams, target: &TabulatedDistribution, h: f64) -> Result<f64> {
    let rhs = flow_rhs(params, &target.to_dense(), FlowOrder::INFINITE)?.to_vector();
    let v = params.to_vector();
    let cap = EnumerationCap::default();
    let mut diff = 0.0;
    let mut norm = 0.0;
    for k in 0..v.len() {
        let (mut up, mut dn) = (v.clone(), v.clone());
        up[k] += h;
        dn[k] -= h;
        let lu = exact_loss(&RbmParams::from_vector(params.m, params.n, &up), target, cap)?;
        let ld = exact_loss(&RbmParams::from_vector(params.m, params.n, &dn), target, cap)?;
        let fd = -(lu - ld) / (2.0 * h);
        diff += (rhs[k] - fd).powi(2);
        norm += rhs[k] * rhs[k];
    }
    Ok((diff / norm).sqrt())
}

/// Exact-flow runs on a mini pattern; optionally prints the gradient check
/// at every run's initial machine first.
pub fn cmd_flow(cfg: &ExperimentConfig, threads: usize, check: bool) -> Result<i32> {
    if check {
        let data = prepare(cfg)?;
        let table = data
            .table
            .as_ref()
            .ok_or_else(|| CliError::Config("the exact flow needs a tabulated target".into()))?;
        for &n in &cfg.grid.hidden {
            for &seed in &cfg.seeds {
                let p = rbm_core::params::init(&cfg.init, data.m, n, None, &mut stream(seed, 100))?;
                println!(
                    "gradient check N={n} seed={seed}: relative error {:e}",
                    gradient_check(&p, table, 1e-5)?
                );
            }
        }
    }
    if cfg
        .grid
        .algorithm
        .iter()
        .any(|a| !matches!(a, rbm_train::Algorithm::ExactFlow { .. }))
    {
        return Err(CliError::Config("flow runs take exact_flow algorithms only".into()));
    }
    cmd_train(cfg, threads)
}

#[derive(Debug, Serialize)]
pub struct ProxyReport {
    pub calibration: Option<rbm_analysis::Calibration>,
    pub values: Vec<(String, f64)>,
}

/// σ calibration (test against training set) and, given a snapshot, the
/// proxy losses of that machine.
pub fn proxy_report(
    cfg: &ExperimentConfig,
    snapshot: Option<&Path>,
    calibrate: bool,
    seed: u64,
) -> Result<ProxyReport> {
    let data = prepare(cfg)?;
    let test = data
        .test
        .as_ref()
        .ok_or_else(|| CliError::Config("proxy metrics need a test set".into()))?;
    let calibration = if calibrate {
        let train = data
            .train
            .as_ref()
            .ok_or_else(|| CliError::Config("calibration needs a training set".into()))?;
        Some(calibrate_sigma(test, train, &default_sigma_grid())?)
    } else {
        None
    };
    let mut values = Vec::new();
    if let Some(s) = snapshot {
        let params = load_snapshot(s)?;
        let base = cfg.proxy.clone().unwrap_or_default();
        let pc = ProxyConfig {
            shape: base.shape.or(cfg.target.shape()),
            sigma: calibration.as_ref().map_or(base.sigma, |c| c.sigma),
            ..base
        };
        let model = model_samples_for(&params, &pc, &mut stream(seed, 11))?;
        let m = ProxyMeasurer::new(test, pc, seed)?;
        values = m
            .evaluate(&model)?
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
    }
    Ok(ProxyReport { calibration, values })
}

pub fn cmd_proxy_metrics(cfg: &ExperimentConfig, snapshot: Option<&Path>, calibrate: bool, seed: u64) -> Result<i32> {
    print_json(&proxy_report(cfg, snapshot, calibrate, seed)?)?;
    Ok(exit::OK)
}
