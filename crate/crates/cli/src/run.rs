//! Running an experiment grid: one training run per (cell, seed), each in
//! its own directory, followed by seed averages per cell.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rbm_analysis::{ProxyConfig, ProxyMeasurer};
use rbm_core::params::{init, Snapshot};
use rbm_core::rng::stream;
use rbm_core::EnumerationCap;
use rbm_train::measure::{EmpiricalDelta, ExactDelta, ExactTau, ModelCtot, TauMeasurer};
use rbm_train::{train, Algorithm, Measurer, TrainConfig, TrainingData};

use crate::config::{DeltaMode, ExperimentConfig, TauMode};
use crate::error::{CliError, Result};
use crate::output::{self, fmt_f64, Row};
use crate::target::{prepare, Prepared};

/// Environment variable holding the number of runs executed concurrently.
pub const THREADS_ENV: &str = "RBM_THREADS";

pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// One point of the hyperparameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: String,
    pub hidden: usize,
    pub eta: f64,
    pub batch_size: usize,
    pub n_cd: usize,
    pub algorithm: Algorithm,
}

pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let g = &cfg.grid;
    let mut out = Vec::new();
    for alg in &g.algorithm {
        for &hidden in &g.hidden {
            for &eta in &g.eta {
                for &batch_size in &g.batch_size {
                    for &n_cd in &g.n_cd {
                        let id = match alg {
                            Algorithm::ExactFlow { .. } => format!("{}_N{hidden}", alg.label()),
                            _ => format!("{}_N{hidden}_eta{}_B{batch_size}_k{n_cd}", alg.label(), fmt_f64(eta)),
                        };
                        let cell = Cell {
                            id,
                            hidden,
                            eta,
                            batch_size,
                            n_cd,
                            algorithm: alg.clone(),
                        };
                        if !out.iter().any(|c: &Cell| c.id == cell.id) {
                            out.push(cell);
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_id: String,
    pub seed: u64,
    pub dir: PathBuf,
    pub rows: Vec<Row>,
    pub error: Option<String>,
    pub capacity: bool,
    pub resumed: bool,
}

impl RunOutcome {
    pub fn unreliable_tau(&self) -> bool {
        self.rows.iter().any(|r| r.tau_reliable == Some(false))
    }
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub cell: Cell,
    pub runs: Vec<RunOutcome>,
    pub averaged: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub output: PathBuf,
    pub cells: Vec<CellOutcome>,
}

impl ExperimentOutcome {
    pub fn failed(&self) -> usize {
        self.cells
            .iter()
            .flat_map(|c| &c.runs)
            .filter(|r| r.error.is_some())
            .count()
    }

    pub fn total(&self) -> usize {
        self.cells.iter().map(|c| c.runs.len()).sum()
    }

    pub fn unreliable_tau(&self) -> bool {
        self.cells.iter().flat_map(|c| &c.runs).any(|r| r.unreliable_tau())
    }

    /// Converts failed runs into an error carrying the right exit code.
    pub fn into_result(self) -> Result<Self> {
        let failed = self.failed();
        if failed > 0 {
            let capacity = self.cells.iter().flat_map(|c| &c.runs).any(|r| r.capacity);
            return Err(CliError::Runs {
                failed,
                total: self.total(),
                capacity,
            });
        }
        Ok(self)
    }
}

const DONE_MARKER: &str = "done";

fn config_digest(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

fn run_one(cfg: &ExperimentConfig, data: &Prepared, cell: &Cell, seed: u64, dir: &Path) -> Result<Vec<Row>> {
    let run_id = format!("{}_s{seed}", cell.id);
    let cap = EnumerationCap(cfg.measure.cap);
    let flow = matches!(cell.algorithm, Algorithm::ExactFlow { .. });
    let params0 = init(
        &cfg.init,
        data.m,
        cell.hidden,
        data.train.as_ref(),
        &mut stream(seed, 100),
    )?;
    let tc = TrainConfig {
        algorithm: cell.algorithm.clone(),
        eta: cell.eta,
        batch_size: cell.batch_size,
        n_cd: cell.n_cd,
        epochs: cfg.grid.epochs,
        persistent_chains: cfg.grid.persistent_chains,
        schedule: cfg.schedule.clone(),
        seed,
        flow: cfg.flow.clone(),
    };
    let missing = |what: &str| CliError::Config(format!("{what} is not available for this target"));
    let mut measurers: Vec<Box<dyn Measurer + '_>> = Vec::new();
    match cfg.measure.delta {
        DeltaMode::Exact => {
            let target = data.table.as_ref().ok_or_else(|| missing("an exact loss"))?;
            measurers.push(Box::new(ExactDelta { target, cap }));
        }
        DeltaMode::Empirical => measurers.push(Box::new(EmpiricalDelta {
            data: data.test.as_ref().ok_or_else(|| missing("a test set"))?,
            column: "delta_test".into(),
            primary: true,
            cap,
        })),
        DeltaMode::None => {}
    }
    if cfg.measure.train_delta {
        measurers.push(Box::new(EmpiricalDelta {
            data: data.train.as_ref().ok_or_else(|| missing("a training set"))?,
            column: "delta_train".into(),
            primary: false,
            cap,
        }));
    }
    match cfg.tau.mode {
        TauMode::Exact => measurers.push(Box::new(ExactTau)),
        TauMode::Sampled => measurers.push(Box::new(TauMeasurer::new(cfg.tau.protocol.clone(), seed))),
        TauMode::None => {}
    }
    if cfg.measure.ctot_model {
        measurers.push(Box::new(ModelCtot { cap }));
    }
    if let Some(p) = &cfg.proxy {
        let test = data.test.as_ref().ok_or_else(|| missing("a test set"))?;
        let pc = ProxyConfig {
            shape: p.shape.or(cfg.target.shape()),
            ..p.clone()
        };
        measurers.push(Box::new(ProxyMeasurer::new(test, pc, seed)?));
    }
    let training = if flow {
        TrainingData::Table(data.table.as_ref().ok_or_else(|| missing("the exact flow"))?)
    } else {
        TrainingData::Samples(data.train.as_ref().ok_or_else(|| missing("a training set"))?)
    };
    let snap_dir = dir.join("snapshots");
    if cfg.measure.snapshots {
        std::fs::create_dir_all(&snap_dir)?;
    }
    let mut rows = Vec::new();
    train(&tc, training, params0, &mut measurers, |rec, params| {
        rows.push(Row::from_record(&run_id, seed, rec));
        if cfg.measure.snapshots {
            let s = Snapshot::new(params, &cfg.init, seed, Some(rec.epoch));
            let f = std::fs::File::create(snap_dir.join(format!("epoch_{}.json", fmt_f64(rec.epoch))))
                .map_err(rbm_core::Error::from)?;
            s.write(std::io::BufWriter::new(f))?;
        }
        Ok(())
    })?;
    Ok(rows)
}

fn job(cfg: &ExperimentConfig, data: &Prepared, cell: &Cell, seed: u64, root: &Path, digest: &str) -> RunOutcome {
    let dir = root.join(&cell.id).join(format!("seed_{seed}"));
    let mut outcome = RunOutcome {
        run_id: format!("{}_s{seed}", cell.id),
        seed,
        dir: dir.clone(),
        rows: Vec::new(),
        error: None,
        capacity: false,
        resumed: false,
    };
    let csv_path = dir.join("trajectory.csv");
    let marker = dir.join(DONE_MARKER);
    if std::fs::read_to_string(&marker).ok().as_deref() == Some(digest) {
        if let Ok(rows) = output::read_trajectory(&csv_path) {
            outcome.rows = rows;
            outcome.resumed = true;
            return outcome;
        }
    }
    let result = (|| -> Result<Vec<Row>> {
        std::fs::create_dir_all(&dir)?;
        let _ = std::fs::remove_file(&marker);
        let _ = std::fs::remove_file(dir.join("error.txt"));
        let rows = run_one(cfg, data, cell, seed, &dir)?;
        let mut buf = Vec::new();
        output::write_trajectory(&mut buf, &rows)?;
        write_atomic(&csv_path, &buf)?;
        std::fs::write(&marker, digest)?;
        Ok(rows)
    })();
    match result {
        Ok(rows) => outcome.rows = rows,
        Err(e) => {
            outcome.capacity = e.exit_code() == crate::error::exit::CAPACITY;
            let msg = e.to_string();
            let _ = std::fs::create_dir_all(&dir);
            let _ = std::fs::write(dir.join("error.txt"), format!("{msg}\n"));
            eprintln!("run {} failed: {msg}", outcome.run_id);
            outcome.error = Some(msg);
        }
    }
    outcome
}

/// Runs every (cell, seed) pair with up to `threads` runs at once. Failed
/// runs are reported in the outcome and do not stop the others; completed
/// runs of an identical configuration are reused.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let data = prepare(cfg)?;
    let root = cfg.output.clone();
    std::fs::create_dir_all(&root)?;
    let resolved = cfg.to_toml();
    std::fs::write(root.join("config.resolved.toml"), &resolved)?;
    std::fs::write(root.join("trajectory.schema.json"), output::TRAJECTORY_SCHEMA)?;
    std::fs::write(root.join("averaged.schema.json"), output::AVERAGED_SCHEMA)?;
    let digest = config_digest(&resolved);
    let cells = cells(cfg);
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results: Mutex<Vec<Option<RunOutcome>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(c, seed)) = jobs.get(k) else { break };
                let out = job(cfg, &data, &cells[c], seed, &root, &digest);
                results.lock().expect("no poisoned lock")[k] = Some(out);
            });
        }
    });
    let mut results = results.into_inner().expect("no poisoned lock").into_iter();
    let mut outcome = ExperimentOutcome {
        output: root.clone(),
        cells: Vec::new(),
    };
    for cell in cells {
        let runs: Vec<RunOutcome> = cfg
            .seeds
            .iter()
            .map(|_| results.next().flatten().expect("job ran"))
            .collect();
        let good: Vec<Vec<Row>> = runs
            .iter()
            .filter(|r| r.error.is_none())
            .map(|r| r.rows.clone())
            .collect();
        let averaged = if good.is_empty() {
            None
        } else {
            let path = root.join(&cell.id).join("averaged.csv");
            let mut buf = Vec::new();
            output::write_averaged(&mut buf, &output::average_runs(&good))?;
            write_atomic(&path, &buf)?;
            Some(path)
        };
        outcome.cells.push(CellOutcome { cell, runs, averaged });
    }
    Ok(outcome)
}
