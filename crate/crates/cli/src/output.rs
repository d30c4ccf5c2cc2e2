//! Trajectory CSV files: writing, reading back and seed averaging.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rbm_train::TrajectoryRecord;

use crate::error::{CliError, Result};

pub const TRAJECTORY_SCHEMA: &str = include_str!("../schemas/trajectory.schema.json");
pub const AVERAGED_SCHEMA: &str = include_str!("../schemas/averaged.schema.json");

const FIXED: [&str; 11] = [
    "run_id",
    "seed",
    "epoch",
    "delta",
    "delta_kind",
    "tau",
    "tau_spread",
    "tau_reliable",
    "ctot_model",
    "sigma_w",
    "n_cd",
];

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub run_id: String,
    pub seed: u64,
    pub epoch: f64,
    pub delta: Option<f64>,
    pub delta_kind: Option<String>,
    pub tau: Option<f64>,
    pub tau_spread: Option<f64>,
    pub tau_reliable: Option<bool>,
    pub ctot_model: Option<f64>,
    pub sigma_w: Option<f64>,
    pub n_cd: Option<usize>,
    pub extra: BTreeMap<String, f64>,
}

impl Row {
    pub fn from_record(run_id: &str, seed: u64, r: &TrajectoryRecord) -> Self {
        Self {
            run_id: run_id.to_string(),
            seed,
            epoch: r.epoch,
            delta: r.delta,
            delta_kind: r.delta_kind.map(|k| k.label().to_string()),
            tau: r.tau.map(|t| t.tau),
            tau_spread: r.tau.map(|t| t.spread),
            tau_reliable: r.tau.map(|t| t.reliable),
            ctot_model: r.ctot_model,
            sigma_w: Some(r.sigma_w),
            n_cd: r.n_cd,
            extra: r.proxies.clone(),
        }
    }
}

/// Shortest round-trip text, switching to exponent notation for very large
/// or small magnitudes.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if v != 0.0 && (v.abs() < 1e-4 || v.abs() >= 1e15) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| CliError::Core(rbm_core::Error::parse(format!("bad number {s:?}"))))
}

fn extra_columns(rows: &[Row]) -> Vec<String> {
    let set: BTreeSet<&String> = rows.iter().flat_map(|r| r.extra.keys()).collect();
    set.into_iter().cloned().collect()
}

pub fn write_trajectory<W: std::io::Write>(out: W, rows: &[Row]) -> Result<()> {
    let extra = extra_columns(rows);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIXED.iter().map(|s| s.to_string()).chain(extra.iter().cloned()))?;
    for r in rows {
        let mut rec = vec![
            r.run_id.clone(),
            r.seed.to_string(),
            fmt_f64(r.epoch),
            opt(r.delta),
            r.delta_kind.clone().unwrap_or_default(),
            opt(r.tau),
            opt(r.tau_spread),
            r.tau_reliable.map(|b| b.to_string()).unwrap_or_default(),
            opt(r.ctot_model),
            opt(r.sigma_w),
            r.n_cd.map(|n| n.to_string()).unwrap_or_default(),
        ];
        rec.extend(extra.iter().map(|k| opt(r.extra.get(k).copied())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Vec<Row>> {
    let mut rd = csv::Reader::from_path(path)?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let epoch_col = col("epoch").ok_or_else(|| CliError::Config(format!("{}: no epoch column", path.display())))?;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let get = |name: &str| col(name).map(|i| rec.get(i).unwrap_or("")).unwrap_or("");
        let mut extra = BTreeMap::new();
        for (i, h) in headers.iter().enumerate() {
            if !FIXED.contains(&h) {
                if let Some(v) = parse_opt(rec.get(i).unwrap_or(""))? {
                    extra.insert(h.to_string(), v);
                }
            }
        }
        rows.push(Row {
            run_id: get("run_id").to_string(),
            seed: get("seed").parse().unwrap_or(0),
            epoch: parse_opt(rec.get(epoch_col).unwrap_or(""))?.unwrap_or(f64::NAN),
            delta: parse_opt(get("delta"))?,
            delta_kind: Some(get("delta_kind").to_string()).filter(|s| !s.is_empty()),
            tau: parse_opt(get("tau"))?,
            tau_spread: parse_opt(get("tau_spread"))?,
            tau_reliable: get("tau_reliable").parse().ok(),
            ctot_model: parse_opt(get("ctot_model"))?,
            sigma_w: parse_opt(get("sigma_w"))?,
            n_cd: get("n_cd").parse().ok(),
            extra,
        });
    }
    Ok(rows)
}

/// Seed average at the epochs present in every run.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedRow {
    pub epoch: f64,
    pub runs: usize,
    pub values: BTreeMap<String, f64>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 || !mean.is_finite() {
        return (mean, 0.0);
    }
    (
        mean,
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt(),
    )
}

pub fn average_runs(runs: &[Vec<Row>]) -> Vec<AveragedRow> {
    if runs.is_empty() {
        return Vec::new();
    }
    let epochs: Vec<f64> = runs[0]
        .iter()
        .map(|r| r.epoch)
        .filter(|e| runs.iter().all(|run| run.iter().any(|r| r.epoch == *e)))
        .collect();
    let mut out = Vec::new();
    for e in epochs {
        let at: Vec<&Row> = runs
            .iter()
            .map(|run| run.iter().find(|r| r.epoch == e).unwrap())
            .collect();
        let mut values = BTreeMap::new();
        let mut put = |name: &str, xs: Vec<Option<f64>>, sd: bool| {
            if let Some(xs) = xs.into_iter().collect::<Option<Vec<f64>>>() {
                let (m, s) = mean_sd(&xs);
                values.insert(name.to_string(), m);
                if sd {
                    values.insert(format!("{name}_sd"), s);
                }
            }
        };
        put("delta", at.iter().map(|r| r.delta).collect(), true);
        put("tau", at.iter().map(|r| r.tau).collect(), true);
        put("ctot_model", at.iter().map(|r| r.ctot_model).collect(), false);
        put("sigma_w", at.iter().map(|r| r.sigma_w).collect(), false);
        let keys: BTreeSet<&String> = at.iter().flat_map(|r| r.extra.keys()).collect();
        for k in keys {
            put(k, at.iter().map(|r| r.extra.get(k).copied()).collect(), false);
        }
        out.push(AveragedRow {
            epoch: e,
            runs: runs.len(),
            values,
        });
    }
    out
}

const AVERAGED_FIXED: [&str; 6] = ["delta", "delta_sd", "tau", "tau_sd", "ctot_model", "sigma_w"];

pub fn write_averaged<W: std::io::Write>(out: W, rows: &[AveragedRow]) -> Result<()> {
    let fixed = AVERAGED_FIXED;
    let extra: BTreeSet<&String> = rows
        .iter()
        .flat_map(|r| r.values.keys())
        .filter(|k| !fixed.contains(&k.as_str()))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["epoch".to_string(), "runs".to_string()];
    header.extend(fixed.iter().map(|s| s.to_string()));
    header.extend(extra.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![fmt_f64(r.epoch), r.runs.to_string()];
        rec.extend(header[2..].iter().map(|k| opt(r.values.get(k).copied())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an averaged file back into trajectory rows (delta, tau and extras).
pub fn read_averaged(path: &Path) -> Result<Vec<Row>> {
    let rows = read_trajectory(path)?;
    Ok(rows
        .into_iter()
        .map(|mut r| {
            r.extra.remove("runs");
            r.extra.remove("delta_sd");
            r.extra.remove("tau_sd");
            r
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, epoch: f64, delta: f64) -> Row {
        Row {
            run_id: "r".into(),
            seed,
            epoch,
            delta: Some(delta),
            delta_kind: Some("exact".into()),
            tau: Some(1.5),
            tau_spread: Some(0.0),
            tau_reliable: Some(true),
            ctot_model: None,
            sigma_w: Some(0.1),
            n_cd: Some(1),
            extra: BTreeMap::from([("delta_cg_local".to_string(), f64::INFINITY)]),
        }
    }

    #[test]
    fn round_trip() {
        let rows = vec![row(1, 0.0, 1.0 / 3.0), row(1, 10.0, 1e-7)];
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &rows).unwrap();
        let dir = std::env::temp_dir().join(format!("rbm-out-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("t.csv");
        std::fs::write(&p, &buf).unwrap();
        assert_eq!(read_trajectory(&p).unwrap(), rows);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn averaging_uses_common_epochs() {
        let a = vec![row(1, 0.0, 1.0), row(1, 1.0, 3.0)];
        let b = vec![row(2, 0.0, 3.0)];
        let avg = average_runs(&[a, b]);
        assert_eq!(avg.len(), 1);
        assert_eq!(avg[0].values["delta"], 2.0);
        assert!((avg[0].values["delta_sd"] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(avg[0].values["delta_cg_local"], f64::INFINITY);
    }
}
