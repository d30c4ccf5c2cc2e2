use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rbm_cli::commands;
use rbm_cli::config::{preset, ExperimentConfig, TargetSpec};
use rbm_cli::error::{exit, CliError, Result};
use rbm_cli::run::THREADS_ENV;
use rbm_mcmc::TauProtocol;
use rbm_targets::Basis;

#[derive(Parser)]
#[command(
    name = "rbm",
    version,
    about = "Train RBMs and measure their accuracy-versus-sampling tradeoff"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where an experiment configuration comes from.
#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a shipped preset (fig2b_small, fig3b_small, fig3e, fig4bc_small, *_full).
    #[arg(long)]
    preset: Option<String>,
    /// Override a config key, e.g. `--set grid.epochs=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `output`).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated seeds (overrides `seeds`).
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Concurrent runs.
    #[arg(long, env = THREADS_ENV, default_value_t = 1)]
    threads: usize,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(o) = &self.output {
            overrides.push(format!("output={}", toml_string(&o.display().to_string())));
        }
        if !self.seeds.is_empty() {
            let list: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
            overrides.push(format!("seeds=[{}]", list.join(",")));
        }
        match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path, &overrides),
            (None, Some(name)) => ExperimentConfig::from_toml(preset(name)?, &overrides),
            (None, None) => Err(CliError::Config("give --config or --preset".into())),
        }
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Tfic,
    Hook,
    Digits,
    Mini,
    Mnist,
}

#[derive(Args)]
struct TargetArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Chain length (tfic) or pattern length (mini).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    g: f64,
    #[arg(long, default_value = "z")]
    basis: Basis,
    #[arg(long, default_value_t = 5)]
    side: usize,
    #[arg(long, default_value_t = 0.1)]
    q: f64,
    /// Directory holding the MNIST IDX files.
    #[arg(long)]
    path: Option<PathBuf>,
}

impl TargetArgs {
    fn spec(&self) -> Result<TargetSpec> {
        let need_m = || {
            self.m
                .ok_or_else(|| CliError::Config("--m is required for this target".into()))
        };
        Ok(match self.kind {
            Kind::Tfic => TargetSpec::Tfic {
                m: need_m()?,
                g: self.g,
                basis: self.basis,
            },
            Kind::Hook => TargetSpec::Hook {
                side: self.side,
                q: self.q,
            },
            Kind::Digits => TargetSpec::Digits { q: self.q },
            Kind::Mini => TargetSpec::Mini {
                m: need_m()?,
                q: self.q,
            },
            Kind::Mnist => TargetSpec::Mnist {
                path: self
                    .path
                    .clone()
                    .ok_or_else(|| CliError::Config("--path is required for mnist".into()))?,
            },
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Exact statistics of a target distribution.
    TargetInfo(TargetArgs),
    /// Train every grid cell for every seed.
    Train(ConfigArgs),
    /// Autocorrelation-time audit of a parameter snapshot.
    Tau {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5.0)]
        gamma: f64,
        #[arg(long, default_value_t = 4)]
        r_g: usize,
        #[arg(long, default_value_t = 3)]
        r_tau: usize,
        #[arg(long, default_value_t = 1 << 20)]
        max_steps: usize,
        /// Write the per-lag diagnostics table here.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Fit the power-law bound and classify learning stages.
    Tradeoff {
        /// Trajectory or seed-averaged CSV files.
        #[arg(long = "trajectory", required = true)]
        trajectories: Vec<PathBuf>,
        /// Target total correlation, once or per trajectory.
        #[arg(long, required = true, value_delimiter = ',')]
        ctot: Vec<f64>,
        /// Also report the tightest constant at this exponent.
        #[arg(long)]
        alpha: Option<f64>,
        /// Write the fit summary JSON here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Exact-flow runs on a small target.
    Flow {
        #[command(flatten)]
        config: ConfigArgs,
        /// Print the finite-difference gradient check first.
        #[arg(long)]
        check: bool,
    },
    /// Sample-based proxy losses and σ calibration.
    ProxyMetrics {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        snapshot: Option<std::path::PathBuf>,
        #[arg(long)]
        calibrate: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::TargetInfo(t) => commands::cmd_target_info(&t.spec()?),
        Command::Train(c) => commands::cmd_train(&c.load()?, c.threads),
        Command::Tau {
            snapshot,
            seed,
            gamma,
            r_g,
            r_tau,
            max_steps,
            diagnostics,
        } => {
            let protocol = TauProtocol {
                gamma,
                r_g,
                r_tau,
                max_steps,
                ..TauProtocol::default()
            };
            commands::cmd_tau(&snapshot, &protocol, seed, diagnostics.as_deref())
        }
        Command::Tradeoff {
            trajectories,
            ctot,
            alpha,
            output,
        } => commands::cmd_tradeoff(&trajectories, &ctot, alpha, output.as_deref()),
        Command::Flow { config, check } => commands::cmd_flow(&config.load()?, config.threads, check),
        Command::ProxyMetrics {
            config,
            snapshot,
            calibrate,
            seed,
        } => commands::cmd_proxy_metrics(&config.load()?, snapshot.as_deref(), calibrate, seed),
    }
}

fn main() -> ExitCode {
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    debug_assert!(code >= exit::OK);
    ExitCode::from(code as u8)
}
