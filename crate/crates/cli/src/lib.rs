//! `dynkp` command-line front end.
//!
//! Subcommands:
//! - `run`: filter keypoints and track a dataset, writing `trajectory.txt`,
//!   `reports.jsonl` and, with ground truth, `metrics.json` and `residuals.csv`
//! - `simulate`: write a synthetic dataset from a scene file or preset
//! - `eval`: ATE between two TUM trajectories, printed as JSON
//! - `ablate`: compare the four filter configurations in `ablation.csv`
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

pub mod commands;
pub mod config;
pub mod error;
pub mod scene;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_alignment, Settings};
use crate::error::{CliError, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "dynkp", version, about = "Dynamic keypoint filtering for visual odometry")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track a dataset with dynamic keypoints removed.
    Run(RunArgs),
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Absolute trajectory error of an estimate against ground truth.
    Eval(EvalArgs),
    /// Compare people / people+things / people+unknown / all filters.
    Ablate(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// `key = value` file; flags given here take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Mask directory (default `<dataset>/masks`).
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stage switches, e.g. `--filter people=on things=off unknown=off`.
    #[arg(long, num_args = 1.., value_name = "STAGE=on|off")]
    pub filter: Vec<String>,
    /// Epipolar distance threshold (px).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Also check background matches rejected by RANSAC.
    #[arg(long)]
    pub check_stuff: bool,
    /// Track with every match (baseline).
    #[arg(long)]
    pub no_filtering: bool,
    #[arg(long)]
    pub ransac_iterations: Option<usize>,
    #[arg(long)]
    pub ransac_threshold: Option<f64>,
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `fx fy cx cy`; overrides the dataset calibration.
    #[arg(long)]
    pub intrinsics: Option<String>,
    /// Alignment for ATE: sim3, se3 or none.
    #[arg(long)]
    pub alignment: Option<String>,
    /// Any other config key, as `key=value`.
    #[arg(long = "set", num_args = 1.., value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl RunArgs {
    pub fn settings(&self) -> Result<config::RunConfig, CliError> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            s.load_file(path)?;
        }
        s.apply_pairs(&self.set)?;
        s.apply_pairs(&self.filter)?;
        let mut pairs: Vec<(&str, String)> = Vec::new();
        let mut push = |k, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k, v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.to_string_lossy().into_owned());
        push("dataset", path(&self.dataset));
        push("masks", path(&self.masks));
        push("out", path(&self.out));
        push("threshold", self.threshold.map(|v| v.to_string()));
        push("ransac-iterations", self.ransac_iterations.map(|v| v.to_string()));
        push("ransac-threshold", self.ransac_threshold.map(|v| v.to_string()));
        push("iou-threshold", self.iou_threshold.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("intrinsics", self.intrinsics.clone());
        push("alignment", self.alignment.clone());
        push("check-stuff", self.check_stuff.then(|| "on".to_string()));
        push("filtering", self.no_filtering.then(|| "off".to_string()));
        for (k, v) in pairs {
            s.set(k, &v).map_err(CliError::usage)?;
        }
        s.finish()
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML scene file.
    #[arg(long, conflicts_with = "preset")]
    pub scene: Option<PathBuf>,
    /// static, person-box, unknown-object, ablation or dynamic.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Estimated trajectory (TUM).
    #[arg(long)]
    pub est: PathBuf,
    /// Ground-truth trajectory (TUM).
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value = "sim3")]
    pub mode: String,
    /// Association tolerance (s).
    #[arg(long, default_value_t = dynkp_core::evaluation::DEFAULT_MAX_TIME_DIFFERENCE)]
    pub max_dt: f64,
    /// Also write per-pose residuals as CSV.
    #[arg(long)]
    pub residuals: Option<PathBuf>,
    /// Also write the metrics JSON to a file.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => {
            let config = args.settings()?;
            let s = commands::cmd_run(&config)?;
            eprintln!(
                "{} frames, {} with tracking lost, {} unclassified",
                s.frames, s.tracking_lost, s.unclassified
            );
            if let Some(ate) = s.ate {
                eprintln!("ATE RMSE {:.6} m over {} poses", ate.rmse, ate.pairs);
            }
        }
        Command::Simulate(args) => {
            let mut scene = match (&args.scene, &args.preset) {
                (Some(path), _) => scene::load_scene(path)?,
                (None, Some(name)) => scene::preset(name)?,
                (None, None) => return Err(CliError::usage("give --scene FILE or --preset NAME")),
            };
            if let Some(seed) = args.seed {
                scene.seed = seed;
            }
            commands::cmd_simulate(&scene, &args.out)?;
        }
        Command::Eval(args) => {
            let mode = parse_alignment(&args.mode).map_err(CliError::usage)?;
            let json = commands::cmd_eval(&args.est, &args.gt, mode, args.max_dt, args.residuals.as_deref())?;
            if let Some(path) = &args.metrics {
                std::fs::write(path, &json).map_err(|e| CliError::data(anyhow::anyhow!("writing {}: {e}", path.display())))?;
            }
            println!("{json}");
        }
        Command::Ablate(args) => {
            let config = args.settings()?;
            for r in commands::cmd_ablate(&config)? {
                eprintln!("{:<16} ATE {:.6}", r.name, r.ate_rmse);
            }
        }
    }
    Ok(())
}

/// Parses arguments, runs the subcommand and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("dynkp: {e}");
            e.exit_code()
        }
    }
}
