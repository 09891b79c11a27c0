use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::Context;
use dynkp_core::dataset::write_synthetic_dataset;
use dynkp_core::evaluation::{ate_rmse, format_residuals_csv, read_tum, write_tum, AlignmentKind, AteResult, EvalError, EvalMetrics};
use dynkp_core::odometry::SequenceOutput;
use dynkp_core::simulator::{SimError, DEFAULT_INTRINSICS};
use dynkp_core::{generate_sequence, run_sequence, Dataset, FilterFlags, OdometryError, SceneConfig, VoConfig};

use crate::config::RunConfig;
use crate::error::CliError;

pub const TRAJECTORY_FILE: &str = "trajectory.txt";
pub const REPORTS_FILE: &str = "reports.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const RESIDUALS_FILE: &str = "residuals.csv";
pub const ABLATION_FILE: &str = "ablation.csv";

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display())).map_err(CliError::Data)
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display())).map_err(CliError::Data)
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::NoOverlap => CliError::numerical(e),
        other => CliError::data(other),
    }
}

struct Prepared {
    dataset: Dataset,
    vo: VoConfig,
}

fn prepare(config: &RunConfig) -> Result<Prepared, CliError> {
    let dataset = Dataset::open(&config.dataset, config.masks.as_deref()).map_err(CliError::data)?;
    let intrinsics = match config.intrinsics.or(dataset.intrinsics) {
        Some(k) => k,
        None => {
            log::warn!("no calibration given; assuming {DEFAULT_INTRINSICS:?}");
            DEFAULT_INTRINSICS
        }
    };
    let vo = VoConfig { filtering: config.filtering, filter: config.filter.clone(), intrinsics };
    Ok(Prepared { dataset, vo })
}

fn odometry(p: &Prepared, config: &RunConfig) -> Result<SequenceOutput, CliError> {
    let frames = p.dataset.frames(&config.detector, &config.person_classes);
    run_sequence(frames, &p.vo).map_err(|e| match e {
        OdometryError::Input(_) | OdometryError::EmptySequence | OdometryError::NonMonotonicTimestamp { .. } => {
            CliError::data(e)
        }
        other => CliError::numerical(other),
    })
}

/// What `run` produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub frames: usize,
    pub tracking_lost: usize,
    pub unclassified: usize,
    /// Present when the dataset has ground truth.
    pub ate: Option<AteResult>,
}

/// Runs filtering and odometry over a dataset and writes the trajectory, the
/// per-frame reports and, with ground truth, the ATE metrics and residuals.
pub fn cmd_run(config: &RunConfig) -> Result<RunSummary, CliError> {
    let p = prepare(config)?;
    let gt = p.dataset.ground_truth().map_err(CliError::data)?;
    let out = odometry(&p, config)?;

    create_dir(&config.out)?;
    write_tum(&config.out.join(TRAJECTORY_FILE), &out.trajectory)
        .with_context(|| format!("writing {}", config.out.join(TRAJECTORY_FILE).display()))
        .map_err(CliError::Data)?;
    let mut reports = String::new();
    for r in &out.reports {
        reports.push_str(&r.to_json_line());
        reports.push('\n');
    }
    write_file(&config.out.join(REPORTS_FILE), &reports)?;

    let ate = match gt {
        Some(gt) => {
            let result = ate_rmse(&out.trajectory, &gt, config.alignment, config.max_dt).map_err(eval_error)?;
            write_file(&config.out.join(METRICS_FILE), &EvalMetrics::new(&result, config.alignment).to_json())?;
            write_file(&config.out.join(RESIDUALS_FILE), &format_residuals_csv(&result.residuals))?;
            Some(result)
        }
        None => None,
    };
    Ok(RunSummary {
        frames: out.trajectory.len(),
        tracking_lost: out.tracking_lost,
        unclassified: out.unclassified,
        ate,
    })
}

/// Generates a synthetic sequence and persists it as a dataset.
pub fn cmd_simulate(scene: &SceneConfig, out: &Path) -> Result<(), CliError> {
    let seq = generate_sequence(scene).map_err(|e| match e {
        SimError::Config(_) => CliError::usage(e.to_string()),
        other => CliError::numerical(other),
    })?;
    write_synthetic_dataset(&seq, out).map_err(CliError::data)
}

/// Compares two TUM trajectories. Returns the metrics JSON.
pub fn cmd_eval(
    estimate: &Path,
    ground_truth: &Path,
    mode: AlignmentKind,
    max_dt: f64,
    residuals: Option<&Path>,
) -> Result<String, CliError> {
    let read = |p: &Path| {
        read_tum(p).map_err(|e| match e {
            EvalError::Io(_) | EvalError::Parse { .. } => {
                CliError::Data(anyhow::Error::new(e).context(p.display().to_string()))
            }
            other => eval_error(other),
        })
    };
    let (est, gt) = (read(estimate)?, read(ground_truth)?);
    let result = ate_rmse(&est, &gt, mode, max_dt).map_err(eval_error)?;
    if let Some(path) = residuals {
        write_file(path, &format_residuals_csv(&result.residuals))?;
    }
    Ok(EvalMetrics::new(&result, mode).to_json())
}

/// The four filter configurations compared by `ablate`.
pub const ABLATION_CONFIGS: [(&str, FilterFlags); 4] = [
    ("people", FilterFlags { people: true, things: false, unknown: false }),
    ("people+things", FilterFlags { people: true, things: true, unknown: false }),
    ("people+unknown", FilterFlags { people: true, things: false, unknown: true }),
    ("all", FilterFlags { people: true, things: true, unknown: true }),
];

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub name: &'static str,
    pub flags: FilterFlags,
    pub ate_rmse: f64,
    pub n_pairs: usize,
    pub tracking_lost: usize,
    pub unclassified: usize,
}

pub fn format_ablation_csv(rows: &[AblationRow]) -> String {
    let on = |b: bool| if b { "on" } else { "off" };
    let mut out = String::from("configuration,people,things,unknown,ate_rmse,n_pairs,tracking_lost,unclassified\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.name,
            on(r.flags.people),
            on(r.flags.things),
            on(r.flags.unknown),
            r.ate_rmse,
            r.n_pairs,
            r.tracking_lost,
            r.unclassified
        )
        .unwrap();
    }
    out
}

/// Runs every ablation configuration (concurrently) and writes `ablation.csv`.
/// The stage flags of `config` are ignored.
pub fn cmd_ablate(config: &RunConfig) -> Result<Vec<AblationRow>, CliError> {
    let p = prepare(config)?;
    let gt = p
        .dataset
        .ground_truth()
        .map_err(CliError::data)?
        .ok_or_else(|| CliError::data(anyhow::anyhow!("{} has no ground truth", p.dataset.root.display())))?;

    let results: Vec<Result<SequenceOutput, CliError>> = thread::scope(|scope| {
        let handles: Vec<_> = ABLATION_CONFIGS
            .iter()
            .map(|&(_, flags)| {
                let mut vo = p.vo.clone();
                vo.filtering = true;
                vo.filter.flags = flags;
                let run = Prepared { dataset: p.dataset.clone(), vo };
                scope.spawn(move || odometry(&run, config))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("ablation run panicked")).collect()
    });

    let mut rows = Vec::new();
    for ((name, flags), result) in ABLATION_CONFIGS.iter().zip(results) {
        let out = result?;
        let ate = ate_rmse(&out.trajectory, &gt, config.alignment, config.max_dt).map_err(eval_error)?;
        rows.push(AblationRow {
            name,
            flags: *flags,
            ate_rmse: ate.rmse,
            n_pairs: ate.pairs,
            tracking_lost: out.tracking_lost,
            unclassified: out.unclassified,
        });
    }
    create_dir(&config.out)?;
    write_file(&config.out.join(ABLATION_FILE), &format_ablation_csv(&rows))?;
    Ok(rows)
}

/// Output paths written by [`cmd_run`] into `out`.
pub fn run_outputs(out: &Path, with_ground_truth: bool) -> Vec<PathBuf> {
    let mut files = vec![out.join(TRAJECTORY_FILE), out.join(REPORTS_FILE)];
    if with_ground_truth {
        files.extend([out.join(METRICS_FILE), out.join(RESIDUALS_FILE)]);
    }
    files
}
