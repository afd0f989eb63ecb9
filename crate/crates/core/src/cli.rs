//! Command-line front end. Results go to files; progress and diagnostics go
//! to stderr.
//!
//! Exit status: 0 on success, 1 on usage or validation errors, 2 on data
//! errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::load_manifest;
use crate::error::{Error, Result};
use crate::pipeline::report::write_summary;
use crate::pipeline::{read_reports_json, write_outputs, Experiment, ExperimentPlan};
use crate::synthetic::{generate, write_fixture, SyntheticConfig};

#[derive(Debug, Parser)]
#[command(
    name = "brain-ensemble",
    version,
    about = "Ensemble brain-encoding experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a manifest and its tensors; print their shapes.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write the train/test split a run would use.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        group_by_passage: bool,
        #[arg(long)]
        force: bool,
    },
    /// Generate a synthetic dataset with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// JSON generator config; fields left out keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the generator seed and the recorded split seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Fit and evaluate every method of a plan.
    Run(RunArgs),
    /// Rebuild summary.csv and figure.svg from a reports.json.
    Report {
        /// A reports.json file or a run directory containing one.
        #[arg(long)]
        reports: PathBuf,
        /// Defaults to the directory holding the reports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the split seed of the manifest.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub p_values: Option<Vec<f64>>,
    #[arg(long)]
    pub pca_k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub group_by_passage: bool,
    #[arg(long)]
    pub literal_power_mean: bool,
    #[arg(long)]
    pub pc_per_voxel: bool,
    #[arg(long)]
    pub skip_baselines: bool,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Creates `dir`, refusing a non-empty one unless `force` is set.
fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if let Ok(mut entries) = fs::read_dir(dir) {
        if entries.next().is_some() && !force {
            return Err(Error::Usage(format!(
                "{} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Format(e.to_string()))
}

fn validate(manifest: &Path) -> Result<()> {
    let m = load_manifest(manifest)?;
    let data = m.load_data()?;
    println!("{:<10} {:<24} {:>8} {:>8}", "kind", "id", "rows", "cols");
    for t in &data.tasks {
        println!(
            "{:<10} {:<24} {:>8} {:>8}",
            "task",
            t.task_id(),
            t.n_samples(),
            t.dim()
        );
    }
    for r in &data.responses {
        let id = format!("{}/{}", r.subject_id(), r.roi_id());
        println!(
            "{:<10} {:<24} {:>8} {:>8}",
            "response",
            id,
            r.n_samples(),
            r.n_voxels()
        );
    }
    log::info!("manifest {} is consistent", manifest.display());
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut plan = match &args.plan {
        Some(path) => ExperimentPlan::from_json(&read_text(path)?)?,
        None => ExperimentPlan::default(),
    };
    if let Some(p) = args.p_values {
        plan.p_values = p;
    }
    if let Some(k) = args.pca_k {
        plan.pca_k = k;
    }
    if let Some(grid) = args.lambda_grid {
        plan.lambda_grid = grid;
    }
    if args.threads.is_some() {
        plan.threads = args.threads;
    }
    plan.group_by_passage |= args.group_by_passage;
    plan.literal_power_mean |= args.literal_power_mean;
    plan.pc_per_voxel |= args.pc_per_voxel;
    plan.skip_baselines |= args.skip_baselines;

    let manifest = load_manifest(&args.manifest)?;
    plan.validate(manifest.n_tasks())?;
    prepare_dir(&args.out, args.force)?;

    let experiment = Experiment::from_manifest(plan, &manifest, args.seed)?;
    log::info!(
        "fitting {} units over {} train / {} test rows",
        experiment.expected_report_count(),
        experiment.split().train_indices.len(),
        experiment.split().test_indices.len()
    );
    let reports = experiment.run()?;
    write_outputs(&args.out, &reports)?;

    // threads never affect results, so keep them out of the recorded plan
    let recorded = ExperimentPlan {
        threads: None,
        ..experiment.plan().clone()
    };
    write_text(&args.out.join("plan.json"), &to_json(&recorded)?)?;
    write_text(&args.out.join("split.json"), &to_json(experiment.split())?)?;
    log::info!("wrote {} reports to {}", reports.len(), args.out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { manifest } => validate(&manifest),
        Command::Split {
            manifest,
            out,
            seed,
            group_by_passage,
            force,
        } => {
            if out.exists() && !force {
                return Err(Error::Usage(format!(
                    "{} exists; pass --force to overwrite",
                    out.display()
                )));
            }
            let split = load_manifest(&manifest)?.split_spec(group_by_passage, seed)?;
            write_text(&out, &to_json(&split)?)?;
            log::info!(
                "{} train / {} test rows, seed {}",
                split.train_indices.len(),
                split.test_indices.len(),
                split.seed
            );
            Ok(())
        }
        Command::Synth {
            out,
            config,
            seed,
            force,
        } => {
            let mut cfg = match config {
                Some(path) => serde_json::from_str(&read_text(&path)?)
                    .map_err(|e| Error::Config(format!("synthetic config: {e}")))?,
                None => SyntheticConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            prepare_dir(&out, force)?;
            let data = generate(&cfg)?;
            let path = write_fixture(&out, &data, cfg.seed)?;
            log::info!("wrote {}", path.display());
            Ok(())
        }
        Command::Run(args) => run(args),
        Command::Report { reports, out } => {
            let file = if reports.is_dir() {
                reports.join("reports.json")
            } else {
                reports
            };
            let dir = match out {
                Some(d) => d,
                None => file.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let summary = write_summary(&dir, &read_reports_json(&file)?)?;
            log::info!(
                "summarized {} rows into {}",
                summary.rows.len(),
                dir.display()
            );
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            e.exit_code()
        }
    }
}
