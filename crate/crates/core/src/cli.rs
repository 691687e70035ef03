//! Command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numeric failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::{
    load_any, synth_generate, write_csv, write_dataset, Dataset, Emotion, SyntheticSpec,
    NUM_EMOTIONS,
};
use crate::error::{Error, Result};
use crate::loss::{LossConfig, LossMode};
use crate::metrics::{report_serialize, report_to_json, CSV_HEADER};
use crate::model::{check_gradients, init_params, ArchConfig};
use crate::train::{cross_validate, evaluate, threads_from_env, train, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "maskfuse",
    version,
    about = "Attention-fused severity classifier with class-balanced focal loss"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded Gaussian-cluster dataset.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint plus loss history.
    Train(TrainArgs),
    /// Stratified k-fold cross-validation.
    Cv(CvArgs),
    /// Score a checkpoint against a dataset.
    Eval(EvalArgs),
    /// Finite-difference check of the full model gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file; flags take precedence over its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct ArchArgs {
    /// Channels per expression map (defaults to the dataset's).
    #[arg(long)]
    d: Option<usize>,
    /// Spatial positions per channel (defaults to the dataset's).
    #[arg(long = "S")]
    spatial: Option<usize>,
    /// Attention reduction ratio.
    #[arg(long = "r")]
    reduction: Option<usize>,
    /// Classifier hidden width.
    #[arg(long)]
    hidden: Option<usize>,
    /// Disable attention fusion (weights pinned to 1).
    #[arg(long)]
    no_aff: bool,
}

#[derive(Debug, Args)]
struct OptimArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Focal modulating exponent.
    #[arg(long)]
    gamma: Option<f64>,
    /// Train with plain cross-entropy instead of the class-balanced focal loss.
    #[arg(long)]
    no_acb: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory (or CSV file with --csv).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "S")]
    spatial: Option<usize>,
    /// Per-class sample counts, e.g. 200,40,20.
    #[arg(long, value_delimiter = ',')]
    counts: Option<Vec<usize>>,
    /// Norm of each class-mean direction.
    #[arg(long)]
    separation: Option<f64>,
    /// Standard deviation of the per-value noise.
    #[arg(long)]
    noise: Option<f64>,
    /// Emotions that carry class signal, e.g. happiness,fear.
    #[arg(long, value_delimiter = ',')]
    informative: Option<Vec<String>>,
    /// Write a single CSV file instead of a manifest directory.
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    arch: ArchArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Dataset manifest, directory or CSV file.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Loss history path (default: <out>.history.json).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    arch: ArchArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long)]
    data: PathBuf,
    /// Number of folds.
    #[arg(long)]
    k: Option<usize>,
    /// Report path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Report path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    arch: ArchArgs,
    /// Focal modulating exponent.
    #[arg(long)]
    gamma: Option<f64>,
    /// Samples in the probe batch.
    #[arg(long, default_value_t = 3)]
    batch: usize,
    /// Report path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Every field optional; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    gamma: Option<f64>,
    acb_enabled: Option<bool>,
    aff_enabled: Option<bool>,
    d: Option<usize>,
    #[serde(rename = "S")]
    spatial: Option<usize>,
    #[serde(alias = "r")]
    reduction: Option<usize>,
    hidden: Option<usize>,
    k: Option<usize>,
    counts: Option<[usize; 3]>,
    separation: Option<f64>,
    noise: Option<f64>,
    informative: Option<[bool; NUM_EMOTIONS]>,
}

fn read_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn resolve_train(
    cfg: &FileConfig,
    common: &Common,
    arch: &ArchArgs,
    optim: &OptimArgs,
) -> TrainConfig {
    let base = TrainConfig::default();
    TrainConfig {
        epochs: optim.epochs.or(cfg.epochs).unwrap_or(base.epochs),
        lr: optim.lr.or(cfg.lr).unwrap_or(base.lr),
        batch_size: optim
            .batch_size
            .or(cfg.batch_size)
            .unwrap_or(base.batch_size),
        seed: common.seed.or(cfg.seed).unwrap_or(base.seed),
        gamma: optim.gamma.or(cfg.gamma).unwrap_or(base.gamma),
        acb_enabled: !optim.no_acb && cfg.acb_enabled.unwrap_or(base.acb_enabled),
        aff_enabled: !arch.no_aff && cfg.aff_enabled.unwrap_or(base.aff_enabled),
    }
}

/// `d` and `S` fall back to the dataset's shape when neither a flag nor
/// the config sets them.
fn resolve_arch(cfg: &FileConfig, args: &ArchArgs, data: Option<&Dataset>) -> ArchConfig {
    let base = ArchConfig::default();
    ArchConfig {
        d: args.d.or(cfg.d).or(data.map(Dataset::d)).unwrap_or(base.d),
        spatial: args
            .spatial
            .or(cfg.spatial)
            .or(data.map(Dataset::spatial))
            .unwrap_or(base.spatial),
        reduction: args.reduction.or(cfg.reduction).unwrap_or(base.reduction),
        hidden: args.hidden.or(cfg.hidden).unwrap_or(base.hidden),
        aff_enabled: !args.no_aff && cfg.aff_enabled.unwrap_or(base.aff_enabled),
    }
}

fn resolve_synth(cfg: &FileConfig, args: &SynthArgs) -> Result<SyntheticSpec> {
    let base = SyntheticSpec::default();
    let counts = match &args.counts {
        Some(c) => c.as_slice().try_into().map_err(|_| {
            Error::InvalidConfig(format!("--counts needs 3 values, got {}", c.len()))
        })?,
        None => cfg.counts.unwrap_or(base.counts),
    };
    let informative = match &args.informative {
        Some(names) => {
            let mut mask = [false; NUM_EMOTIONS];
            for name in names {
                let e = Emotion::ALL
                    .iter()
                    .find(|e| e.name() == name.trim())
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown emotion {name:?}")))?;
                mask[*e as usize] = true;
            }
            mask
        }
        None => cfg.informative.unwrap_or(base.informative),
    };
    let spec = SyntheticSpec {
        counts,
        d: args.d.or(cfg.d).unwrap_or(base.d),
        spatial: args.spatial.or(cfg.spatial).unwrap_or(base.spatial),
        separation: args
            .separation
            .or(cfg.separation)
            .unwrap_or(base.separation),
        noise: args.noise.or(cfg.noise).unwrap_or(base.noise),
        informative,
        seed: args.common.seed.or(cfg.seed).unwrap_or(base.seed),
    };
    spec.validate()?;
    Ok(spec)
}

fn write_output(path: &Path, text: &str, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::AlreadyExists(path.to_path_buf()));
    }
    fs::write(path, text)?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str, force: bool) -> Result<()> {
    match out {
        Some(path) => write_output(path, text, force),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct GradcheckCase {
    aff_enabled: bool,
    mode: LossMode,
    max_rel_err: f64,
    coordinates: usize,
}

#[derive(Serialize)]
struct GradcheckSummary {
    d: usize,
    #[serde(rename = "S")]
    spatial: usize,
    batch: usize,
    seed: u64,
    tolerance: f64,
    max_rel_err: f64,
    passed: bool,
    cases: Vec<GradcheckCase>,
}

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn run_synth(args: &SynthArgs) -> Result<()> {
    let cfg = read_config(args.common.config.as_deref())?;
    let spec = resolve_synth(&cfg, args)?;
    let ds = synth_generate(&spec)?;
    if args.csv {
        if args.out.exists() && !args.common.force {
            return Err(Error::AlreadyExists(args.out.clone()));
        }
        write_csv(&ds, &args.out)?;
        println!("{}", args.out.display());
    } else {
        let manifest = write_dataset(&ds, &args.out, args.common.force)?;
        println!("{}", manifest.display());
    }
    Ok(())
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let cfg = read_config(args.common.config.as_deref())?;
    let data = load_any(&args.data)?;
    let arch = resolve_arch(&cfg, &args.arch, Some(&data));
    let tcfg = resolve_train(&cfg, &args.common, &args.arch, &args.optim);
    let history_path = args
        .history
        .clone()
        .unwrap_or_else(|| args.out.with_extension("history.json"));
    for path in [&args.out, &history_path] {
        if path.exists() && !args.common.force {
            return Err(Error::AlreadyExists(path.clone()));
        }
    }
    let (params, history) = train(&data, arch, &tcfg)?;
    save_checkpoint(&params, &args.out, true)?;
    write_output(&history_path, &report_to_json(&history)?, true)?;
    eprintln!(
        "trained {} epochs in {:.2?}; final loss {:?}",
        history.epoch_loss.len(),
        history.wall_time,
        history.epoch_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn run_cv(args: &CvArgs) -> Result<()> {
    let cfg = read_config(args.common.config.as_deref())?;
    let data = load_any(&args.data)?;
    let arch = resolve_arch(&cfg, &args.arch, Some(&data));
    let tcfg = resolve_train(&cfg, &args.common, &args.arch, &args.optim);
    let k = args.k.or(cfg.k).unwrap_or(5);
    let report = cross_validate(&data, arch, &tcfg, k, tcfg.seed, threads_from_env())?;
    for fold in report.folds.iter().chain([&report.mean]) {
        crate::metrics::ensure_finite(fold)?;
    }
    emit(
        args.out.as_deref(),
        &report_to_json(&report)?,
        args.common.force,
    )?;
    eprintln!("fold,{CSV_HEADER}");
    for (i, fold) in report.folds.iter().enumerate() {
        eprintln!("{i},{}", fold.csv_row());
    }
    eprintln!("mean,{}", report.mean.csv_row());
    Ok(())
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let params = load_checkpoint(&args.checkpoint)?;
    let data = load_any(&args.data)?;
    let report = evaluate(&params, &data)?;
    emit(
        args.out.as_deref(),
        &report_serialize(&report)?,
        args.common.force,
    )
}

fn run_gradcheck(args: &GradcheckArgs) -> Result<()> {
    let cfg = read_config(args.common.config.as_deref())?;
    let seed = args.common.seed.or(cfg.seed).unwrap_or(0);
    let gamma = args.gamma.or(cfg.gamma).unwrap_or(2.0);
    if args.batch == 0 {
        return Err(Error::InvalidConfig("--batch must be >= 1".into()));
    }
    let defaults = ArchArgs {
        d: Some(args.arch.d.or(cfg.d).unwrap_or(4)),
        spatial: Some(args.arch.spatial.or(cfg.spatial).unwrap_or(2)),
        reduction: Some(args.arch.reduction.or(cfg.reduction).unwrap_or(4)),
        hidden: Some(args.arch.hidden.or(cfg.hidden).unwrap_or(8)),
        no_aff: false,
    };
    let arch = resolve_arch(&FileConfig::default(), &defaults, None);
    let data = synth_generate(&SyntheticSpec {
        counts: [args.batch; 3],
        d: arch.d,
        spatial: arch.spatial,
        separation: 1.0,
        seed,
        ..SyntheticSpec::default()
    })?;
    // Interleave classes so the probe batch mixes labels.
    let batch: Vec<_> = (0..args.batch)
        .map(|i| &data.samples()[(i % 3) * args.batch + i / 3])
        .collect();

    let aff_settings: Vec<bool> = if args.arch.no_aff {
        vec![false]
    } else {
        vec![true, false]
    };
    let mut cases = Vec::new();
    for aff_enabled in aff_settings {
        let params = init_params(
            ArchConfig {
                aff_enabled,
                ..arch
            },
            seed,
        )?;
        for loss_cfg in [
            LossConfig::new(gamma, [1.0, 2.0, 10.0], LossMode::AdaptiveFocal)?,
            LossConfig::cross_entropy(),
        ] {
            let r = check_gradients(
                &batch,
                &params,
                &loss_cfg,
                GRADCHECK_STEP,
                GRADCHECK_TOLERANCE,
            )?;
            cases.push(GradcheckCase {
                aff_enabled,
                mode: loss_cfg.mode,
                max_rel_err: r.max_rel_err,
                coordinates: r.coordinates,
            });
        }
    }
    let max_rel_err = cases.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
    let summary = GradcheckSummary {
        d: arch.d,
        spatial: arch.spatial,
        batch: args.batch,
        seed,
        tolerance: GRADCHECK_TOLERANCE,
        max_rel_err,
        passed: max_rel_err < GRADCHECK_TOLERANCE,
        cases,
    };
    emit(
        args.out.as_deref(),
        &report_to_json(&summary)?,
        args.common.force,
    )?;
    eprintln!("max relative error: {max_rel_err:e}");
    if !summary.passed {
        return Err(Error::GradCheckFailed {
            max_rel_err,
            tolerance: GRADCHECK_TOLERANCE,
        });
    }
    Ok(())
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_USAGE,
                _ => EXIT_USAGE,
            };
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Train(a) => run_train(a),
        Command::Cv(a) => run_cv(a),
        Command::Eval(a) => run_eval(a),
        Command::Gradcheck(a) => run_gradcheck(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                EXIT_NUMERIC
            } else {
                EXIT_DATA
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_exits_zero_and_unknown_flag_exits_one() {
        assert_eq!(run(["maskfuse", "--help"]), EXIT_OK);
        assert_eq!(run(["maskfuse", "train", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["maskfuse"]), EXIT_USAGE);
    }

    #[test]
    fn flags_override_config() {
        let cfg: FileConfig =
            serde_json::from_str(r#"{"epochs": 7, "lr": 0.5, "gamma": 1.0, "r": 3}"#).unwrap();
        let cli = Cli::try_parse_from([
            "maskfuse", "train", "--data", "x", "--out", "y", "--epochs", "9", "--no-acb",
        ])
        .unwrap();
        let Command::Train(a) = cli.command else {
            panic!()
        };
        let t = resolve_train(&cfg, &a.common, &a.arch, &a.optim);
        assert_eq!((t.epochs, t.lr, t.gamma, t.batch_size), (9, 0.5, 1.0, 32));
        assert!(!t.acb_enabled && t.aff_enabled);
        let arch = resolve_arch(&cfg, &a.arch, None);
        assert_eq!(arch.reduction, 3);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<FileConfig>(r#"{"epoch": 3}"#).is_err());
    }

    #[test]
    fn informative_names_resolve() {
        let cli = Cli::try_parse_from([
            "maskfuse",
            "synth",
            "--out",
            "o",
            "--informative",
            "sadness,disgust",
        ])
        .unwrap();
        let Command::Synth(a) = cli.command else {
            panic!()
        };
        let spec = resolve_synth(&FileConfig::default(), &a).unwrap();
        assert_eq!(spec.informative, [false, true, false, false, false, true]);
    }
}
