//! `iriskit`: synthesize, clean, score, split, build protocols, encode,
//! match and evaluate.
//!
//! Exit status is 0 on success, 1 when the pipeline rejects its input and 2
//! on command-line misuse. Logs go to stderr, results to files.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, FromArgMatches, Parser, Subcommand};
use iriskit::encode::Method;
use iriskit::protocols::{EyeMode, ProtocolName, Task};

#[derive(Parser, Debug)]
#[command(name = "iriskit", version, about = "Off-axis iris recognition benchmark pipeline")]
pub struct Cli {
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    pub workers: Option<u32>,
    /// key=value file with default flag values; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthetic corpus generation.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Drop records without a usable annotation.
    Clean(CleanArgs),
    /// Quality scoring and standard/challenging categorization.
    #[command(subcommand)]
    Quality(QualityCmd),
    /// Subject-disjoint train/test split.
    Split(SplitArgs),
    /// Protocol materialization.
    #[command(subcommand)]
    Protocol(ProtocolCmd),
    /// Template extraction.
    Encode(EncodeArgs),
    /// Score a pairs or identification file.
    Match(MatchArgs),
    /// FRR@FAR and rank-1 evaluation.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Merge evaluation reports and render the table.
    Report(ReportArgs),
}

#[derive(Subcommand, Debug)]
pub enum SynthCmd {
    /// Render a corpus and write its manifest.
    Generate(GenerateArgs),
}

#[derive(Subcommand, Debug)]
pub enum QualityCmd {
    Score(ScoreArgs),
}

#[derive(Subcommand, Debug)]
pub enum ProtocolCmd {
    /// Write one pairs (verification) or gallery/probe (identification) file per protocol.
    Build(BuildArgs),
}

#[derive(Subcommand, Debug)]
pub enum EvalCmd {
    /// FRR at the requested FAR targets, per scores file.
    Verify(VerifyArgs),
    /// Rank-1 accuracy, per scores file.
    Identify(IdentifyArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub subjects: usize,
    #[arg(long)]
    pub seed: u64,
    /// Output directory; the manifest is written to `<out>/manifest.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    /// Camera tilt of the rig in degrees.
    #[arg(long, default_value_t = iriskit::synthgen::DEFAULT_CAMERA_TILT_DEG)]
    pub camera_tilt: f64,
    /// Defect probability override, e.g. `closed_eye=0.05`.
    #[arg(long = "defect", value_name = "KIND=P", value_parser = parse_kv)]
    pub defects: Vec<(String, f64)>,
    /// Disable defect injection.
    #[arg(long, conflicts_with = "defects")]
    pub no_defects: bool,
    /// Write PNG files under `<out>/images` instead of virtual references.
    #[arg(long)]
    pub write_images: bool,
}

#[derive(Args, Debug)]
pub struct CleanArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ThresholdArgs {
    /// Threshold file (`dimension=value` lines).
    #[arg(long, value_name = "FILE")]
    pub thresholds: Option<PathBuf>,
    /// Single threshold override, e.g. `gaze_dev=0.9`.
    #[arg(long = "threshold", value_name = "DIM=V", value_parser = parse_kv)]
    pub overrides: Vec<(String, f64)>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Fraction of subjects assigned to train.
    #[arg(long, default_value_t = 0.7)]
    pub ratio: f64,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory, one `<task>_<name>_<eye>.csv` per protocol.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Protocol names (comma separated) or `all`.
    #[arg(long, default_value = "all", value_parser = list_of::<ProtocolName>)]
    pub name: String,
    /// `verification`, `identification` or `all`.
    #[arg(long, default_value = "all", value_parser = list_of::<Task>)]
    pub task: String,
    /// `left`, `right`, `dual` or `all`.
    #[arg(long, default_value = "all", value_parser = list_of::<EyeMode>)]
    pub eye: String,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, required_unless_present = "import", conflicts_with = "import")]
    pub method: Option<Method>,
    /// Import an externally computed embedding store instead of extracting.
    #[arg(long, value_name = "FILE", requires = "out")]
    pub import: Option<PathBuf>,
    /// Template store to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Only encode samples referenced by these pairs/identification files.
    #[arg(long = "subset", value_name = "FILE")]
    pub subsets: Vec<PathBuf>,
    #[arg(long, default_value = "f64", value_parser = ["f32", "f64"])]
    pub precision: String,
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    #[arg(long)]
    pub templates: PathBuf,
    /// Pairs file (verification) or gallery/probe file (identification).
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Rotation search range in grid columns.
    #[arg(long, default_value_t = 8)]
    pub max_shift: u32,
    /// Minimum fraction of jointly valid bits for a shift to count.
    #[arg(long, default_value_t = 0.25)]
    pub min_valid: f64,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long = "scores", required = true, num_args = 1..)]
    pub scores: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// FAR targets, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-3,1e-5")]
    pub far: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct IdentifyArgs {
    #[arg(long = "scores", required = true, num_args = 1..)]
    pub scores: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Evaluation reports to merge.
    #[arg(long = "input", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the plain-text table here.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

/// Accepts `all` or a comma list of `T` values.
fn list_of<T: std::str::FromStr>(s: &str) -> Result<String, String>
where
    T::Err: std::fmt::Display,
{
    if s.trim() != "all" {
        for x in s.split(',') {
            x.trim().parse::<T>().map_err(|e| e.to_string())?;
        }
    }
    Ok(s.to_string())
}

fn parse_kv(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("`{}` is not a number", v.trim()))?;
    Ok((k.trim().to_string(), v))
}

fn main() -> ExitCode {
    let argv: Vec<std::ffi::OsString> = std::env::args_os().collect();
    let (argv, notes) = match config::merge(argv) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match config::command()
        .try_get_matches_from(argv)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    for n in notes {
        log::debug!("{n}");
    }
    let run = || commands::run(&cli.command);
    let result = match cli.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build()
            .map_err(anyhow::Error::from)
            .and_then(|pool| pool.install(run)),
        None => run(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(1)
        }
    }
}
