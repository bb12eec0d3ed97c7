mod config;
mod pipeline;
mod text;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "repjudge", version, about = "Rule-driven repetition judging from pose keypoints")]
struct Cli {
    /// TOML file with default settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Judge one keypoint stream and write rep records.
    Judge(pipeline::JudgeArgs),
    /// Score predicted reps against ground truth.
    Evaluate(pipeline::EvaluateArgs),
    /// Grid-search thresholds over a dataset manifest.
    Calibrate(pipeline::CalibrateArgs),
    /// Pick the largest ROI-cache threshold that keeps rep counts.
    CalibrateTau(pipeline::CalibrateTauArgs),
    /// Latency and real-time factor with and without each cache.
    Bench(pipeline::BenchArgs),
    /// Generate a synthetic squat video with annotations.
    Synth(pipeline::SynthArgs),
    /// List keypoint schemas, or check a rule file against one.
    Schemas(pipeline::SchemasArgs),
    /// Embed pages into a chunk store.
    Ingest(text::IngestArgs),
    /// Query a chunk store.
    Retrieve(text::RetrieveArgs),
    /// Precision/recall/F1 of similarity thresholds on labeled pairs.
    Sweep(text::SweepArgs),
    /// Rubric statistics from a ratings CSV.
    Stats(text::StatsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Prerecorded,
    Streamed,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TrackerArg {
    Auto,
    Iou,
    Oks,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MatcherArg {
    Greedy,
    Optimal,
}

/// Cache switches shared by the judging commands.
#[derive(Debug, Clone, Args)]
pub struct CacheFlags {
    /// Reuse the enlarged first detection instead of running the detector.
    #[arg(long)]
    dc: bool,
    /// Pixels added on each side of the cached detection.
    #[arg(long)]
    dc_offset: Option<f64>,
    /// Skip pose inference while the target region is unchanged.
    #[arg(long)]
    rtc: bool,
    /// Skip threshold on mean absolute patch difference.
    #[arg(long)]
    rtc_tau: Option<f64>,
    /// Comparison patch size, e.g. 32x32.
    #[arg(long, value_parser = config::parse_patch)]
    patch: Option<(usize, usize)>,
}

impl CacheFlags {
    pub fn apply(&self, c: &mut repjudge::cache::CachePolicy) {
        c.dc_enabled |= self.dc;
        c.rtc_enabled |= self.rtc;
        if let Some(v) = self.dc_offset {
            c.dc_offset = v;
        }
        if let Some(v) = self.rtc_tau {
            c.rtc_tau = v;
        }
        if let Some((w, h)) = self.patch {
            c.patch_width = w;
            c.patch_height = h;
        }
    }
}

/// Anomalous but completed runs exit with this code.
pub const EXIT_ANOMALY: u8 = 1;
const EXIT_ERROR: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = match config::FileConfig::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    let result = match cli.command {
        Command::Judge(a) => pipeline::judge(a, &file),
        Command::Evaluate(a) => pipeline::evaluate(a),
        Command::Calibrate(a) => pipeline::calibrate(a, &file),
        Command::CalibrateTau(a) => pipeline::calibrate_tau(a, &file),
        Command::Bench(a) => pipeline::bench(a, &file),
        Command::Synth(a) => pipeline::synth(a),
        Command::Schemas(a) => pipeline::schemas(a, &file),
        Command::Ingest(a) => text::ingest(a),
        Command::Retrieve(a) => text::retrieve(a),
        Command::Sweep(a) => text::sweep(a),
        Command::Stats(a) => text::stats(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
