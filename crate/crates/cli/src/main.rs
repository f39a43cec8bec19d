use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use tils_cli::commands::{self, EvaluateArgs};
use tils_cli::evaluate::Task;

/// Whole-slide TILs scoring.
#[derive(Parser)]
#[command(name = "tils", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Tumour and stroma masks.
    Segment {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// TIL detections, optionally restricted to an ROI mask.
    Detect {
        #[arg(long)]
        manifest: PathBuf,
        /// ROI mask at the segmentation level.
        #[arg(long)]
        roi: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Tumour bulk and tumour-associated stroma from segmentation masks.
    Bulk {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding tumour.png and stroma.png (default: --out).
        #[arg(long)]
        masks: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Full pipeline; prints the result as JSON.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare predictions with ground truth.
    Evaluate {
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Slide whose area is used for FROC when the ground truth gives none.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Overlay image of the pipeline outputs.
    Render {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory of earlier outputs; the pipeline runs when omitted.
        #[arg(long)]
        from: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Segment { manifest, common } => {
            let cfg = commands::config(common.config.as_deref())?;
            commands::segment(&manifest, &cfg, &common.out).context("segment")?;
        }
        Command::Detect { manifest, roi, common } => {
            let cfg = commands::config(common.config.as_deref())?;
            let n = commands::detect(&manifest, &cfg, &common.out, roi.as_deref()).context("detect")?;
            log::info!("{n} detections");
        }
        Command::Bulk { manifest, masks, common } => {
            let cfg = commands::config(common.config.as_deref())?;
            commands::bulk(&manifest, &cfg, &common.out, masks.as_deref()).context("bulk")?;
        }
        Command::Score { manifest, common } => {
            let cfg = commands::config(common.config.as_deref())?;
            let result = commands::score(&manifest, &cfg, &common.out).context("score")?;
            println!("{}", serde_json::to_string(&result)?);
        }
        Command::Evaluate { task, pred, gt, manifest, common } => {
            let cfg = commands::config(common.config.as_deref())?;
            let args = EvaluateArgs {
                task,
                pred: &pred,
                gt: &gt,
                manifest: manifest.as_deref(),
            };
            let report = commands::evaluate_cmd(&args, &cfg, &common.out).context("evaluate")?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Render { manifest, from, common } => {
            let cfg = commands::config(common.config.as_deref())?;
            let path = commands::render(&manifest, &cfg, &common.out, from.as_deref()).context("render")?;
            log::info!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TIAGER_LOG", "warn")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
