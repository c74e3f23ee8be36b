use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scholar_audit::pipeline::{
    self, default_out, load_config, AuditOptions, CalibrateOptions, CollectOptions,
    PipelineError, ReportFormat,
};
use scholar_audit::stats::Dimension;

#[derive(Parser)]
#[command(name = "scholar-audit", version, about = "Audit LLM scholar recommendations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Audit configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Archive path; overrides the configuration.
    #[arg(long)]
    archive: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep temperatures and select one per model.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Analyse the archived sweep without issuing requests.
        #[arg(long)]
        offline: bool,
    },
    /// Run the query schedule, appending to the archive.
    Collect {
        #[command(flatten)]
        common: Common,
        /// Handle the ticks due now, then exit.
        #[arg(long)]
        once: bool,
    },
    /// Label, link and score an archive.
    Audit {
        #[command(flatten)]
        common: Common,
        /// Comma-separated grouping dimensions.
        #[arg(long, value_delimiter = ',')]
        group_by: Vec<Dimension>,
        #[arg(long)]
        confidence: Option<f64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Re-aggregate audit metrics.
    Report {
        /// `metrics.jsonl` from an audit run.
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "model")]
        group_by: Vec<Dimension>,
        #[arg(long, default_value_t = scholar_audit::stats::DEFAULT_CONFIDENCE)]
        confidence: f64,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
    /// Write a seeded synthetic corpus, configuration and archive.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 120)]
        authors: usize,
        #[arg(long, default_value_t = 2)]
        days: u32,
    },
}

fn out_dir(common: &Common, cfg: &scholar_audit::config::AuditConfig) -> PathBuf {
    common.out.clone().unwrap_or_else(|| default_out(cfg))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Calibrate { common, offline } => {
            let cfg = load_config(&common.config)?;
            let opts = CalibrateOptions {
                offline,
                ..Default::default()
            };
            let report =
                pipeline::run_calibrate(&cfg, common.archive.as_deref(), &out_dir(&common, &cfg), &opts)?;
            for (model, t) in &report.selected {
                println!("{model}\t{t:.2}");
            }
        }
        Command::Collect { common, once } => {
            let cfg = load_config(&common.config)?;
            let opts = CollectOptions {
                once,
                ..Default::default()
            };
            let reports = pipeline::run_collect(&cfg, common.archive.as_deref(), &opts)?;
            let attempts: usize = reports.iter().map(|r| r.attempts).sum();
            let gaps: usize = reports.iter().map(|r| r.gaps).sum();
            println!("attempts\t{attempts}\ngaps\t{gaps}");
        }
        Command::Audit {
            common,
            group_by,
            confidence,
            threads,
        } => {
            let cfg = load_config(&common.config)?;
            let archive = pipeline::archive_path(&cfg, common.archive.as_deref())?;
            let mut opts = AuditOptions::from_config(&cfg);
            opts.threads = threads;
            if let Some(c) = confidence {
                if !(c > 0.0 && c < 1.0) {
                    return Err(PipelineError::Validation("confidence must lie in (0, 1)".into()));
                }
                opts.confidence = c;
            }
            if !group_by.is_empty() {
                opts.group_by = group_by;
            }
            let summary = pipeline::run_audit(&cfg, &archive, &out_dir(&common, &cfg), &opts)?;
            println!(
                "configurations\t{}\nattempts\t{}\nunique_names\t{}\nwarnings\t{}",
                summary.configurations,
                summary.attempts,
                summary.unique_names,
                summary.warnings.len()
            );
        }
        Command::Report {
            metrics,
            out,
            group_by,
            confidence,
            format,
        } => {
            let text = pipeline::run_report(&metrics, &out, &group_by, confidence, format)?;
            print!("{text}");
        }
        Command::Synth {
            out,
            seed,
            authors,
            days,
        } => {
            let spec = pipeline::synth::SynthSpec {
                seed,
                authors,
                days,
            };
            let files = pipeline::synth::write_synthetic(&out, &spec)?;
            println!("{}", files.config.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
