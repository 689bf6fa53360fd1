//! `sgt` command-line driver: training with grid search, evaluation,
//! gradient checking, analysis reports and synthetic corpora.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 when data,
//! configuration or a check fails. Reports go to files under `output.dir`
//! named by configuration hash and seed; progress goes to stderr.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use sgt_core::corpus::LabelScheme;
use sgt_core::train::Setting;

pub use commands::{
    build_model, checkpoint_shape, cmd_analyze, cmd_eval, cmd_gradcheck, cmd_synth, cmd_train, load_model, prepare,
    Prepared, ReportKind, TrainArtifacts,
};
pub use config::{RunConfig, Split};

#[derive(Debug, Parser)]
#[command(
    name = "sgt",
    version,
    about = "Syntax-guided graph transformer for temporal relations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SettingArg {
    Joint,
    Gold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportArg {
    Stats,
    Consistency,
    Width,
    Cues,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Matres,
    Tbdense,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every grid cell and keep the best by dev score.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Grid cells trained in parallel.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: u16,
    },
    /// Evaluate a checkpoint on the configured evaluation split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = SettingArg::Gold)]
        setting: SettingArg,
    },
    /// Compare analytic and finite-difference gradients on a tiny document.
    Gradcheck {
        /// Tokens in the fixture document.
        #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u16).range(2..))]
        size: u16,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Write an analysis report for the evaluation split.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        report: ReportArg,
    },
    /// Generate a templated synthetic corpus with a matching config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u32).range(1..))]
        windows: u32,
        #[arg(long, value_enum, default_value_t = SchemeArg::Matres)]
        scheme: SchemeArg,
    },
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn execute(command: Command) -> anyhow::Result<i32> {
    match command {
        Command::Train { config, jobs } => {
            let a = cmd_train(&config, jobs as usize)?;
            println!("{}", a.checkpoint.display());
        }
        Command::Eval {
            config,
            checkpoint,
            setting,
        } => {
            let setting = match setting {
                SettingArg::Joint => Setting::Joint,
                SettingArg::Gold => Setting::Gold,
            };
            let (report, path) = cmd_eval(&config, &checkpoint, setting)?;
            print!("{}", report.to_table());
            log::info!("report written to {}", path.display());
        }
        Command::Gradcheck { size, seed, tolerance } => {
            let mut ok = true;
            println!("layers\theads\tmax_relative_error\tresult");
            for (layers, heads, report) in cmd_gradcheck(size as usize, seed)? {
                let pass = report.passes(tolerance);
                ok &= pass;
                println!(
                    "{layers}\t{heads}\t{:.3e}\t{}",
                    report.max_error(),
                    if pass { "pass" } else { "FAIL" }
                );
                for g in report.groups.iter().filter(|g| g.max_relative_error >= tolerance) {
                    println!("\t{}\t{:.3e}", g.name, g.max_relative_error);
                }
            }
            return Ok(if ok { 0 } else { 2 });
        }
        Command::Analyze {
            config,
            checkpoint,
            report,
        } => {
            let kind = match report {
                ReportArg::Stats => ReportKind::Stats,
                ReportArg::Consistency => ReportKind::Consistency,
                ReportArg::Width => ReportKind::Width,
                ReportArg::Cues => ReportKind::Cues,
            };
            let path = cmd_analyze(&config, checkpoint.as_deref(), kind)?;
            println!("{}", path.display());
        }
        Command::Synth {
            out,
            seed,
            windows,
            scheme,
        } => {
            let scheme = match scheme {
                SchemeArg::Matres => LabelScheme::matres(),
                SchemeArg::Tbdense => LabelScheme::tbdense(),
            };
            let cfg = cmd_synth(&out, seed, windows as usize, &scheme)?;
            println!("{}", cfg.display());
        }
    }
    Ok(0)
}
