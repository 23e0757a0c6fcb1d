//! `manip`: command-line pipeline around the manipulation-primitive
//! recognizer. Commands compose through files: `synth` writes a dataset,
//! `extract` turns it into token sequences, `train` fits per-action HMMs,
//! `predict`/`eval` classify, `ttest` compares two fold reports.
//!
//! Exit codes: 0 success, 2 usage, 3 data, 4 numeric.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use manip_core::config::PipelineConfig;
use manip_core::Error;

#[derive(Parser)]
#[command(name = "manip", version, about)]
struct Cli {
    /// Pipeline configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread count (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Renders a labeled synthetic dataset into a directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Overrides `subjects` from the config.
        #[arg(long)]
        subjects: Option<usize>,
        /// Overrides `trials_per_action` from the config.
        #[arg(long)]
        trials_per_action: Option<usize>,
        /// Overrides `noise_scale` from the config.
        #[arg(long)]
        noise_scale: Option<f64>,
        /// Overrides `variability` from the config (default|high).
        #[arg(long)]
        variability: Option<String>,
    },
    /// Extracts token sequences from a dataset directory. Quantization
    /// levels come from the trials flagged `train` in the manifest.
    Extract {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains the per-action model bank on the training subjects.
    Train {
        /// Token sequence file from `extract` (primitive route).
        #[arg(long, required_unless_present = "raw")]
        sequences: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated training subjects; defaults to the manifest
        /// `train` split (raw route) or every subject not in --test.
        #[arg(long)]
        train_subjects: Option<String>,
        /// Train the raw Gaussian-mixture baseline instead of tokens.
        #[arg(long)]
        raw: bool,
        /// Dataset directory (required with --raw).
        #[arg(long, required_if_eq("raw", "true"))]
        data: Option<PathBuf>,
    },
    /// Classifies sequences and writes per-trial predictions.
    Predict {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, required_unless_present = "raw")]
        sequences: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Restrict to these comma-separated subjects.
        #[arg(long)]
        subjects: Option<String>,
        #[arg(long)]
        raw: bool,
        #[arg(long, required_if_eq("raw", "true"))]
        data: Option<PathBuf>,
    },
    /// Evaluates a bank on held-out subjects and writes score reports.
    Eval {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, required_unless_present = "raw")]
        sequences: Option<PathBuf>,
        /// Comma-separated held-out subjects forming this fold.
        #[arg(long)]
        test_subjects: String,
        /// Output prefix: writes `<out>.scores.tsv` and
        /// `<out>.confusion.tsv`.
        #[arg(long)]
        out: PathBuf,
        /// Also write `<out>.confusion.pgm`.
        #[arg(long)]
        pgm: bool,
        /// Append a `fold, overall_f1, macro_f1` row to this file.
        #[arg(long)]
        fold_report: Option<PathBuf>,
        #[arg(long)]
        raw: bool,
        #[arg(long, required_if_eq("raw", "true"))]
        data: Option<PathBuf>,
    },
    /// Paired one-sample t-test between two fold reports.
    Ttest {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    #[cfg(feature = "parallel")]
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error[usage]: could not configure {jobs} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cli.jobs;

    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };

    let result = match cli.command {
        Command::Synth {
            out,
            subjects,
            trials_per_action,
            noise_scale,
            variability,
        } => commands::synth(
            &config,
            &out,
            subjects,
            trials_per_action,
            noise_scale,
            variability.as_deref(),
        ),
        Command::Extract { data, out } => commands::extract(&config, &data, &out),
        Command::Train {
            sequences,
            out,
            train_subjects,
            raw,
            data,
        } => commands::train(
            &config,
            sequences.as_deref(),
            &out,
            train_subjects.as_deref(),
            raw,
            data.as_deref(),
        ),
        Command::Predict {
            bank,
            sequences,
            out,
            subjects,
            raw,
            data,
        } => commands::predict(
            &bank,
            sequences.as_deref(),
            &out,
            subjects.as_deref(),
            raw,
            data.as_deref(),
        ),
        Command::Eval {
            bank,
            sequences,
            test_subjects,
            out,
            pgm,
            fold_report,
            raw,
            data,
        } => commands::eval(
            &bank,
            sequences.as_deref(),
            &test_subjects,
            &out,
            pgm,
            fold_report.as_deref(),
            raw,
            data.as_deref(),
        ),
        Command::Ttest { a, b } => commands::ttest(&a, &b),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn fail(e: &Error) -> ExitCode {
    let (kind, code) = match e {
        Error::Argument(_) => ("usage", 2),
        Error::DegenerateLevels(_) | Error::Numeric(_) => ("numeric", 4),
        _ => ("data", 3),
    };
    eprintln!("error[{kind}]: {e}");
    ExitCode::from(code)
}
