//! `kwfd`: run Kiefer–Wolfowitz experiments from JSON configs or presets.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kwfd::config::{self, ExperimentFile};
use kwfd::report;
use kwfd::Error;

/// Output directory used when neither the config nor the environment names one.
const DEFAULT_OUTPUT_DIR: &str = "kwfd-out";
const OUTPUT_DIR_ENV: &str = "KWFD_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "kwfd", version, about = "Kiefer-Wolfowitz finite-difference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiments of a config file or a built-in preset.
    Run(RunArgs),
    /// List the built-in presets with their full configuration.
    Presets,
    /// Write log-log plot data and a gnuplot script for an error-curve CSV.
    Plotdata {
        /// Curve CSV written by `run`.
        csv: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config: an experiment file or a single run config.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset id (see `kwfd presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Dotted-path override, e.g. `scheme.gamma=0.25`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Validate the configuration and exit without writing anything.
    #[arg(long)]
    dry_run: bool,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,
}

// stdout may be a closed pipe (`kwfd presets | head`); that is not an error
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

/// A failure and the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn runtime(err: Error) -> Self {
        let code = match err {
            Error::Config(_) | Error::Malformed(_) | Error::File { .. } => 2,
            _ => 1,
        };
        Self { code, message: err.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Presets => {
            cmd_presets();
            Ok(())
        }
        Command::Plotdata { csv } => cmd_plotdata(&csv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("kwfd: error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(args: &RunArgs) -> Result<ExperimentFile, Failure> {
    let overrides = args
        .overrides
        .iter()
        .map(|o| config::parse_override(o))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::usage)?;
    let (origin, text) = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            (path.display().to_string(), text)
        }
        (None, Some(id)) => {
            let cfg = config::preset(id)
                .ok_or_else(|| Failure::usage(format!("unknown preset '{id}' (see `kwfd presets`)")))?;
            (format!("preset {id}"), ExperimentFile::single(cfg).to_json_pretty())
        }
        (None, None) => return Err(Failure::usage("one of --config or --preset is required")),
    };
    ExperimentFile::parse(&text, &overrides).map_err(|d| Failure::usage(format!("{origin}: {d}")))
}

fn output_dir(file: &ExperimentFile) -> PathBuf {
    file.output_dir
        .clone()
        .or_else(|| std::env::var(OUTPUT_DIR_ENV).ok().filter(|v| !v.is_empty()))
        .unwrap_or_else(|| DEFAULT_OUTPUT_DIR.to_string())
        .into()
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let file = load(&args)?;
    let out = output_dir(&file);
    if args.dry_run {
        for e in &file.experiments {
            say!("{}: ok ({} paths x {} steps)", e.id, e.n_paths, e.n_steps);
        }
        say!("dry run: {} experiment(s) valid; nothing written to {}", file.experiments.len(), out.display());
        return Ok(());
    }
    let rows = report::execute(&file, &out, args.workers.map(|w| w as usize)).map_err(Failure::runtime)?;
    for row in &rows {
        match &row.fit {
            Some(fit) => say!("{}: slope {:.4} (R^2 = {:.4})", row.id, fit.slope, fit.r_squared),
            None => say!("{}: done", row.id),
        }
    }
    say!("wrote {}", out.join(report::SUMMARY_FILE).display());
    Ok(())
}

fn cmd_presets() {
    for cfg in config::presets() {
        say!("{}\t{}", cfg.id, cfg.to_json());
    }
}

fn cmd_plotdata(csv: &Path) -> Result<(), Failure> {
    let files = report::write_plot_files(csv).map_err(|e| Failure { code: 2, message: e.to_string() })?;
    say!("{}", files.data.display());
    say!("{}", files.script.display());
    Ok(())
}
