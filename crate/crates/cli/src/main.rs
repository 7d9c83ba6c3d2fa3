//! `ghostlens` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Parser, Subcommand, ValueEnum};
use ghostlens::experiment::CoherentMode;

#[derive(Parser, Debug)]
#[command(name = "ghostlens", version, about = "Lensless ghost diffraction simulator")]
struct Cli {
    /// Worker threads (default: available parallelism; 1 = sequential).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the two-arm ensemble and write the ghost pattern.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides output.directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Fraunhofer quadrature pattern of the configured object.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fully coherent reference pattern.
    Coherent {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Phase retrieval on a stored pattern.
    Retrieve {
        /// Pattern file (.csv or binary array) on the frequency axis.
        #[arg(long)]
        pattern: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed for the random initializations.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Object-plane speckle grain size and reference-arm g2(0).
    SpeckleStats {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare two pattern files.
    Compare {
        pattern_a: PathBuf,
        pattern_b: PathBuf,
        /// Takes the comparison window and peak count from this config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Half-width of the compared region in the patterns' axis units.
        #[arg(long)]
        window: Option<f64>,
        #[arg(long)]
        peaks: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    #[value(name = "fresnel_d2")]
    FresnelD2,
    #[value(name = "lens_2f")]
    Lens2f,
}

impl From<Mode> for CoherentMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::FresnelD2 => CoherentMode::FresnelD2,
            Mode::Lens2f => CoherentMode::Lens2f,
        }
    }
}

/// Forwards to `env_logger` and keeps every warning for the metadata record.
struct Recorder {
    inner: env_logger::Logger,
}

static WARNINGS: Mutex<Vec<String>> = Mutex::new(Vec::new());

impl log::Log for Recorder {
    fn enabled(&self, m: &log::Metadata) -> bool {
        m.level() <= log::Level::Warn || self.inner.enabled(m)
    }

    fn log(&self, record: &log::Record) {
        if record.level() <= log::Level::Warn {
            if let Ok(mut w) = WARNINGS.lock() {
                w.push(record.args().to_string());
            }
        }
        if self.inner.matches(record) {
            self.inner.log(record);
        }
    }

    fn flush(&self) {
        self.inner.flush();
    }
}

pub(crate) fn take_warnings() -> Vec<String> {
    WARNINGS.lock().map(|mut w| std::mem::take(&mut *w)).unwrap_or_default()
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let inner = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).build();
    let max = inner.filter().max(log::LevelFilter::Warn);
    if log::set_boxed_logger(Box::new(Recorder { inner })).is_ok() {
        log::set_max_level(max);
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.verbose);
    let exec = ghostlens::exec::Execution::from_workers(cli.workers.unwrap_or(0));
    let result = match cli.command {
        Command::Simulate { config, out, seed, resume } => commands::simulate(&config, out, seed, resume, exec),
        Command::Oracle { config, out } => commands::oracle(&config, out),
        Command::Coherent { config, mode, out } => commands::coherent(&config, mode.into(), out),
        Command::Retrieve { pattern, config, out, seed } => commands::retrieve(&pattern, &config, out, seed),
        Command::SpeckleStats { config, out, seed } => commands::speckle_stats(&config, out, seed, exec),
        Command::Compare { pattern_a, pattern_b, config, window, peaks } => {
            commands::compare(&pattern_a, &pattern_b, config, window, peaks)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_configuration() { 2 } else { 1 })
        }
    }
}
