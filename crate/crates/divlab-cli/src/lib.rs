//! Command-line orchestration for divlab experiments.
//!
//! The binary loads a [`config::RunConfig`], applies flag overrides, runs
//! one subcommand and writes its report, any reproducer and finally the
//! manifest into the output directory. Exit status 0 means success, 1 a
//! usage, configuration or capacity error, and 2 a failed assertion; in
//! the last case `<command>.reproducer.json` holds the violating instance.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use crate::commands::Failure;
use crate::config::{load_config, RunConfig, SpectrumMethod, TraceRoute};
use crate::report::ArtifactWriter;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

/// Environment variable that overrides `thread_count`.
pub const THREADS_ENV: &str = "DIVLAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "divlab", version, about = "Experiments on prime-divisibility operators")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonFlags,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags mirroring the top-level configuration keys.
#[derive(Debug, Default, Args)]
pub struct CommonFlags {
    #[arg(long, global = true)]
    pub window_start: Option<u64>,
    #[arg(long, global = true)]
    pub window_len: Option<u64>,
    #[arg(long, global = true)]
    pub h0: Option<u64>,
    #[arg(long, global = true)]
    pub h: Option<u64>,
    /// Threshold multiplier K of the set X₀.
    #[arg(long = "k-exclude", global = true, value_name = "K")]
    pub k_exclude: Option<f64>,
    #[arg(long, global = true)]
    pub ell: Option<usize>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the primes of [h0, h].
    Primes,
    /// Extreme eigenvalues of the operator, with and without X₀ ∩ Y_ℓ.
    Spectrum {
        #[arg(long, value_enum)]
        method: Option<SpectrumMethod>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Traces Tr A^{2j} for j = 1..k by up to three routes.
    Trace {
        #[arg(long, value_enum)]
        method: Option<TraceRoute>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Random instances of the sieve identities.
    SieveSelftest {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Window densities of divisibility patterns against the model.
    Kubilius {
        #[arg(long)]
        q: Option<u64>,
        #[arg(long)]
        a: Option<u64>,
        /// Comma-separated shifts.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        alphas: Option<Vec<i64>>,
    },
    /// Exhaustive shape-family census at walk length 2k.
    Walks {
        #[arg(long)]
        kappa: Option<usize>,
        #[arg(long)]
        rho: Option<usize>,
    },
    /// Random instances of the spanning-tree and boundary selections.
    GraphcoreSelftest {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Logarithmic correlation averages and the Z series.
    Chowla {
        #[arg(long)]
        x: Option<u64>,
        #[arg(long)]
        w: Option<f64>,
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long)]
        absolute: bool,
    },
    /// Residuals of the scale-average identities.
    Scales {
        #[arg(long)]
        x: Option<u64>,
        #[arg(long)]
        w: Option<f64>,
    },
    /// Summary of every report in the output directory.
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Primes => "primes",
            Command::Spectrum { .. } => "spectrum",
            Command::Trace { .. } => "trace",
            Command::SieveSelftest { .. } => "sieve-selftest",
            Command::Kubilius { .. } => "kubilius",
            Command::Walks { .. } => "walks",
            Command::GraphcoreSelftest { .. } => "graphcore-selftest",
            Command::Chowla { .. } => "chowla",
            Command::Scales { .. } => "scales",
            Command::Report => "report",
        }
    }
}

/// Applies command-line overrides to a configuration.
pub fn apply_overrides(cfg: &mut RunConfig, flags: &CommonFlags, command: &Command) {
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value.clone() {
                $field = v;
            }
        };
    }
    set!(cfg.window_start, flags.window_start);
    set!(cfg.window_len, flags.window_len);
    set!(cfg.h0, flags.h0);
    set!(cfg.h, flags.h);
    set!(cfg.k_exclude, flags.k_exclude);
    set!(cfg.ell, flags.ell);
    set!(cfg.k, flags.k);
    set!(cfg.seed, flags.seed);
    set!(cfg.thread_count, flags.threads);
    set!(cfg.output_dir, flags.out);
    match command {
        Command::Spectrum { method, count } => {
            set!(cfg.spectrum.method, method);
            set!(cfg.spectrum.count, count);
        }
        Command::Trace { method, samples } => {
            set!(cfg.trace.method, method);
            set!(cfg.trace.samples, samples);
        }
        Command::SieveSelftest { trials } | Command::GraphcoreSelftest { trials } => {
            set!(cfg.selftest.trials, trials);
        }
        Command::Kubilius { q, a, alphas } => {
            set!(cfg.kubilius.q, q);
            set!(cfg.kubilius.a, a);
            set!(cfg.kubilius.alphas, alphas);
        }
        Command::Walks { kappa, rho } => {
            set!(cfg.walks.kappa, kappa);
            set!(cfg.walks.rho, rho);
        }
        Command::Chowla { x, w, grid_points, absolute } => {
            set!(cfg.chowla.x, x);
            set!(cfg.chowla.w, w);
            set!(cfg.chowla.grid_points, grid_points);
            cfg.chowla.absolute |= *absolute;
        }
        Command::Scales { x, w } => {
            set!(cfg.chowla.x, x);
            set!(cfg.chowla.w, w);
        }
        Command::Primes | Command::Report => {}
    }
}

/// Resolves the configuration of a parsed command line.
pub fn resolve_config(cli: &Cli, threads_env: Option<&str>) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path).map_err(|e| e.to_string())?,
        None => RunConfig::default(),
    };
    apply_overrides(&mut cfg, &cli.common, &cli.command);
    if let Some(v) = threads_env {
        cfg.thread_count = v.trim().parse().map_err(|_| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
    }
    cfg.validate().map_err(|e| match e.section {
        Some(s) => format!("invalid {s}.{}: {}", e.key, e.message),
        None => format!("invalid {}: {}", e.key, e.message),
    })?;
    Ok(cfg)
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<report::Report, Failure> {
    match command {
        Command::Primes => commands::primes(cfg),
        Command::Spectrum { .. } => commands::spectrum(cfg),
        Command::Trace { .. } => commands::trace(cfg),
        Command::SieveSelftest { .. } => commands::sieve_selftest(cfg),
        Command::Kubilius { .. } => commands::kubilius(cfg),
        Command::Walks { .. } => commands::walks(cfg),
        Command::GraphcoreSelftest { .. } => commands::graphcore_selftest(cfg),
        Command::Chowla { .. } => commands::chowla(cfg),
        Command::Scales { .. } => commands::scales(cfg),
        Command::Report => commands::report(cfg),
    }
}

/// Runs a command and writes its artifacts; returns the exit status.
pub fn run_command(cfg: &RunConfig, command: &Command) -> i32 {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.thread_count).build();
    let result = match pool {
        Ok(pool) => pool.install(|| dispatch(command, cfg)),
        Err(e) => Err(Failure::Usage(format!("cannot start {} threads: {e}", cfg.thread_count))),
    };
    conclude(cfg, command.name(), result, start.elapsed())
}

/// Writes the report or reproducer of a finished command, then the
/// manifest, and maps the outcome to an exit status.
pub fn conclude(cfg: &RunConfig, name: &str, result: Result<report::Report, Failure>, elapsed: Duration) -> i32 {
    let mut writer = match ArtifactWriter::new(&cfg.output_dir, name) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_USAGE;
        }
    };
    writer.stage(name, elapsed);
    let code = match result {
        Ok(report) => match writer.emit_report(&report, cfg) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: {e:#}");
                EXIT_USAGE
            }
        },
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
        Err(Failure::Violation(rep)) => {
            eprintln!("assertion failed: {}", rep.message);
            match writer.emit_reproducer(&rep) {
                Ok(path) => eprintln!("reproducer written to {}", path.display()),
                Err(e) => eprintln!("error: {e:#}"),
            }
            EXIT_VIOLATION
        }
    };
    if let Err(e) = writer.finish(cfg) {
        eprintln!("error: {e:#}");
        return code.max(EXIT_USAGE);
    }
    code
}

/// Entry point shared by the binary and the tests.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let env = std::env::var(THREADS_ENV).ok();
    let cfg = match resolve_config(&cli, env.as_deref()) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    run_command(&cfg, &cli.command)
}
