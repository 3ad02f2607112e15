//! Command-line front end. Each command reads one experiment config, writes its artifacts and
//! a `manifest.json` into one output directory, and maps errors to exit codes: 2 for usage,
//! config and I/O problems, 3 for everything else.

mod commands;
mod output;
mod recipes;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{ExperimentConfig, LoadedConfig, OutputFormat};
use crate::error::{Error, Result};

pub use output::{ArtifactRecord, FAILED_MARKER, MANIFEST};
pub use recipes::Figure;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Output root when neither `--out-dir` nor `[output] dir` is given.
pub const OUT_DIR_ENV: &str = "MUONIUM_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "muonium", version, about = "Electron-muon spin dynamics and muon asymmetry analysis")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Experiment config (TOML, or JSON when the file starts with `{`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of CPUs. Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
    /// Progress on stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Energy levels over the configured fields.
    Levels,
    /// Transition frequencies and drive gyromagnetic ratios over the configured fields.
    Transitions,
    /// Propagate the configured sequence (traces, flip-angle sweeps or Ramsey fringes).
    Simulate,
    /// Muon line frequencies under continuous drive, analytic and optionally numeric.
    Demur,
    /// Effective Rabi frequency over a (B0, B1) grid.
    RabiMap,
    /// Drive-induced shift of the double-quantum resonance.
    ShiftCurve,
    /// Linewidth narrowing map and damping versus drive.
    Narrowing,
    /// Fit a trace or histogram pair.
    Fit,
    /// Synthesize Poisson decay histograms.
    Synth,
    /// Run a built-in recipe.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
    },
}

/// A command with its inputs resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Levels,
    Transitions,
    Simulate,
    Demur,
    RabiMap,
    ShiftCurve,
    Narrowing,
    Fit,
    Synth,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Levels => "levels",
            Task::Transitions => "transitions",
            Task::Simulate => "simulate",
            Task::Demur => "demur",
            Task::RabiMap => "rabi-map",
            Task::ShiftCurve => "shift-curve",
            Task::Narrowing => "narrowing",
            Task::Fit => "fit",
            Task::Synth => "synth",
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
    }
}

/// `--out-dir`, then `[output] dir`, then `$MUONIUM_OUT_DIR/<label>`, then
/// `./muonium-out/<label>`.
fn resolve_out_dir(flag: Option<&Path>, cfg: Option<&ExperimentConfig>, label: &str) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(d) = cfg.and_then(|c| c.output.dir.as_ref()) {
        return PathBuf::from(d);
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(label),
        _ => PathBuf::from("muonium-out").join(label),
    }
}

fn resolve(cli: &Cli) -> Result<(Task, LoadedConfig, String)> {
    let task = match &cli.command {
        Command::Reproduce { figure } => {
            if cli.global.config.is_some() {
                return Err(Error::Config("reproduce uses a built-in config; --config is not accepted".into()));
            }
            return Ok((figure.task(), figure.config()?, figure.name().to_string()));
        }
        Command::Levels => Task::Levels,
        Command::Transitions => Task::Transitions,
        Command::Simulate => Task::Simulate,
        Command::Demur => Task::Demur,
        Command::RabiMap => Task::RabiMap,
        Command::ShiftCurve => Task::ShiftCurve,
        Command::Narrowing => Task::Narrowing,
        Command::Fit => Task::Fit,
        Command::Synth => Task::Synth,
    };
    let path = cli.global.config.as_ref().ok_or_else(|| Error::Config(format!("{} needs --config", task.name())))?;
    Ok((task, ExperimentConfig::load(path)?, task.name().to_string()))
}

pub fn run(cli: Cli) -> i32 {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    let g = &cli.global;
    let fallback_label = match &cli.command {
        Command::Reproduce { figure } => figure.name().to_string(),
        _ => "run".to_string(),
    };

    let (task, loaded, label) = match resolve(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            // Config never parsed: only an explicit output location gets a marker.
            if g.out_dir.is_some() || std::env::var_os(OUT_DIR_ENV).is_some() {
                let dir = resolve_out_dir(g.out_dir.as_deref(), None, &fallback_label);
                let _ = crate::io::write_text(&dir.join(FAILED_MARKER), &format!("{e}\n"));
            }
            return exit_code(&e);
        }
    };

    let cfg = &loaded.config;
    let out_dir = resolve_out_dir(g.out_dir.as_deref(), Some(cfg), &label);
    let format = match g.format {
        Some(FormatArg::Csv) => OutputFormat::Csv,
        Some(FormatArg::Json) => OutputFormat::Json,
        None => cfg.output.format.unwrap_or_default(),
    };
    let workers = g.workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let mut ctx = output::RunContext {
        out_dir: out_dir.clone(),
        format,
        config_hash: loaded.hash.clone(),
        seed: g.seed.unwrap_or(cfg.seed),
        verbose: g.verbose,
        config_dir: g.config.as_ref().and_then(|p| p.parent().map(Path::to_path_buf)),
        artifacts: Vec::new(),
    };

    let marker = out_dir.join(FAILED_MARKER);
    let result = std::fs::create_dir_all(&out_dir)
        .map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))
        .and_then(|_| match std::fs::remove_file(&marker) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::Io(format!("{}: {e}", marker.display()))),
            _ => Ok(()),
        })
        .and_then(|_| {
            ctx.log(format!("{} -> {} ({workers} worker(s))", task.name(), out_dir.display()));
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers.max(1))
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))
        })
        .and_then(|pool| pool.install(|| commands::run(task, cfg, &mut ctx)));

    let manifest = output::Manifest {
        tool: "muonium",
        version: env!("CARGO_PKG_VERSION"),
        command: task.name(),
        config_source: &loaded.source,
        config_hash: &loaded.hash,
        seed: ctx.seed,
        workers,
        format,
        status: if result.is_ok() { "ok" } else { "failed" },
        error: result.as_ref().err().map(|e| e.to_string()),
        artifacts: &ctx.artifacts,
        started_unix_s: started,
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    let written = output::write_manifest(&out_dir, &manifest);
    let result = result.and(written);
    match result {
        Ok(()) => {
            ctx.log(format!("done in {:.2} s", clock.elapsed().as_secs_f64()));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            let _ = crate::io::write_text(&marker, &format!("{e}\n"));
            exit_code(&e)
        }
    }
}
