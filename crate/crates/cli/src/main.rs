//! `afcpap` command-line entry point.
//!
//! Exit status: 0 on success, 2 for configuration or input errors, 3 for
//! numerical failures. Diagnostics go to stderr as `key=value` lines.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use afcpap::config::{self, ExperimentConfig};
use afcpap::experiment::{self, Diagnostic, Report, RunOptions};
use afcpap::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "afcpap", version, about = "Atomic frequency combs by piecewise adiabatic passage")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (TOML, or a manifest.json from an earlier run)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Repeat the run on a refined grid and fail if results move
    #[arg(long, global = true)]
    check_convergence: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Velocity comb, detuning profile and measured comb metrics
    Comb,
    /// Closed-form comb metrics and design conditions only
    Metrics,
    /// Prepare the comb, then store and retrieve the photon
    Store,
    /// Grid of runs over config key paths
    Sweep {
        /// Keep a manifest for every cell
        #[arg(long)]
        keep_cells: bool,
    },
    /// Final transfer over detuning and velocity for single-envelope STIRAP
    StirapMap,
    /// Frequency-comb spectra of the pulse trains
    Ofc,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Comb => "comb",
            Command::Metrics => "metrics",
            Command::Store => "store",
            Command::Sweep { .. } => "sweep",
            Command::StirapMap => "stirap-map",
            Command::Ofc => "ofc",
        }
    }
}

fn quote(v: &str) -> String {
    if v.is_empty() || v.contains([' ', '"', '=']) {
        format!("{v:?}")
    } else {
        v.to_string()
    }
}

fn emit(level: &str, event: &str, fields: &[(&str, String)]) {
    let mut line = format!("level={level} event={event}");
    for (k, v) in fields {
        line.push_str(&format!(" {k}={}", quote(v)));
    }
    eprintln!("{line}");
}

fn emit_diagnostic(d: &Diagnostic) {
    let level = match d.level {
        experiment::Level::Info => "info",
        experiment::Level::Warn => "warn",
    };
    emit(level, d.event, &[("message", d.message.clone())]);
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn fail(e: &Error) -> ExitCode {
    let code = exit_code(e);
    let mut fields = vec![("code", code.to_string()), ("message", e.to_string())];
    if let Error::Config { path, .. } = e {
        fields.push(("key", path.clone()));
    }
    emit("error", if code == 3 { "numerical" } else { "config" }, &fields);
    ExitCode::from(code)
}

fn run(cli: &Cli, cfg: &ExperimentConfig) -> afcpap::Result<Report> {
    let opts = RunOptions {
        check_convergence: cli.check_convergence,
        keep_cells: matches!(cli.command, Command::Sweep { keep_cells: true }),
    };
    match cli.command {
        Command::Comb => experiment::run_comb(cfg, &cli.out, opts),
        Command::Metrics => experiment::run_metrics(cfg, &cli.out),
        Command::Store => experiment::run_store(cfg, &cli.out, opts),
        Command::Sweep { .. } => experiment::run_sweep(cfg, &cli.out, opts),
        Command::StirapMap => experiment::run_stirap_map(cfg, &cli.out),
        Command::Ofc => experiment::run_ofc(cfg, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = cli.config.as_ref() else {
        return fail(&Error::config("--config", "a configuration file is required"));
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail(&Error::config("--threads", "must be at least 1"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&Error::config("--threads", e.to_string()));
        }
    }
    let cfg = match config::load(path) {
        Ok(c) => c,
        Err(Error::Io { path, source }) => return fail(&Error::config(path, source.to_string())),
        Err(e) => return fail(&e),
    };
    let command = cli.command.name();
    emit(
        "info",
        "start",
        &[
            ("command", command.to_string()),
            ("config", path.display().to_string()),
            ("out", cli.out.display().to_string()),
            ("threads", rayon::current_num_threads().to_string()),
        ],
    );
    let started = Instant::now();
    match run(&cli, &cfg) {
        Ok(report) => {
            report.diagnostics.iter().for_each(emit_diagnostic);
            for f in &report.files {
                emit("info", "wrote", &[("path", f.display().to_string())]);
            }
            emit(
                "info",
                "done",
                &[("command", command.to_string()), ("seconds", format!("{:.3}", started.elapsed().as_secs_f64()))],
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
