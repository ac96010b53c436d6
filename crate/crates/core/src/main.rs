use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use quasidelay::averaging::{analyze, SolverOptions};
use quasidelay::config::{digest_of, parse_config, spec_digest, ConfigError, RunManifest};
use quasidelay::dde::{integrate_model, IntegrationConfig, StepHistory};
use quasidelay::periodic::{find_periodic, PeriodicSearchConfig};
use quasidelay::verify::{builtin_cases, load_cases, run_suite, select_cases};
use quasidelay::{ModelError, ModelSpec, StateVector};

#[derive(Parser)]
#[command(name = "quasidelay", version, about = "Delayed quasispecies dynamics with periodic rates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the delay system and write a CSV trajectory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        t_end: f64,
        /// Step size; defaults to period / 256.
        #[arg(long)]
        h: Option<f64>,
        /// Record every n-th step.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Comma-separated state at t = 0; defaults to the uniform state.
        #[arg(long, value_delimiter = ',')]
        initial: Option<Vec<f64>>,
        /// Comma-separated constant value for t < 0; defaults to the initial state.
        #[arg(long, value_delimiter = ',')]
        prehistory: Option<Vec<f64>>,
        /// CSV output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the time-averaged algebraic system and report the sign sum.
    SolveAlgebraic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search for a periodic orbit by long integration.
    FindPeriodic {
        #[arg(long)]
        config: PathBuf,
        /// Transient length in periods.
        #[arg(long, default_value_t = 200)]
        transient: usize,
        #[arg(long, default_value_t = 256)]
        samples_per_period: usize,
        /// Period-map residual tolerance.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 800)]
        max_extra_periods: usize,
        #[arg(long, value_delimiter = ',')]
        initial: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        prehistory: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write one period of the orbit as CSV.
        #[arg(long)]
        orbit_csv: Option<PathBuf>,
    },
    /// Run the verification suite.
    Verify {
        /// `all`, a case name, or a scenario prefix such as `E1`.
        #[arg(long, default_value = "all")]
        suite: String,
        /// JSON file with extra cases, run instead of the built-in ones.
        #[arg(long)]
        cases: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        junit: Option<PathBuf>,
    },
}

/// Errors that map to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load(path: &Path) -> Result<ModelSpec> {
    parse_config(path).with_context(|| format!("loading {}", path.display()))
}

fn history(spec: &ModelSpec, initial: Option<Vec<f64>>, prehistory: Option<Vec<f64>>) -> Result<StepHistory> {
    let n = spec.dim();
    let initial = initial.unwrap_or_else(|| vec![1.0 / n as f64; n]);
    let prehistory = prehistory.unwrap_or_else(|| initial.clone());
    if initial.len() != n || prehistory.len() != n {
        return Err(usage(format!("initial state and prehistory need {n} components")));
    }
    Ok(StepHistory {
        start: 0.0,
        before: StateVector(prehistory),
        at_start: StateVector(initial),
    })
}

fn manifest(
    subcommand: &str,
    config: Option<&Path>,
    digest: String,
    started: Instant,
    outputs: &[&Option<PathBuf>],
) -> RunManifest {
    RunManifest {
        subcommand: subcommand.to_string(),
        config_path: config.map(|p| p.display().to_string()),
        config_digest: digest,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs: outputs
            .iter()
            .filter_map(|o| o.as_ref().map(|p| p.display().to_string()))
            .collect(),
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    manifest: &'a RunManifest,
    report: &'a T,
}

fn write_json<T: Serialize>(out: &Option<PathBuf>, manifest: &RunManifest, report: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(&Wrapped { manifest, report })?;
    match out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<()> {
    let p = manifest_path(out);
    fs::write(&p, serde_json::to_string_pretty(manifest)? + "\n")
        .with_context(|| format!("writing {}", p.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let started = Instant::now();
    match cli.command {
        Command::Simulate {
            config,
            t_end,
            h,
            stride,
            initial,
            prehistory,
            out,
        } => {
            let spec = load(&config)?;
            if stride == 0 {
                return Err(usage("--stride must be positive"));
            }
            let step = h.unwrap_or(spec.period / 256.0);
            let hist = history(&spec, initial, prehistory)?;
            let cfg = IntegrationConfig::new(step, t_end).with_stride(stride);
            let traj = integrate_model(&spec, &hist, 0.0, &cfg)?;
            match &out {
                Some(p) => {
                    let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
                    let mut w = BufWriter::new(f);
                    traj.write_csv(&mut w)?;
                    w.flush()?;
                    let m = manifest("simulate", Some(&config), spec_digest(&spec), started, &[&out]);
                    write_manifest(p, &m)?;
                }
                None => traj.write_csv(io::stdout().lock())?,
            }
            eprintln!(
                "{} samples, step {:.6e}, max |sum - 1| = {:.3e}",
                traj.len(),
                traj.step,
                traj.max_simplex_deviation()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::SolveAlgebraic { config, out } => {
            let spec = load(&config)?;
            let report = analyze(&spec, &SolverOptions::default())?;
            let m = manifest("solve-algebraic", Some(&config), spec_digest(&spec), started, &[&out]);
            write_json(&out, &m, &report)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::FindPeriodic {
            config,
            transient,
            samples_per_period,
            tol,
            max_extra_periods,
            initial,
            prehistory,
            out,
            orbit_csv,
        } => {
            let spec = load(&config)?;
            let hist = history(&spec, initial, prehistory)?;
            let search = PeriodicSearchConfig {
                transient_periods: transient,
                samples_per_period,
                residual_tolerance: tol,
                max_extra_periods,
                ..PeriodicSearchConfig::default()
            };
            let report = find_periodic(&spec, &hist, &search)?;
            if let Some(p) = &orbit_csv {
                let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
                let mut w = BufWriter::new(f);
                report.write_csv(&mut w)?;
                w.flush()?;
            }
            let m = manifest(
                "find-periodic",
                Some(&config),
                spec_digest(&spec),
                started,
                &[&out, &orbit_csv],
            );
            if let Some(p) = &orbit_csv {
                write_manifest(p, &m)?;
            }
            write_json(&out, &m, &report)?;
            if !report.converged {
                eprintln!("no convergence: last residual {:.3e}", report.residual);
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            suite,
            cases,
            out,
            junit,
        } => {
            let all = match &cases {
                Some(p) => load_cases(p).with_context(|| format!("loading {}", p.display()))?,
                None => builtin_cases(),
            };
            let selected = select_cases(all, &suite);
            if selected.is_empty() {
                return Err(usage(format!("no verification case matches `{suite}`")));
            }
            let report = run_suite(&selected);
            print!("{}", report.table());
            if let Some(p) = &junit {
                fs::write(p, report.to_junit()).with_context(|| format!("writing {}", p.display()))?;
            }
            let m = manifest("verify", cases.as_deref(), digest_of(&selected), started, &[&out, &junit]);
            if out.is_some() {
                write_json(&out, &m, &report)?;
            }
            Ok(if report.all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    let usage_like = err.chain().any(|e| {
        e.is::<UsageError>() || e.is::<ConfigError>() || e.is::<ModelError>()
    });
    if usage_like {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
