//! `oflc`: run scenario files through the OFLC controller and its baselines.
//!
//! Exit status: 0 on success, 1 for usage, configuration or I/O errors, 2 when
//! a simulation aborts numerically or the self-test finds a violation.

use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oflc_core::config::{parse_config, Overrides, RunConfig};
use oflc_core::trace::{write_comparison, write_summary, write_trace};
use oflc_core::{run_scenario, ControllerKind, RunResult, Scenario};

const DEFAULT_OUT_DIR: &str = "runs";

#[derive(Parser)]
#[command(
    name = "oflc",
    version,
    about = "Optimal feedback-linearization torque control simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one controller and write its trace and summary.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// oflc, flc_z0 or id_zero
        #[arg(long)]
        controller: ControllerKind,
    },
    /// Simulate every controller listed in the scenario (all three by default)
    /// and write a side-by-side summary with the energy-saving ratio.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Args)]
struct Common {
    /// Scenario file (INI format).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; falls back to OFLC_OUT_DIR, then the scenario's
    /// `[output] dir`, then `runs`.
    #[arg(long, env = "OFLC_OUT_DIR")]
    out: Option<PathBuf>,
    /// Keep every n-th control frame in the trace.
    #[arg(long)]
    decimation: Option<usize>,
    /// Voltage limit (V).
    #[arg(long)]
    v_max: Option<f64>,
    /// Costate horizon (s).
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    kp: Option<f64>,
    #[arg(long)]
    ki: Option<f64>,
    /// Fraction of the voltage budget given to the loss channel, in (0, 1].
    #[arg(long)]
    alpha_z: Option<f64>,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl Failure {
    fn io(path: &Path, e: io::Error) -> Self {
        Failure::Usage(format!("{}: {e}", path.display()))
    }
}

fn load(common: &Common) -> Result<(Scenario, RunConfig, PathBuf), Failure> {
    let text = fs::read_to_string(&common.scenario).map_err(|e| Failure::io(&common.scenario, e))?;
    let bad = |e: oflc_core::Error| Failure::Usage(format!("{}: {e}", common.scenario.display()));
    let (mut scenario, mut run) = parse_config(&text).map_err(bad)?;
    run.scenario_path = Some(common.scenario.clone());
    run.overrides = Overrides {
        v_max: common.v_max,
        horizon: common.horizon,
        kp: common.kp,
        ki: common.ki,
        alpha_z: common.alpha_z,
    };
    run.overrides.apply(&mut scenario).map_err(bad)?;
    if let Some(d) = common.decimation {
        if d == 0 {
            return Err(Failure::Usage("--decimation must be at least 1".into()));
        }
        run.decimation = d;
    }
    let out = common
        .out
        .clone()
        .or_else(|| run.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    fs::create_dir_all(&out).map_err(|e| Failure::io(&out, e))?;
    Ok((scenario, run, out))
}

fn write_file(path: PathBuf, f: impl FnOnce(BufWriter<File>) -> io::Result<()>) -> Result<(), Failure> {
    File::create(&path)
        .and_then(|file| f(BufWriter::new(file)))
        .map_err(|e| Failure::io(&path, e))
}

/// Writes `<kind>_trace.csv` and `<kind>_summary.txt`.
fn write_run(out: &Path, r: &RunResult, decimation: usize) -> Result<(), Failure> {
    let name = r.controller.name();
    write_file(out.join(format!("{name}_trace.csv")), |w| {
        write_trace(w, &r.frames, decimation)
    })?;
    write_file(out.join(format!("{name}_summary.txt")), |w| write_summary(w, r))
}

/// Runs one controller and writes its files, including the partial trace of
/// an aborted run.
fn simulate_one(
    scenario: &Scenario,
    kind: ControllerKind,
    out: &Path,
    decimation: usize,
) -> Result<RunResult, Failure> {
    match run_scenario(scenario, kind) {
        Ok(r) => {
            write_run(out, &r, decimation)?;
            Ok(r)
        }
        Err(abort) => {
            write_run(out, &abort.partial, decimation)?;
            Err(Failure::Numerical(format!("{kind}: {abort}")))
        }
    }
}

fn simulate(common: &Common, kind: ControllerKind) -> Result<(), Failure> {
    let (scenario, run, out) = load(common)?;
    let r = simulate_one(&scenario, kind, &out, run.decimation)?;
    println!(
        "{kind}: cost {:.6} A^2 s, copper {:.6} J, rms error {:.6} N m -> {}",
        r.cost_integral,
        r.copper_energy,
        r.rms_tracking_error,
        out.display()
    );
    Ok(())
}

fn compare(common: &Common) -> Result<(), Failure> {
    let (scenario, run, out) = load(common)?;
    let outcomes: Vec<Result<RunResult, Failure>> = std::thread::scope(|scope| {
        let handles: Vec<_> = run
            .controllers
            .iter()
            .map(|&kind| {
                let (scenario, out) = (&scenario, &out);
                scope.spawn(move || simulate_one(scenario, kind, out, run.decimation))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    let mut results = Vec::new();
    for outcome in outcomes {
        results.push(outcome?);
    }
    write_file(out.join("compare_summary.txt"), |w| write_comparison(w, &results))?;
    write_comparison(io::stdout().lock(), &results).map_err(|e| Failure::Usage(e.to_string()))
}

fn selftest() -> Result<(), Failure> {
    let checks = oflc_core::verify::selftest();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    match checks.iter().filter(|c| !c.passed).count() {
        0 => Ok(()),
        n => Err(Failure::Numerical(format!("{n} self-test check(s) failed"))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match &cli.command {
        Command::Simulate { common, controller } => simulate(common, *controller),
        Command::Compare { common } => compare(common),
        Command::Selftest => selftest(),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical abort: {msg}");
            ExitCode::from(2)
        }
    }
}
