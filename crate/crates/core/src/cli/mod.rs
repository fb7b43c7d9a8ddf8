//! Command-line front end: scenario files in, CSV reports out.
//!
//! Exit status: 0 when every run completes with no QoS violation, 2 when a
//! run has violations (reports are still written), 1 on any error.

mod reports;
mod scenario;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;

use clap::Parser;
use thiserror::Error;

use crate::power_model::PowerModelError;
use crate::simulator::{compare, run, run_baseline, ConfigError, SchedulerKind, SimError};

pub use reports::{emit_reports, Comparison, ENERGY_SUMMARY_CSV, POWER_TRACE_CSV, QOS_CSV, SCHEDULE_CSV};
pub use scenario::{parse_scenario, parse_scenario_str, scenario_to_toml};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_QOS: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Syntax { path: String, message: String },
    #[error("invalid scenario: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("cannot serialize scenario: {0}")]
    Serialize(String),
    #[error("no scenario named `{0}` (looked for the path and scenarios/{0}.toml)")]
    NotFound(String),
}

impl From<PowerModelError> for CliError {
    fn from(e: PowerModelError) -> Self {
        CliError::Sim(SimError::Power(e))
    }
}

#[derive(Debug, Parser)]
#[command(name = "hotspot-sim", version, about = "Energy-aware burst scheduling simulator for streaming clients")]
struct Flags {
    /// Scenario file, a name under scenarios/, or a directory of scenarios
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    /// Overrides the scheduler chosen in the scenario file
    #[arg(long, value_name = "edf|wfq")]
    scheduler: Option<SchedulerKind>,
    /// Also run the always-on baseline and report savings
    #[arg(long)]
    baseline: bool,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Seed reserved for trace generators; runs are deterministic
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub scheduler: Option<SchedulerKind>,
    pub baseline: bool,
    pub out: PathBuf,
    pub seed: u64,
}

impl From<Flags> for RunConfig {
    fn from(f: Flags) -> Self {
        RunConfig { scenario: f.scenario, scheduler: f.scheduler, baseline: f.baseline, out: f.out, seed: f.seed }
    }
}

/// Result of one scenario run, for the caller to print.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub name: String,
    pub lines: Vec<String>,
    pub violations: usize,
}

/// Accepts an existing path, or a bare name looked up as
/// `scenarios/<name>.toml`.
pub fn resolve_scenario_path(arg: &Path) -> Result<PathBuf, CliError> {
    if arg.exists() {
        return Ok(arg.to_path_buf());
    }
    let named = Path::new("scenarios").join(arg).with_extension("toml");
    if named.exists() {
        return Ok(named);
    }
    Err(CliError::NotFound(arg.display().to_string()))
}

/// Runs one scenario file and writes its reports into `out`.
pub fn run_file(path: &Path, config: &RunConfig, out: &Path) -> Result<RunSummary, CliError> {
    let mut scenario = parse_scenario(path)?;
    if let Some(kind) = config.scheduler {
        scenario.scheduler.kind = kind;
    }
    let output = run(&scenario)?;
    let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    let mut lines = vec![format!(
        "{name}: scheduler {}, {} bursts, {} switches, energy {} mJ",
        scenario.scheduler.kind,
        output.schedule.bursts.len(),
        output.qos.switches.len(),
        output.energy.total.mj_fixed()
    )];
    let baseline = if config.baseline { Some(run_baseline(&scenario)?) } else { None };
    let savings = match &baseline {
        Some(b) => Some(compare(&output.energy, b)?),
        None => None,
    };
    for (id, client) in &output.energy.clients {
        for (kind, e) in &client.interfaces {
            let states: Vec<String> = e.time_in_state.iter().map(|(s, t)| format!("{s}={}", t.0)).collect();
            lines.push(format!(
                "  client {id} {kind}: {} mJ, {} mW avg, {} transitions, {}",
                e.energy.mj_fixed(),
                e.average.mw_fixed(6),
                e.transitions,
                states.join(" ")
            ));
        }
    }
    if let (Some(b), Some(s)) = (&baseline, &savings) {
        let total = s.total.fixed(6).unwrap_or_else(|| "undefined".into());
        lines.push(format!("  baseline {} mJ, savings {total}", b.total.mj_fixed()));
    }
    let comparison = match (&baseline, &savings) {
        (Some(baseline), Some(savings)) => Some(Comparison { baseline, savings }),
        _ => None,
    };
    emit_reports(&scenario, &output.schedule, &output.energy, &output.qos, &output.timelines, comparison, out)?;
    let violations = output.qos.violations();
    if violations > 0 {
        lines.push(format!("  {violations} QoS violations, see {}", out.join(QOS_CSV).display()));
    }
    Ok(RunSummary { name, lines, violations })
}

/// Runs a scenario, or every `*.toml` in a directory on its own thread with
/// reports under `<out>/<stem>/`. Returns the exit status.
pub fn execute(config: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let path = match resolve_scenario_path(&config.scenario) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_ERROR;
        }
    };
    let jobs: Vec<(PathBuf, PathBuf)> = if path.is_dir() {
        let entries = match std::fs::read_dir(&path) {
            Ok(e) => e,
            Err(source) => {
                let _ = writeln!(stderr, "error: {}", CliError::Io { path, source });
                return EXIT_ERROR;
            }
        };
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|f| {
                let stem = f.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
                let out = config.out.join(stem);
                (f, out)
            })
            .collect()
    } else {
        vec![(path, config.out.clone())]
    };

    let results: Vec<(PathBuf, Result<RunSummary, CliError>)> = thread::scope(|scope| {
        let handles: Vec<_> =
            jobs.iter().map(|(file, out)| (file, scope.spawn(move || run_file(file, config, out)))).collect();
        handles.into_iter().map(|(file, h)| (file.clone(), h.join().expect("scenario worker panicked"))).collect()
    });

    let mut status = EXIT_OK;
    for (file, result) in results {
        match result {
            Ok(summary) => {
                for line in &summary.lines {
                    let _ = writeln!(stdout, "{line}");
                }
                if summary.violations > 0 && status == EXIT_OK {
                    status = EXIT_QOS;
                }
            }
            Err(e) => {
                let _ = writeln!(stderr, "error: {}: {e}", file.display());
                status = EXIT_ERROR;
            }
        }
    }
    status
}

/// Parses `args` (program name first) and runs. Usage problems print the
/// usage text and return 1; `--help` and `--version` return 0.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Flags::try_parse_from(args) {
        Ok(flags) => execute(&RunConfig::from(flags), stdout, stderr),
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{rendered}");
                EXIT_OK
            } else {
                let _ = write!(stderr, "{rendered}");
                EXIT_ERROR
            }
        }
    }
}
