//! The four CSV reports.

use std::fs;
use std::path::Path;

use csv::{Terminator, WriterBuilder};

use crate::cli::CliError;
use crate::power_model::InterfaceKind;
use crate::scheduler::Schedule;
use crate::simulator::{power_trace, EnergyReport, QosReport, SavingsReport, Scenario, Timelines};
use crate::units::{fixed_decimal, ClientId, Micros};

pub const SCHEDULE_CSV: &str = "schedule.csv";
pub const POWER_TRACE_CSV: &str = "power_trace.csv";
pub const ENERGY_SUMMARY_CSV: &str = "energy_summary.csv";
pub const QOS_CSV: &str = "qos.csv";

/// Baseline energy and the resulting savings, when a comparison was run.
pub struct Comparison<'a> {
    pub baseline: &'a EnergyReport,
    pub savings: &'a SavingsReport,
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
    let mut w = WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Csv { path: path.to_path_buf(), message: e.to_string() };
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Csv { path: path.to_path_buf(), message: e.to_string() })?;
    fs::write(path, bytes).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn interface_list<'a>(kinds: impl Iterator<Item = &'a InterfaceKind>) -> String {
    let mut names: Vec<String> = kinds.map(|k| k.to_string()).collect();
    names.sort();
    names.join("+")
}

fn energy_rows(report: &EnergyReport, mode: &str, savings: Option<&SavingsReport>) -> Vec<(ClientId, Vec<String>)> {
    report
        .clients
        .iter()
        .map(|(id, c)| {
            let saved = match savings.map(|s| s.clients.get(id).map(|x| x.fixed(6))) {
                Some(Some(Some(f))) => f,
                Some(Some(None)) => "undefined".to_string(),
                _ => String::new(),
            };
            let row = vec![
                id.to_string(),
                interface_list(c.interfaces.keys()),
                mode.to_string(),
                c.energy.mj_fixed(),
                c.average.mw_fixed(6),
                saved,
            ];
            (*id, row)
        })
        .collect()
}

/// Writes `schedule.csv`, `power_trace.csv`, `energy_summary.csv` and
/// `qos.csv` into `outdir`, creating it if needed.
pub fn emit_reports(
    scenario: &Scenario,
    schedule: &Schedule,
    energy: &EnergyReport,
    qos: &QosReport,
    timelines: &Timelines,
    comparison: Option<Comparison<'_>>,
    outdir: &Path,
) -> Result<(), CliError> {
    fs::create_dir_all(outdir).map_err(|source| CliError::Io { path: outdir.to_path_buf(), source })?;

    let mut bursts: Vec<_> = schedule.bursts.iter().collect();
    bursts.sort_by(|a, b| (a.client, a.start, &a.interface, a.end).cmp(&(b.client, b.start, &b.interface, b.end)));
    let rows = bursts
        .into_iter()
        .map(|b| {
            vec![
                b.client.to_string(),
                b.interface.to_string(),
                b.start.0.to_string(),
                b.end.0.to_string(),
                b.bytes.to_string(),
            ]
        })
        .collect();
    write_csv(&outdir.join(SCHEDULE_CSV), &["client", "interface", "start_us", "end_us", "bytes"], rows)?;

    let trace = power_trace(timelines, &scenario.models())?;
    let mut points: Vec<(ClientId, Micros, &InterfaceKind, i64)> = Vec::new();
    for ((client, kind), steps) in &trace {
        points.extend(steps.iter().map(|s| (*client, s.at, kind, s.power.0)));
    }
    points.sort();
    let rows = points
        .into_iter()
        .map(|(c, t, k, uw)| vec![c.to_string(), k.to_string(), t.0.to_string(), fixed_decimal(uw as i128, 3)])
        .collect();
    write_csv(&outdir.join(POWER_TRACE_CSV), &["client", "interface", "t_us", "power_mw"], rows)?;

    let mut rows = energy_rows(energy, "scheduled", comparison.as_ref().map(|c| c.savings));
    if let Some(c) = &comparison {
        rows.extend(energy_rows(c.baseline, "baseline", None));
    }
    // stable: scheduled before baseline within a client
    rows.sort_by_key(|(id, _)| *id);
    write_csv(
        &outdir.join(ENERGY_SUMMARY_CSV),
        &["client", "interface", "mode", "energy_mj", "avg_power_mw", "savings"],
        rows.into_iter().map(|(_, r)| r).collect(),
    )?;

    let rows = qos
        .events()
        .into_iter()
        .map(|e| vec![e.kind.as_str().to_string(), e.client.to_string(), e.at.0.to_string(), e.detail])
        .collect();
    write_csv(&outdir.join(QOS_CSV), &["event", "client", "t_us", "detail"], rows)
}
