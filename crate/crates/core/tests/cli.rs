mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hotspot_sim::cli::{main_with_args, ENERGY_SUMMARY_CSV, POWER_TRACE_CSV, QOS_CSV, SCHEDULE_CSV};

fn hotspot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hotspot-sim"))
        .args(args)
        .current_dir(common::repo_root())
        .output()
        .expect("binary runs")
}

fn records(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let header = reader.headers().expect("header").iter().map(String::from).collect();
    let rows = reader.records().map(|r| r.expect("record").iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn missing_scenario_flag_prints_usage_and_fails() {
    let out = hotspot(&[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--scenario"), "{err}");
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn unknown_flag_fails_with_usage() {
    let out = hotspot(&["--scenario", "single_client", "--turbo"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn help_exits_cleanly() {
    let out = hotspot(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in ["--scenario", "--scheduler", "--baseline", "--out", "--seed"] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn bad_scheduler_value_is_a_usage_error() {
    let out = hotspot(&["--scenario", "single_client", "--scheduler", "fifo"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_scenario_name_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hotspot(&["--scenario", "no_such_scenario", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_scenario"));
}

#[test]
fn mp3_with_baseline_succeeds_and_fills_savings() {
    let dir = tempfile::tempdir().unwrap();
    let out = hotspot(&[
        "--scenario",
        "mp3_three_clients",
        "--baseline",
        "--scheduler",
        "edf",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = records(&dir.path().join(ENERGY_SUMMARY_CSV));
    assert_eq!(header, ["client", "interface", "mode", "energy_mj", "avg_power_mw", "savings"]);
    assert_eq!(rows.len(), 6);
    let modes: Vec<(&str, &str)> = rows.iter().map(|r| (r[0].as_str(), r[2].as_str())).collect();
    assert_eq!(
        modes,
        [
            ("1", "scheduled"),
            ("1", "baseline"),
            ("2", "scheduled"),
            ("2", "baseline"),
            ("3", "scheduled"),
            ("3", "baseline")
        ]
    );
    for r in &rows {
        assert_eq!(r[1], "bluetooth+wlan");
        if r[2] == "scheduled" {
            let saved: f64 = r[5].parse().expect("savings is a number");
            assert!(saved > 0.9 && saved < 1.0, "{saved}");
        } else {
            assert!(r[5].is_empty());
        }
    }
}

#[test]
fn wfq_override_runs_the_same_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        hotspot(&["--scenario", "mp3_three_clients", "--scheduler", "wfq", "--out", dir.path().to_str().unwrap()]);
    assert!(matches!(out.status.code(), Some(0) | Some(2)));
    assert!(String::from_utf8_lossy(&out.stdout).contains("scheduler wfq"));
}

#[test]
fn unservable_stream_exits_2_with_qos_events() {
    let dir = tempfile::tempdir().unwrap();
    let out = hotspot(&["--scenario", "unservable", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let (_, rows) = records(&dir.path().join(QOS_CSV));
    assert!(!rows.is_empty());
    assert!(rows.iter().any(|r| r[0] == "no_viable_interface"));
    assert!(rows.iter().any(|r| r[0] == "startup_violation"));
    for f in [SCHEDULE_CSV, POWER_TRACE_CSV, ENERGY_SUMMARY_CSV] {
        assert!(dir.path().join(f).exists(), "{f} written despite violations");
    }
}

#[test]
fn invalid_scenario_reports_field_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    fs::write(&file, "horizon_us = 1000\ncapacity_bps = 1000\n[[streams]]\nclient = 9\nbitrate_bps = 1\nduration_us = 1\nprebuffer_bytes = 1\nbuffer_capacity_bytes = 1\nmax_startup_latency_us = 1\n").unwrap();
    let out = hotspot(&["--scenario", file.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("streams[0].client"));
}

#[test]
fn every_csv_has_constant_columns_and_sorted_rows() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = common::scenario_path("mp3_three_clients_wake_cost");
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let code = main_with_args(
        ["hotspot-sim", "--scenario", scenario.to_str().unwrap(), "--baseline", "--out", dir.path().to_str().unwrap()],
        &mut stdout,
        &mut stderr,
    );
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&stderr));
    for (file, columns, client_col, time_col) in [
        (SCHEDULE_CSV, 5, 0, Some(2)),
        (POWER_TRACE_CSV, 4, 0, Some(2)),
        (ENERGY_SUMMARY_CSV, 6, 0, None),
        (QOS_CSV, 4, 1, Some(2)),
    ] {
        let path = dir.path().join(file);
        let text = fs::read_to_string(&path).unwrap();
        assert!(!text.contains('\r'));
        assert!(text.ends_with('\n'));
        let (header, rows) = records(&path);
        assert_eq!(header.len(), columns, "{file}");
        assert!(rows.iter().all(|r| r.len() == columns), "{file}");
        let keys: Vec<(u32, i64)> = rows
            .iter()
            .map(|r| (r[client_col].parse().unwrap(), time_col.map_or(0, |c| r[c].parse().unwrap())))
            .collect();
        assert!(keys.windows(2).all(|w| w[0] <= w[1]), "{file} not sorted by client, time");
    }
    let (_, trace) = records(&dir.path().join(POWER_TRACE_CSV));
    assert!(trace.iter().all(|r| r[3].split_once('.').is_some_and(|(_, d)| d.len() == 3)));
}

#[test]
fn directory_runs_each_scenario_into_its_own_folder() {
    // scenarios refer to models as ../models/*.toml
    let root = tempfile::tempdir().unwrap();
    let src = root.path().join("batch");
    fs::create_dir_all(&src).unwrap();
    fs::create_dir_all(root.path().join("models")).unwrap();
    fs::copy(common::repo_root().join("models/wlan.toml"), root.path().join("models/wlan.toml")).unwrap();
    for name in ["single_client", "unservable"] {
        fs::copy(common::scenario_path(name), src.join(format!("{name}.toml"))).unwrap();
    }
    let out = tempfile::tempdir().unwrap();
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let code = main_with_args(
        ["hotspot-sim", "--scenario", src.to_str().unwrap(), "--out", out.path().to_str().unwrap()],
        &mut stdout,
        &mut stderr,
    );
    assert_eq!(code, 2);
    for name in ["single_client", "unservable"] {
        assert!(out.path().join(name).join(SCHEDULE_CSV).exists());
    }
    let text = String::from_utf8(stdout).unwrap();
    let single = text.find("single_client:").unwrap();
    let unservable = text.find("unservable:").unwrap();
    assert!(single < unservable, "summaries follow file order");
}

#[test]
fn seed_flag_does_not_change_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let scenario = common::scenario_path("reference");
    for (dir, seed) in [(&a, "0"), (&b, "42")] {
        let code = main_with_args(
            [
                "hotspot-sim",
                "--scenario",
                scenario.to_str().unwrap(),
                "--seed",
                seed,
                "--out",
                dir.path().to_str().unwrap(),
            ],
            &mut Vec::new(),
            &mut Vec::new(),
        );
        assert_eq!(code, 0);
    }
    for f in [SCHEDULE_CSV, POWER_TRACE_CSV, ENERGY_SUMMARY_CSV, QOS_CSV] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
}
