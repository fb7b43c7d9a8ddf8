//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hotspot_sim::cli::{
    parse_scenario, run_file, RunConfig, ENERGY_SUMMARY_CSV, POWER_TRACE_CSV, QOS_CSV, SCHEDULE_CSV,
};
use hotspot_sim::scheduler::{weight_from_f64, BurstRequest};
use hotspot_sim::simulator::{baseline_timelines, SchedulerKind};
use hotspot_sim::units::{ClientId, Micros};
use hotspot_sim::{compare, run, run_baseline, schedule_edf, schedule_wfq, InterfaceKind, Scenario};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INSTANCES: u64 = 200;
const NEVER: Micros = Micros(1_000_000_000_000);

type Check = fn() -> Verdict;

struct Verdict {
    ok: bool,
    detail: String,
}

fn pass(detail: String) -> Verdict {
    Verdict { ok: true, detail }
}

fn fail(detail: String) -> Verdict {
    Verdict { ok: false, detail }
}

fn load(name: &str) -> Scenario {
    parse_scenario(&common::scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn savings_of(scenario: &Scenario) -> Result<(f64, usize), String> {
    let out = run(scenario).map_err(|e| e.to_string())?;
    let base = run_baseline(scenario).map_err(|e| e.to_string())?;
    let s = compare(&out.energy, &base).map_err(|e| e.to_string())?;
    let f = s.total.fraction().ok_or("savings undefined")?;
    Ok((f, out.qos.violations()))
}

fn models_are_ideal(scenario: &Scenario) -> Result<(), String> {
    for c in &scenario.clients {
        for m in &c.interfaces {
            let sleep = m.power_of(&m.sleep_state).map_err(|e| e.to_string())?;
            if sleep.0 * 100 > m.active_power().0 * 3 {
                return Err(format!("client {} {}: sleep power above 3% of active", c.id, m.kind));
            }
            if m.transitions.values().any(|t| t.latency.0 != 0 || t.energy.0 != 0) {
                return Err(format!("client {} {}: transitions are not free", c.id, m.kind));
            }
        }
    }
    Ok(())
}

fn criterion_1() -> Verdict {
    let ideal = load("mp3_three_clients");
    let costly = load("mp3_three_clients_wake_cost");
    if let Err(e) = models_are_ideal(&ideal) {
        return fail(e);
    }
    let started = Instant::now();
    let free = savings_of(&ideal);
    let free_time = started.elapsed();
    let started = Instant::now();
    let wake = savings_of(&costly);
    let wake_time = started.elapsed();
    let (Ok((free, free_v)), Ok((wake, wake_v))) = (free, wake) else {
        return fail("run failed".into());
    };
    let detail = format!(
        "savings {:.4}% (need >= 96.5%), with 300 ms / 150 mJ wake {:.4}% (need 90..99%), violations {free_v}/{wake_v}, runtime {:?}/{:?}",
        free * 100.0,
        wake * 100.0,
        free_time,
        wake_time
    );
    let limit = Duration::from_secs(1);
    if free >= 0.965
        && (0.90..=0.99).contains(&wake)
        && free_v == 0
        && wake_v == 0
        && free_time < limit
        && wake_time < limit
    {
        pass(detail)
    } else {
        fail(detail)
    }
}

/// Up to 4 flows, up to 20 bursts, integer weights so the fairness check is
/// exact. Per flow, releases are non-decreasing in request order.
fn wfq_instance(rng: &mut ChaCha8Rng) -> (Vec<BurstRequest>, BTreeMap<ClientId, i64>) {
    let flows = rng.random_range(1..=4u32);
    let bursts = rng.random_range(1..=20usize);
    let weights: BTreeMap<ClientId, i64> = (1..=flows).map(|f| (ClientId(f), rng.random_range(1..=8))).collect();
    let mut requests: Vec<BurstRequest> = (0..bursts)
        .map(|_| BurstRequest {
            client: ClientId(rng.random_range(1..=flows)),
            bytes: rng.random_range(1..=4_000),
            release: Micros(rng.random_range(0..=30_000)),
            deadline: NEVER,
        })
        .collect();
    requests.sort_by_key(|r| (r.client, r.release));
    (requests, weights)
}

fn criterion_2() -> Verdict {
    let started = Instant::now();
    let mut worst_fair: (i128, i128) = (0, 1);
    let mut worst_late = i64::MIN;
    let mut checked_pairs = 0usize;
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (requests, weights) = wfq_instance(&mut rng);
        let traces = common::shared_wlan_traces(weights.keys().copied());
        let ctx = common::shared_context(&traces);
        let big: BTreeMap<ClientId, BigRational> =
            weights.iter().map(|(c, w)| (*c, weight_from_f64(*w as f64).expect("positive weight"))).collect();
        let schedule = match schedule_wfq(&requests, &big, &ctx) {
            Ok(s) => s,
            Err(e) => return fail(format!("seed {seed}: {e}")),
        };
        if schedule.bursts.len() != requests.len() {
            return fail(format!("seed {seed}: {} bursts for {} requests", schedule.bursts.len(), requests.len()));
        }
        let l_max = requests.iter().map(|r| r.bytes as i64).max().unwrap_or(0);

        let gps = common::gps_completions(&requests, &weights);
        for client in weights.keys() {
            let idx: Vec<usize> = (0..requests.len()).filter(|&i| requests[i].client == *client).collect();
            for (i, b) in idx.iter().zip(schedule.bursts_for(*client)) {
                if b.bytes != requests[*i].bytes || b.start < requests[*i].release {
                    return fail(format!("seed {seed}: burst {b:?} does not match request {:?}", requests[*i]));
                }
                let late = BigRational::from_integer(BigInt::from(b.end.0)) - &gps[*i];
                let limit = BigRational::from_integer(BigInt::from(l_max));
                if late > limit {
                    return fail(format!(
                        "seed {seed}: client {client} finishes {late} us after GPS, bound {l_max} us"
                    ));
                }
                let late_us = late.ceil().to_integer().try_into().unwrap_or(i64::MAX);
                worst_late = worst_late.max(late_us - l_max);
            }
        }

        let ids: Vec<ClientId> = weights.keys().copied().collect();
        for a in 0..ids.len() {
            for b in a + 1..ids.len() {
                let (gap, bound) = common::fairness_gap(
                    &requests,
                    &schedule,
                    (ids[a], weights[&ids[a]]),
                    (ids[b], weights[&ids[b]]),
                    l_max,
                );
                checked_pairs += 1;
                if gap > bound {
                    return fail(format!(
                        "seed {seed}: flows {} and {} differ by {gap} > {bound} (scaled)",
                        ids[a], ids[b]
                    ));
                }
                if gap * worst_fair.1 > worst_fair.0 * bound {
                    worst_fair = (gap, bound);
                }
            }
        }
    }
    let elapsed = started.elapsed();
    let detail = format!(
        "{INSTANCES} instances, {checked_pairs} flow pairs, worst fairness gap {:.3} of bound, worst finish {} us inside the one-burst GPS bound, runtime {elapsed:?}",
        worst_fair.0 as f64 / worst_fair.1 as f64,
        -worst_late
    );
    if elapsed < Duration::from_secs(10) {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn criterion_3() -> Verdict {
    let started = Instant::now();
    let (mut edf_clean, mut oracle_feasible, mut edf_missed_feasible, mut infeasible) = (0, 0, 0, 0);
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let n = rng.random_range(1..=6u32);
        let requests: Vec<BurstRequest> = (1..=n)
            .map(|c| {
                let release = rng.random_range(0..=10_000i64);
                let bytes = rng.random_range(1..=5_000u64);
                let slack = rng.random_range(0..=12_000i64);
                BurstRequest {
                    client: ClientId(c),
                    bytes,
                    release: Micros(release),
                    deadline: Micros(release + bytes as i64 + slack),
                }
            })
            .collect();
        let traces = common::shared_wlan_traces((1..=n).map(ClientId));
        let ctx = common::shared_context(&traces);
        let s = schedule_edf(&requests, &ctx);

        let mut by_start = s.bursts.clone();
        by_start.sort_by_key(|b| b.start);
        if by_start.len() != requests.len() || by_start.windows(2).any(|w| w[1].start < w[0].end) {
            return fail(format!("seed {seed}: malformed schedule {:?}", s.bursts));
        }
        let mut late = 0;
        for b in &s.bursts {
            let r = &requests[(b.client.0 - 1) as usize];
            if b.start < r.release || (b.end - b.start).0 != r.bytes as i64 || b.bytes != r.bytes {
                return fail(format!("seed {seed}: burst {b:?} does not serve {r:?}"));
            }
            if b.end > r.deadline {
                late += 1;
            }
        }
        if late != s.misses.len() {
            return fail(format!("seed {seed}: {late} late bursts but {} misses reported", s.misses.len()));
        }
        let jobs: Vec<(i64, i64, i64)> = requests.iter().map(|r| (r.release.0, r.bytes as i64, r.deadline.0)).collect();
        let feasible = common::feasible_by_permutation(&jobs);
        if s.misses.is_empty() {
            edf_clean += 1;
            if !feasible {
                return fail(format!("seed {seed}: EDF met every deadline but the oracle finds no feasible order"));
            }
        }
        match (feasible, s.misses.is_empty()) {
            (true, false) => edf_missed_feasible += 1,
            (false, _) => infeasible += 1,
            _ => {}
        }
        if feasible {
            oracle_feasible += 1;
        }
    }
    let elapsed = started.elapsed();
    let detail = format!(
        "{INSTANCES} instances: EDF clean {edf_clean} (all verified), oracle-feasible {oracle_feasible}, oracle-feasible but EDF missed {edf_missed_feasible}, infeasible {infeasible}, runtime {elapsed:?}"
    );
    if elapsed < Duration::from_secs(10) {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn criterion_4() -> Verdict {
    let mut runs = 0;
    let mut scenarios: Vec<(String, Scenario)> = common::shipped_scenarios()
        .iter()
        .map(|p| (p.display().to_string(), parse_scenario(p).expect("shipped scenario parses")))
        .collect();
    let single = load("single_client");
    for kb in [16_000, 32_000, 64_000, 128_000] {
        let mut s = single.clone();
        s.scheduler.burst_bytes = Some(kb);
        scenarios.push((format!("single_client burst {kb}"), s));
    }
    for (name, scenario) in &scenarios {
        for kind in [SchedulerKind::Edf, SchedulerKind::Wfq] {
            let mut s = scenario.clone();
            s.scheduler.kind = kind;
            let out = match run(&s) {
                Ok(o) => o,
                Err(e) => return fail(format!("{name}: {e}")),
            };
            if let Err(e) = common::check_conservation(&s, &out.timelines, &out.energy) {
                return fail(format!("{name} {kind}: {e}"));
            }
            runs += 1;
        }
        let timelines = baseline_timelines(scenario).expect("baseline");
        let report = run_baseline(scenario).expect("baseline");
        if let Err(e) = common::check_conservation(scenario, &timelines, &report) {
            return fail(format!("{name} baseline: {e}"));
        }
        runs += 1;
    }
    pass(format!(
        "{runs} runs: energy recomputed from timelines matches to the picojoule, every timeline covers the horizon"
    ))
}

fn criterion_5() -> Verdict {
    let scenario = load("mp3_three_clients");
    let out = match run(&scenario) {
        Ok(o) => o,
        Err(e) => return fail(e.to_string()),
    };
    let dir = tempfile::tempdir().expect("tempdir");
    let config = RunConfig {
        scenario: common::scenario_path("mp3_three_clients"),
        scheduler: None,
        baseline: false,
        out: dir.path().to_path_buf(),
        seed: 0,
    };
    if let Err(e) = run_file(&config.scenario, &config, dir.path()) {
        return fail(e.to_string());
    }
    let qos = fs::read_to_string(dir.path().join(QOS_CSV)).expect("qos.csv");
    let csv_underflows = qos.lines().filter(|l| l.starts_with("underflow,")).count();
    let mut per_client = Vec::new();
    let mut ok = csv_underflows == 0 && out.qos.underflows.is_empty();
    for c in &scenario.clients {
        let bt_to_wlan = out
            .qos
            .switches
            .iter()
            .filter(|s| s.client == c.id && s.from == InterfaceKind::Bluetooth && s.to == InterfaceKind::Wlan)
            .count();
        let all = out.qos.switches.iter().filter(|s| s.client == c.id).count();
        ok &= bt_to_wlan == 1 && all == 1;
        per_client.push(format!("client {}: {bt_to_wlan} bluetooth->wlan of {all}", c.id));
    }
    let detail = format!("{}, underflows in qos.csv {csv_underflows}", per_client.join(", "));
    if ok {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn read_outputs(dir: &Path) -> Vec<Vec<u8>> {
    [SCHEDULE_CSV, POWER_TRACE_CSV, ENERGY_SUMMARY_CSV, QOS_CSV]
        .iter()
        .map(|f| fs::read(dir.join(f)).unwrap_or_else(|e| panic!("{f}: {e}")))
        .collect()
}

fn criterion_6() -> Verdict {
    let shipped = common::shipped_scenarios();
    for path in &shipped {
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().expect("tempdir");
            let config = RunConfig {
                scenario: path.clone(),
                scheduler: None,
                baseline: true,
                out: dir.path().to_path_buf(),
                seed: 0,
            };
            if let Err(e) = run_file(path, &config, dir.path()) {
                return fail(format!("{}: {e}", path.display()));
            }
            outputs.push(read_outputs(dir.path()));
        }
        if outputs[0] != outputs[1] {
            return fail(format!("{}: outputs differ between runs", path.display()));
        }
    }
    pass(format!("{} shipped scenarios, 4 CSVs each, byte-identical across two runs", shipped.len()))
}

fn criterion_7() -> Verdict {
    let base = load("single_client");
    let mut energies = Vec::new();
    for kb in [16_000, 32_000, 64_000, 128_000] {
        let mut s = base.clone();
        s.scheduler.burst_bytes = Some(kb);
        match run(&s) {
            Ok(out) => energies.push((kb, out.energy.total)),
            Err(e) => return fail(format!("burst {kb}: {e}")),
        }
    }
    let listed: Vec<String> = energies.iter().map(|(kb, e)| format!("{} kB {} mJ", kb / 1000, e.mj_fixed())).collect();
    let detail = listed.join(", ");
    if energies.windows(2).all(|w| w[1].1 <= w[0].1) {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 7] = [
        ("savings against always-on", criterion_1),
        ("WFQ fairness and GPS completion", criterion_2),
        ("EDF against permutation oracle", criterion_3),
        ("energy conservation", criterion_4),
        ("seamless interface switch", criterion_5),
        ("deterministic reports", criterion_6),
        ("burst-size monotonicity", criterion_7),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        println!("{} criterion {} ({name}): {}", if v.ok { "PASS" } else { "FAIL" }, n + 1, v.detail);
        if !v.ok {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
