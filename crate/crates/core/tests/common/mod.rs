//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use hotspot_sim::power_model::TimelineState;
use hotspot_sim::scheduler::{BurstRequest, ClientLinks, Schedule, SchedulingContext};
use hotspot_sim::simulator::{EnergyReport, Timelines};
use hotspot_sim::units::{ClientId, Energy, Micros};
use hotspot_sim::{InterfaceKind, LinkTrace, Scenario, SelectionPolicy, WnicModel};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

/// 8 Mbit/s moves exactly one byte per microsecond.
pub const BYTE_PER_US_BPS: u64 = 8_000_000;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().expect("repo root")
}

pub fn scenario_path(name: &str) -> PathBuf {
    repo_root().join("scenarios").join(format!("{name}.toml"))
}

/// Every `*.toml` under `scenarios/`, sorted.
pub fn shipped_scenarios() -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(repo_root().join("scenarios"))
        .expect("scenarios directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    out.sort();
    out
}

/// Recomputes every (client, interface) energy from the raw timeline as
/// Σ duration × power + Σ transition lumps and compares it, with zero
/// tolerance, to `report`. Also checks each timeline covers `[0, horizon]`
/// with durations that sum to the horizon.
pub fn check_conservation(scenario: &Scenario, timelines: &Timelines, report: &EnergyReport) -> Result<(), String> {
    let models = scenario.models();
    let mut total = Energy::ZERO;
    let mut per_client: BTreeMap<ClientId, Energy> = BTreeMap::new();
    for ((client, kind), it) in timelines {
        let model: &WnicModel = models.get(&(*client, kind.clone())).ok_or("timeline without model")?;
        let mut pj: i128 = 0;
        let mut covered: i64 = 0;
        let mut cursor = Micros::ZERO;
        for iv in &it.timeline.intervals {
            if iv.start != cursor {
                return Err(format!("client {client} {kind}: gap or overlap at {}", iv.start.0));
            }
            cursor = iv.end;
            covered += (iv.end - iv.start).0;
            if let TimelineState::State(name) = &iv.state {
                let p = model.states.iter().find(|s| &s.name == name).ok_or("unknown state")?.power.0;
                pj += p as i128 * (iv.end - iv.start).0 as i128;
            }
        }
        for tr in &it.transitions {
            let cost = model.transitions.get(&(tr.from.clone(), tr.to.clone())).ok_or("unknown transition")?;
            pj += cost.energy.0;
        }
        if covered != scenario.horizon.0 || cursor != scenario.horizon {
            return Err(format!("client {client} {kind}: covers {covered} us of {}", scenario.horizon.0));
        }
        let reported = report
            .clients
            .get(client)
            .and_then(|c| c.interfaces.get(kind))
            .ok_or_else(|| format!("client {client} {kind} missing from report"))?;
        if reported.energy.0 != pj {
            return Err(format!("client {client} {kind}: reported {} pJ, recomputed {pj} pJ", reported.energy.0));
        }
        let in_states: i64 = reported.time_in_state.values().map(|m| m.0).sum();
        if in_states != scenario.horizon.0 {
            return Err(format!("client {client} {kind}: time in states sums to {in_states}"));
        }
        *per_client.entry(*client).or_default() += Energy(pj);
        total += Energy(pj);
    }
    for (client, e) in &per_client {
        if report.clients[client].energy != *e {
            return Err(format!("client {client}: total does not add up"));
        }
    }
    if report.total != total {
        return Err(format!("report total {} pJ, recomputed {} pJ", report.total.0, total.0));
    }
    Ok(())
}

/// Constant WLAN traces at one byte per microsecond, shared medium, no
/// buffers or wake costs.
pub fn shared_wlan_traces(clients: impl IntoIterator<Item = ClientId>) -> Vec<LinkTrace> {
    clients.into_iter().map(|c| LinkTrace::constant(c, InterfaceKind::Wlan, BYTE_PER_US_BPS, 1.0)).collect()
}

pub fn shared_context(traces: &[LinkTrace]) -> SchedulingContext<'_> {
    let clients = traces
        .iter()
        .map(|t| {
            let links = ClientLinks {
                traces: BTreeMap::from([(t.interface.clone(), t)]),
                required_bps: 1,
                ..ClientLinks::default()
            };
            (t.client, links)
        })
        .collect();
    SchedulingContext { clients, policy: SelectionPolicy::default(), total_rate_bps: BYTE_PER_US_BPS }
}

fn ratio(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Completion time (µs, exact) of every request under a GPS fluid server of
/// one byte per microsecond, flows sharing in proportion to `weights` and
/// each flow served FIFO. Output is indexed like `requests`.
pub fn gps_completions(requests: &[BurstRequest], weights: &BTreeMap<ClientId, i64>) -> Vec<BigRational> {
    let mut arrivals: Vec<usize> = (0..requests.len()).collect();
    arrivals.sort_by_key(|&i| (requests[i].release, i));
    let mut arrivals = arrivals.into_iter().peekable();
    let mut queues: BTreeMap<ClientId, std::collections::VecDeque<(usize, BigRational)>> = BTreeMap::new();
    let mut done = vec![BigRational::zero(); requests.len()];
    let mut t = BigRational::zero();
    loop {
        while let Some(&i) = arrivals.peek() {
            if ratio(requests[i].release.0) <= t {
                queues.entry(requests[i].client).or_default().push_back((i, ratio(requests[i].bytes as i64)));
                arrivals.next();
            } else {
                break;
            }
        }
        let active: Vec<ClientId> = queues.iter().filter(|(_, q)| !q.is_empty()).map(|(c, _)| *c).collect();
        let next_arrival = arrivals.peek().map(|&i| ratio(requests[i].release.0));
        if active.is_empty() {
            match next_arrival {
                Some(a) => {
                    t = a;
                    continue;
                }
                None => break,
            }
        }
        let wsum: BigRational = active.iter().map(|c| ratio(weights[c])).sum();
        let mut dt: Option<BigRational> = None;
        for c in &active {
            let need = &queues[c][0].1 * &wsum / ratio(weights[c]);
            if dt.as_ref().is_none_or(|d| need < *d) {
                dt = Some(need);
            }
        }
        let mut dt = dt.expect("some flow is active");
        if let Some(a) = next_arrival {
            let until = a - &t;
            if until < dt {
                dt = until;
            }
        }
        for c in &active {
            let q = queues.get_mut(c).expect("active flow");
            let served = &dt * ratio(weights[c]) / &wsum;
            q[0].1 -= served;
        }
        t += &dt;
        for c in &active {
            let q = queues.get_mut(c).expect("active flow");
            if q[0].1.is_zero() {
                let (i, _) = q.pop_front().expect("head");
                done[i] = t.clone();
            }
        }
    }
    done
}

/// Bytes served to `client` in `[0, t]` when each burst moves one byte per
/// microsecond.
pub fn served_by(schedule: &Schedule, client: ClientId, t: i64) -> i64 {
    schedule.bursts_for(client).map(|b| (t - b.start.0).clamp(0, (b.end - b.start).0)).sum()
}

/// Union of `[release, end)` of a flow's requests in the packet system,
/// merged into maximal intervals.
pub fn backlogged_intervals(requests: &[BurstRequest], schedule: &Schedule, client: ClientId) -> Vec<(i64, i64)> {
    let reqs: Vec<&BurstRequest> = requests.iter().filter(|r| r.client == client).collect();
    let bursts: Vec<_> = schedule.bursts_for(client).collect();
    let mut spans: Vec<(i64, i64)> = reqs.iter().zip(&bursts).map(|(r, b)| (r.release.0, b.end.0)).collect();
    spans.sort();
    let mut merged: Vec<(i64, i64)> = Vec::new();
    for (a, b) in spans {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    merged
}

/// Worst `|S_i/φ_i − S_j/φ_j|` over every sub-interval of every common
/// backlogged interval of flows `i` and `j`, scaled by `φ_i φ_j`, next to the
/// bound `L_max (φ_i + φ_j)` on the same scale.
pub fn fairness_gap(
    requests: &[BurstRequest],
    schedule: &Schedule,
    (i, wi): (ClientId, i64),
    (j, wj): (ClientId, i64),
    l_max: i64,
) -> (i128, i128) {
    let bi = backlogged_intervals(requests, schedule, i);
    let bj = backlogged_intervals(requests, schedule, j);
    let mut worst: i128 = 0;
    for &(a1, b1) in &bi {
        for &(a2, b2) in &bj {
            let (a, b) = (a1.max(a2), b1.min(b2));
            if a >= b {
                continue;
            }
            let mut points = vec![a, b];
            for burst in &schedule.bursts {
                for p in [burst.start.0, burst.end.0] {
                    if p > a && p < b {
                        points.push(p);
                    }
                }
            }
            let d = |t: i64| {
                served_by(schedule, i, t) as i128 * wj as i128 - served_by(schedule, j, t) as i128 * wi as i128
            };
            let values: Vec<i128> = points.into_iter().map(d).collect();
            let spread = values.iter().max().unwrap() - values.iter().min().unwrap();
            worst = worst.max(spread);
        }
    }
    (worst, l_max as i128 * (wi + wj) as i128)
}

/// Single-medium, non-preemptive feasibility by trying every order; within
/// an order each job starts as early as possible. `jobs` are
/// (release, duration, deadline).
pub fn feasible_by_permutation(jobs: &[(i64, i64, i64)]) -> bool {
    fn go(jobs: &[(i64, i64, i64)], used: &mut Vec<bool>, t: i64, left: usize) -> bool {
        if left == 0 {
            return true;
        }
        for k in 0..jobs.len() {
            if used[k] {
                continue;
            }
            let (r, d, dl) = jobs[k];
            let end = t.max(r) + d;
            if end > dl {
                continue;
            }
            used[k] = true;
            if go(jobs, used, end, left - 1) {
                return true;
            }
            used[k] = false;
        }
        false
    }
    go(jobs, &mut vec![false; jobs.len()], 0, jobs.len())
}
