//! Executes a scenario end to end: admission, burst derivation, scheduling,
//! radio power timelines, buffer replay and energy accounting.

mod report;
mod timeline;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::link_model::{LinkTrace, SelectionPolicy};
use crate::power_model::{baseline_timeline, validate_model, InterfaceKind, PowerModelError, WnicModel};
use crate::scheduler::{
    admit_client, check_feasibility, derive_bursts, schedule_edf, schedule_wfq, weight_from_f64, Admission,
    ClientLinks, Schedule, SchedulerError, SchedulingContext, StreamSpec,
};
use crate::units::{ClientId, Micros};

pub use report::{
    power_trace, ClientEnergy, EnergyReport, InterfaceEnergy, PowerStep, QosEvent, QosEventKind, QosReport, Rejection,
    Savings, SavingsReport, Timelines,
};
pub use timeline::{build_timeline, InterfaceTimeline, StayAwake};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum SchedulerKind {
    #[default]
    Edf,
    Wfq,
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchedulerKind::Edf => "edf",
            SchedulerKind::Wfq => "wfq",
        })
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "edf" => Ok(SchedulerKind::Edf),
            "wfq" => Ok(SchedulerKind::Wfq),
            other => Err(format!("unknown scheduler `{other}` (expected edf or wfq)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    /// WFQ weights; clients without an entry get weight 1.
    pub weights: BTreeMap<ClientId, f64>,
    /// Overrides every stream's default burst size.
    pub burst_bytes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub id: ClientId,
    /// Recorded and reported; no shipped policy reads it.
    pub battery_level: f64,
    /// One model per interface, in the order given.
    pub interfaces: Vec<WnicModel>,
    /// Interface held in its idle state by the always-on baseline; the first
    /// interface when unset.
    pub baseline_interface: Option<InterfaceKind>,
}

impl ClientConfig {
    pub fn model(&self, kind: &InterfaceKind) -> Option<&WnicModel> {
        self.interfaces.iter().find(|m| m.kind == *kind)
    }

    pub fn baseline_kind(&self) -> Option<&InterfaceKind> {
        self.baseline_interface.as_ref().or(self.interfaces.first().map(|m| &m.kind))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scenario {
    pub horizon: Micros,
    pub capacity_bps: u64,
    pub clients: Vec<ClientConfig>,
    pub streams: Vec<StreamSpec>,
    pub links: Vec<LinkTrace>,
    pub scheduler: SchedulerConfig,
    pub policy: SelectionPolicy,
}

/// A semantic problem in a scenario, located by field path such as
/// `streams[2].client`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { path: path.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Power(#[from] PowerModelError),
    #[error("reports cover different clients")]
    ClientMismatch,
}

impl Scenario {
    pub fn client(&self, id: ClientId) -> Option<&ClientConfig> {
        self.clients.iter().find(|c| c.id == id)
    }

    /// Every (client, interface) model.
    pub fn models(&self) -> BTreeMap<(ClientId, InterfaceKind), &WnicModel> {
        self.clients.iter().flat_map(|c| c.interfaces.iter().map(move |m| ((c.id, m.kind.clone()), m))).collect()
    }

    pub fn traces(&self) -> BTreeMap<(ClientId, InterfaceKind), &LinkTrace> {
        self.links.iter().map(|t| ((t.client, t.interface.clone()), t)).collect()
    }

    pub fn burst_bytes_for(&self, stream: &StreamSpec) -> u64 {
        self.scheduler.burst_bytes.unwrap_or_else(|| stream.default_burst_bytes())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.horizon.0 < 0 {
            return Err(ConfigError::new("horizon_us", "must be non-negative"));
        }
        if !self.streams.is_empty() && self.capacity_bps == 0 {
            return Err(ConfigError::new("capacity_bps", "must be positive"));
        }
        self.policy.validate().map_err(|e| ConfigError::new("policy", e.to_string()))?;

        let mut ids = BTreeSet::new();
        for (i, c) in self.clients.iter().enumerate() {
            if !ids.insert(c.id) {
                return Err(ConfigError::new(format!("clients[{i}].id"), format!("duplicate client {}", c.id)));
            }
            if !(0.0..=1.0).contains(&c.battery_level) {
                return Err(ConfigError::new(format!("clients[{i}].battery_level"), "must lie in [0, 1]"));
            }
            if c.interfaces.is_empty() {
                return Err(ConfigError::new(format!("clients[{i}].interfaces"), "at least one interface required"));
            }
            let mut kinds = BTreeSet::new();
            for (j, m) in c.interfaces.iter().enumerate() {
                let path = format!("clients[{i}].interfaces[{j}]");
                if !kinds.insert(&m.kind) {
                    return Err(ConfigError::new(format!("{path}.kind"), format!("duplicate interface {}", m.kind)));
                }
                validate_model(m).map_err(|v| {
                    let msgs: Vec<String> = v.iter().map(|e| e.to_string()).collect();
                    ConfigError::new(format!("{path}.model"), msgs.join("; "))
                })?;
            }
            if let Some(b) = &c.baseline_interface {
                if !kinds.contains(b) {
                    return Err(ConfigError::new(
                        format!("clients[{i}].baseline_interface"),
                        format!("client has no {b} interface"),
                    ));
                }
            }
        }

        let mut streaming = BTreeSet::new();
        for (i, s) in self.streams.iter().enumerate() {
            if !ids.contains(&s.client) {
                return Err(ConfigError::new(format!("streams[{i}].client"), format!("unknown client {}", s.client)));
            }
            if !streaming.insert(s.client) {
                return Err(ConfigError::new(
                    format!("streams[{i}].client"),
                    format!("client {} already has a stream", s.client),
                ));
            }
            s.validate().map_err(|e| ConfigError::new(format!("streams[{i}]"), e.to_string()))?;
            if s.end() > self.horizon {
                return Err(ConfigError::new(
                    format!("streams[{i}].duration_us"),
                    format!("stream ends at {} after the horizon {}", s.end(), self.horizon),
                ));
            }
            let burst = self.burst_bytes_for(s);
            if burst == 0 || burst > s.buffer_capacity_bytes {
                return Err(ConfigError::new(
                    "scheduler.burst_bytes",
                    format!("must lie in [1, {}] for client {}", s.buffer_capacity_bytes, s.client),
                ));
            }
            if let Err(e) = derive_bursts(s, burst) {
                return Err(ConfigError::new(format!("streams[{i}].max_startup_latency_us"), e.to_string()));
            }
        }

        let mut seen = BTreeSet::new();
        for (i, t) in self.links.iter().enumerate() {
            let Some(client) = self.client(t.client) else {
                return Err(ConfigError::new(format!("links[{i}].client"), format!("unknown client {}", t.client)));
            };
            if client.model(&t.interface).is_none() {
                return Err(ConfigError::new(
                    format!("links[{i}].interface"),
                    format!("client {} has no {} interface", t.client, t.interface),
                ));
            }
            if !seen.insert((t.client, t.interface.clone())) {
                return Err(ConfigError::new(
                    format!("links[{i}]"),
                    format!("second trace for client {} on {}", t.client, t.interface),
                ));
            }
        }

        for (client, &w) in &self.scheduler.weights {
            let path = format!("scheduler.weights.{client}");
            if !ids.contains(client) {
                return Err(ConfigError::new(path, format!("unknown client {client}")));
            }
            if weight_from_f64(w).is_none() {
                return Err(ConfigError::new(path, "weight must be positive and finite"));
            }
        }
        Ok(())
    }
}

/// Everything one scheduled run produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub schedule: Schedule,
    pub energy: EnergyReport,
    pub qos: QosReport,
    pub timelines: Timelines,
}

/// Streams that pass admission control, taken in (start, client) order
/// against the cumulative admitted bitrate.
fn admit<'s>(scenario: &'s Scenario, qos: &mut QosReport) -> Vec<&'s StreamSpec> {
    let mut order: Vec<&StreamSpec> = scenario.streams.iter().collect();
    order.sort_by_key(|s| (s.start, s.client));
    let mut load = 0u64;
    let mut admitted = Vec::new();
    for s in order {
        match admit_client(load, scenario.capacity_bps, s) {
            Admission::Admit => {
                load += s.bitrate_bps;
                admitted.push(s);
            }
            Admission::Reject => qos.rejected.push(Rejection {
                client: s.client,
                at: s.start,
                bitrate_bps: s.bitrate_bps,
                load_bps: load,
                capacity_bps: scenario.capacity_bps,
            }),
        }
    }
    admitted
}

/// Schedules the scenario and accounts the resulting radio activity.
pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    scenario.validate()?;
    let mut qos = QosReport::default();
    let admitted = admit(scenario, &mut qos);

    let mut requests = Vec::new();
    for s in &admitted {
        requests.extend(derive_bursts(s, scenario.burst_bytes_for(s))?);
    }
    let all_traces = scenario.traces();
    let models = scenario.models();
    let mut clients = BTreeMap::new();
    for s in &admitted {
        let links = ClientLinks {
            traces: all_traces.iter().filter(|((c, _), _)| *c == s.client).map(|((_, k), t)| (k.clone(), *t)).collect(),
            models: models.iter().filter(|((c, _), _)| *c == s.client).map(|((_, k), m)| (k.clone(), *m)).collect(),
            required_bps: s.bitrate_bps,
            stream: Some(*s),
        };
        clients.insert(s.client, links);
    }
    let ctx = SchedulingContext { clients, policy: scenario.policy.clone(), total_rate_bps: scenario.capacity_bps };
    let schedule = if requests.is_empty() {
        Schedule::default()
    } else {
        match scenario.scheduler.kind {
            SchedulerKind::Edf => schedule_edf(&requests, &ctx),
            SchedulerKind::Wfq => {
                let mut weights = BTreeMap::new();
                for s in &admitted {
                    let w = scenario.scheduler.weights.get(&s.client).copied().unwrap_or(1.0);
                    let w = weight_from_f64(w).ok_or(SchedulerError::InvalidWeight(s.client))?;
                    weights.insert(s.client, w);
                }
                schedule_wfq(&requests, &weights, &ctx)?
            }
        }
    };

    let streams: Vec<StreamSpec> = admitted.iter().map(|s| (*s).clone()).collect();
    let verdict = check_feasibility(&schedule, &streams);
    qos.underflows = verdict.underflows;
    qos.startup = verdict.startup;
    qos.overflows = verdict.overflows;
    qos.misses = schedule.misses.clone();
    qos.failures = schedule.failures.clone();
    qos.alarms = schedule.alarms.clone();
    qos.switches = schedule.switches.clone();
    qos.beyond_horizon = schedule.bursts.iter().filter(|b| b.end > scenario.horizon).cloned().collect();

    let mut timelines = Timelines::new();
    for ((client, kind), model) in &models {
        let windows: Vec<(Micros, Micros)> =
            schedule.bursts_for(*client).filter(|b| b.interface == *kind).map(|b| (b.start, b.end)).collect();
        let (it, awake) = build_timeline(model, &windows, scenario.horizon)?;
        qos.stay_awake.extend(awake.into_iter().map(|a| (*client, kind.clone(), a)));
        timelines.insert((*client, kind.clone()), it);
    }
    let energy = EnergyReport::from_timelines(scenario.horizon, &timelines, &models)?;
    Ok(RunOutput { schedule, energy, qos, timelines })
}

/// Timelines of the always-on reference: each client's baseline interface
/// listens in its idle state for the whole horizon, every other interface
/// sleeps.
pub fn baseline_timelines(scenario: &Scenario) -> Result<Timelines, SimError> {
    scenario.validate()?;
    let mut timelines = Timelines::new();
    for c in &scenario.clients {
        let on = c.baseline_kind();
        for m in &c.interfaces {
            let it = if Some(&m.kind) == on {
                InterfaceTimeline { timeline: baseline_timeline(m, scenario.horizon), transitions: Vec::new() }
            } else {
                build_timeline(m, &[], scenario.horizon)?.0
            };
            timelines.insert((c.id, m.kind.clone()), it);
        }
    }
    Ok(timelines)
}

pub fn run_baseline(scenario: &Scenario) -> Result<EnergyReport, SimError> {
    let timelines = baseline_timelines(scenario)?;
    Ok(EnergyReport::from_timelines(scenario.horizon, &timelines, &scenario.models())?)
}

/// Per-client and total savings of `scheduled` against `baseline`.
pub fn compare(scheduled: &EnergyReport, baseline: &EnergyReport) -> Result<SavingsReport, SimError> {
    if !scheduled.clients.keys().eq(baseline.clients.keys()) {
        return Err(SimError::ClientMismatch);
    }
    let clients = scheduled
        .clients
        .iter()
        .map(|(id, s)| (*id, Savings { scheduled: s.energy, baseline: baseline.clients[id].energy }))
        .collect();
    Ok(SavingsReport { clients, total: Savings { scheduled: scheduled.total, baseline: baseline.total } })
}
