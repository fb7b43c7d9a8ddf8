//! TOML scenario files.
//!
//! The grammar is documented by `scenarios/reference.toml`. Models are
//! declared once under `[[models]]`, inline or through `file = "..."`
//! (resolved against the scenario's directory), and referenced by name from
//! client interfaces.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cli::CliError;
use crate::link_model::{LinkStep, LinkTrace, SelectionPolicy};
use crate::power_model::{validate_model, InterfaceKind, PowerState, TransitionCost, WnicModel};
use crate::scheduler::StreamSpec;
use crate::simulator::{ClientConfig, ConfigError, Scenario, SchedulerConfig, SchedulerKind};
use crate::units::{ClientId, Energy, Micros, Power};

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    horizon_us: Option<i64>,
    capacity_bps: Option<u64>,
    #[serde(default)]
    scheduler: RawScheduler,
    #[serde(default)]
    policy: RawPolicy,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    models: Vec<RawModelEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    clients: Vec<RawClient>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    streams: Vec<RawStream>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    links: Vec<RawLink>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheduler {
    #[serde(default = "default_kind")]
    kind: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    weights: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    burst_bytes: Option<u64>,
}

fn default_kind() -> String {
    SchedulerKind::default().to_string()
}

impl Default for RawScheduler {
    fn default() -> Self {
        RawScheduler { kind: default_kind(), weights: BTreeMap::new(), burst_bytes: None }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quality_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hysteresis_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min_dwell_us: Option<i64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    preference: Vec<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelEntry {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    states: Option<Vec<RawState>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transitions: Option<Vec<RawTransition>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    active_throughput_bps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sleep_state: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    idle_state: Option<String>,
}

/// Contents of a standalone model file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelFile {
    kind: String,
    states: Vec<RawState>,
    #[serde(default)]
    transitions: Vec<RawTransition>,
    active_throughput_bps: u64,
    sleep_state: String,
    idle_state: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    name: String,
    power_mw: f64,
    #[serde(default)]
    can_transfer: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransition {
    from: String,
    to: String,
    #[serde(default)]
    latency_us: i64,
    #[serde(default)]
    energy_mj: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClient {
    id: u32,
    #[serde(default = "full_battery")]
    battery_level: f64,
    interfaces: Vec<RawInterface>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    baseline_interface: Option<String>,
}

fn full_battery() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInterface {
    kind: String,
    model: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStream {
    client: u32,
    bitrate_bps: u64,
    #[serde(default)]
    start_us: i64,
    duration_us: i64,
    prebuffer_bytes: u64,
    buffer_capacity_bytes: u64,
    max_startup_latency_us: i64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    client: u32,
    interface: String,
    steps: Vec<RawStep>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    t_us: i64,
    throughput_bps: u64,
    quality: f64,
}

fn missing(path: impl Into<String>, what: &str) -> ConfigError {
    ConfigError::new(path, format!("missing {what}"))
}

fn kind_of(path: String, s: &str) -> Result<InterfaceKind, ConfigError> {
    if s.is_empty() {
        return Err(ConfigError::new(path, "interface kind must not be empty"));
    }
    Ok(InterfaceKind::from(s.to_string()))
}

fn build_model(path: &str, body: RawModelFile) -> Result<WnicModel, ConfigError> {
    let kind = kind_of(format!("{path}.kind"), &body.kind)?;
    let states = body
        .states
        .into_iter()
        .map(|s| PowerState::new(s.name, Power::from_mw_f64(s.power_mw), s.can_transfer))
        .collect();
    let mut transitions = BTreeMap::new();
    for (k, t) in body.transitions.into_iter().enumerate() {
        let key = (t.from.clone(), t.to.clone());
        let cost = TransitionCost::new(Micros(t.latency_us), Energy::from_mj_f64(t.energy_mj));
        if transitions.insert(key, cost).is_some() {
            return Err(ConfigError::new(
                format!("{path}.transitions[{k}]"),
                format!("duplicate transition {} -> {}", t.from, t.to),
            ));
        }
    }
    let model = WnicModel {
        kind,
        states,
        transitions,
        active_throughput_bps: body.active_throughput_bps,
        sleep_state: body.sleep_state,
        idle_state: body.idle_state,
    };
    validate_model(&model).map_err(|v| {
        let msgs: Vec<String> = v.iter().map(|e| e.to_string()).collect();
        ConfigError::new(path, msgs.join("; "))
    })?;
    Ok(model)
}

fn resolve_model(i: usize, entry: RawModelEntry, base_dir: &Path) -> Result<WnicModel, CliError> {
    let path = format!("models[{i}]");
    if let Some(file) = entry.file {
        let inline = entry.kind.is_some()
            || entry.states.is_some()
            || entry.transitions.is_some()
            || entry.active_throughput_bps.is_some()
            || entry.sleep_state.is_some()
            || entry.idle_state.is_some();
        if inline {
            return Err(ConfigError::new(
                format!("{path}.file"),
                "a model is either inline or loaded from a file, not both",
            )
            .into());
        }
        let full = base_dir.join(&file);
        let text = fs::read_to_string(&full).map_err(|source| CliError::Io { path: full.clone(), source })?;
        let body: RawModelFile = toml::from_str(&text)
            .map_err(|e| CliError::Syntax { path: full.display().to_string(), message: e.to_string() })?;
        return Ok(build_model(&path, body)?);
    }
    let body = RawModelFile {
        kind: entry.kind.ok_or_else(|| missing(format!("{path}.kind"), "kind"))?,
        states: entry.states.ok_or_else(|| missing(format!("{path}.states"), "states"))?,
        transitions: entry.transitions.unwrap_or_default(),
        active_throughput_bps: entry
            .active_throughput_bps
            .ok_or_else(|| missing(format!("{path}.active_throughput_bps"), "active_throughput_bps"))?,
        sleep_state: entry.sleep_state.ok_or_else(|| missing(format!("{path}.sleep_state"), "sleep_state"))?,
        idle_state: entry.idle_state.ok_or_else(|| missing(format!("{path}.idle_state"), "idle_state"))?,
    };
    Ok(build_model(&path, body)?)
}

/// Parses and validates scenario text. Model file references resolve
/// against `base_dir`.
pub fn parse_scenario_str(text: &str, base_dir: &Path, origin: &str) -> Result<Scenario, CliError> {
    let raw: RawScenario =
        toml::from_str(text).map_err(|e| CliError::Syntax { path: origin.to_string(), message: e.to_string() })?;
    let horizon = raw.horizon_us.ok_or_else(|| missing("horizon_us", "horizon"))?;
    let capacity_bps = raw.capacity_bps.ok_or_else(|| missing("capacity_bps", "capacity"))?;

    let mut models = BTreeMap::new();
    for (i, entry) in raw.models.into_iter().enumerate() {
        let name = entry.name.clone();
        let model = resolve_model(i, entry, base_dir)?;
        if models.insert(name.clone(), model).is_some() {
            return Err(ConfigError::new(format!("models[{i}].name"), format!("duplicate model name `{name}`")).into());
        }
    }

    let mut clients = Vec::new();
    for (i, c) in raw.clients.into_iter().enumerate() {
        let mut interfaces = Vec::new();
        for (j, iface) in c.interfaces.into_iter().enumerate() {
            let path = format!("clients[{i}].interfaces[{j}]");
            let kind = kind_of(format!("{path}.kind"), &iface.kind)?;
            let model = models
                .get(&iface.model)
                .ok_or_else(|| ConfigError::new(format!("{path}.model"), format!("unknown model `{}`", iface.model)))?;
            if model.kind != kind {
                return Err(ConfigError::new(
                    format!("{path}.model"),
                    format!("model `{}` is a {} model, not {kind}", iface.model, model.kind),
                )
                .into());
            }
            interfaces.push(model.clone());
        }
        let baseline_interface = match c.baseline_interface {
            Some(b) => Some(kind_of(format!("clients[{i}].baseline_interface"), &b)?),
            None => None,
        };
        clients.push(ClientConfig {
            id: ClientId(c.id),
            battery_level: c.battery_level,
            interfaces,
            baseline_interface,
        });
    }

    let streams = raw
        .streams
        .into_iter()
        .map(|s| StreamSpec {
            client: ClientId(s.client),
            bitrate_bps: s.bitrate_bps,
            start: Micros(s.start_us),
            duration: Micros(s.duration_us),
            prebuffer_bytes: s.prebuffer_bytes,
            buffer_capacity_bytes: s.buffer_capacity_bytes,
            max_startup_latency: Micros(s.max_startup_latency_us),
        })
        .collect();

    let mut links = Vec::new();
    for (i, l) in raw.links.into_iter().enumerate() {
        let interface = kind_of(format!("links[{i}].interface"), &l.interface)?;
        let steps = l
            .steps
            .into_iter()
            .map(|s| LinkStep { start: Micros(s.t_us), throughput_bps: s.throughput_bps, quality: s.quality })
            .collect();
        let trace = LinkTrace::new(ClientId(l.client), interface, steps)
            .map_err(|e| ConfigError::new(format!("links[{i}].steps"), e.to_string()))?;
        links.push(trace);
    }

    let kind = raw.scheduler.kind.parse().map_err(|e: String| ConfigError::new("scheduler.kind", e))?;
    let mut weights = BTreeMap::new();
    for (key, w) in raw.scheduler.weights {
        let id: u32 =
            key.parse().map_err(|_| ConfigError::new(format!("scheduler.weights.{key}"), "keys must be client ids"))?;
        weights.insert(ClientId(id), w);
    }
    let defaults = SelectionPolicy::default();
    let mut preference = Vec::new();
    for (k, p) in raw.policy.preference.iter().enumerate() {
        preference.push(kind_of(format!("policy.preference[{k}]"), p)?);
    }
    let policy = SelectionPolicy {
        quality_floor: raw.policy.quality_floor.unwrap_or(defaults.quality_floor),
        hysteresis_margin: raw.policy.hysteresis_margin.unwrap_or(defaults.hysteresis_margin),
        min_dwell: raw.policy.min_dwell_us.map_or(defaults.min_dwell, Micros),
        preference,
    };

    let scenario = Scenario {
        horizon: Micros(horizon),
        capacity_bps,
        clients,
        streams,
        links,
        scheduler: SchedulerConfig { kind, weights, burst_bytes: raw.scheduler.burst_bytes },
        policy,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Reads, parses and validates a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scenario_str(&text, base, &path.display().to_string())
}

fn raw_model(name: String, m: &WnicModel) -> RawModelEntry {
    RawModelEntry {
        name,
        file: None,
        kind: Some(m.kind.to_string()),
        states: Some(
            m.states
                .iter()
                .map(|s| RawState { name: s.name.clone(), power_mw: s.power.as_mw_f64(), can_transfer: s.can_transfer })
                .collect(),
        ),
        transitions: Some(
            m.transitions
                .iter()
                .map(|((from, to), c)| RawTransition {
                    from: from.clone(),
                    to: to.clone(),
                    latency_us: c.latency.0,
                    energy_mj: c.energy.as_mj_f64(),
                })
                .collect(),
        ),
        active_throughput_bps: Some(m.active_throughput_bps),
        sleep_state: Some(m.sleep_state.clone()),
        idle_state: Some(m.idle_state.clone()),
    }
}

/// Renders a scenario as self-contained TOML (models inlined, one per
/// client interface).
pub fn scenario_to_toml(scenario: &Scenario) -> Result<String, CliError> {
    let mut models = Vec::new();
    let mut clients = Vec::new();
    let mut names = BTreeSet::new();
    for c in &scenario.clients {
        let mut interfaces = Vec::new();
        for m in &c.interfaces {
            let name = format!("client{}_{}", c.id, m.kind);
            names.insert(name.clone());
            models.push(raw_model(name.clone(), m));
            interfaces.push(RawInterface { kind: m.kind.to_string(), model: name });
        }
        clients.push(RawClient {
            id: c.id.0,
            battery_level: c.battery_level,
            interfaces,
            baseline_interface: c.baseline_interface.as_ref().map(|k| k.to_string()),
        });
    }
    let raw = RawScenario {
        horizon_us: Some(scenario.horizon.0),
        capacity_bps: Some(scenario.capacity_bps),
        scheduler: RawScheduler {
            kind: scenario.scheduler.kind.to_string(),
            weights: scenario.scheduler.weights.iter().map(|(c, w)| (c.to_string(), *w)).collect(),
            burst_bytes: scenario.scheduler.burst_bytes,
        },
        policy: RawPolicy {
            quality_floor: Some(scenario.policy.quality_floor),
            hysteresis_margin: Some(scenario.policy.hysteresis_margin),
            min_dwell_us: Some(scenario.policy.min_dwell.0),
            preference: scenario.policy.preference.iter().map(|k| k.to_string()).collect(),
        },
        models,
        clients,
        streams: scenario
            .streams
            .iter()
            .map(|s| RawStream {
                client: s.client.0,
                bitrate_bps: s.bitrate_bps,
                start_us: s.start.0,
                duration_us: s.duration.0,
                prebuffer_bytes: s.prebuffer_bytes,
                buffer_capacity_bytes: s.buffer_capacity_bytes,
                max_startup_latency_us: s.max_startup_latency.0,
            })
            .collect(),
        links: scenario
            .links
            .iter()
            .map(|l| RawLink {
                client: l.client.0,
                interface: l.interface.to_string(),
                steps: l
                    .steps()
                    .iter()
                    .map(|s| RawStep { t_us: s.start.0, throughput_bps: s.throughput_bps, quality: s.quality })
                    .collect(),
            })
            .collect(),
    };
    toml::to_string_pretty(&raw).map_err(|e| CliError::Serialize(e.to_string()))
}
