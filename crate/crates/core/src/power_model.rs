//! WNIC power-state machines and energy bookkeeping.
//!
//! A [`WnicModel`] lists the power states of one radio, the cost of moving
//! between them, and the throughput it reaches while in its transfer state.
//! Timelines of states over time are turned into energy by
//! [`timeline_energy`]; every value is an exact integer in picojoules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{Energy, Micros, Power};

/// Radio technology of an interface. Distinct kinds are distinct media at the
/// server.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum InterfaceKind {
    Wlan,
    Bluetooth,
    Other(String),
}

impl fmt::Display for InterfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InterfaceKind::Wlan => f.write_str("wlan"),
            InterfaceKind::Bluetooth => f.write_str("bluetooth"),
            InterfaceKind::Other(label) => f.write_str(label),
        }
    }
}

impl From<String> for InterfaceKind {
    fn from(s: String) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "wlan" => InterfaceKind::Wlan,
            "bluetooth" => InterfaceKind::Bluetooth,
            _ => InterfaceKind::Other(s),
        }
    }
}

impl From<InterfaceKind> for String {
    fn from(kind: InterfaceKind) -> String {
        kind.to_string()
    }
}

impl FromStr for InterfaceKind {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(InterfaceKind::from(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PowerState {
    pub name: String,
    pub power: Power,
    pub can_transfer: bool,
}

impl PowerState {
    pub fn new(name: impl Into<String>, power: Power, can_transfer: bool) -> Self {
        PowerState { name: name.into(), power, can_transfer }
    }
}

/// Cost of one state change: how long it takes and the lump energy it draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TransitionCost {
    pub latency: Micros,
    pub energy: Energy,
}

impl TransitionCost {
    pub const FREE: TransitionCost = TransitionCost { latency: Micros::ZERO, energy: Energy::ZERO };

    pub fn new(latency: Micros, energy: Energy) -> Self {
        TransitionCost { latency, energy }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WnicModel {
    pub kind: InterfaceKind,
    pub states: Vec<PowerState>,
    /// Direct (from, to) pairs only; there is no routing through intermediate
    /// states.
    pub transitions: BTreeMap<(String, String), TransitionCost>,
    pub active_throughput_bps: u64,
    /// State the radio rests in between bursts.
    pub sleep_state: String,
    /// Listening state held by the always-on baseline.
    pub idle_state: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PowerModelError {
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("no transition from `{from}` to `{to}`")]
    NoTransition { from: String, to: String },
    #[error("model has no transfer state")]
    NoActiveState,
    #[error("inconsistent timeline: {0}")]
    InconsistentTimeline(String),
}

/// One broken invariant of a [`WnicModel`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelViolation {
    #[error("negative power in state `{0}`")]
    NegativePower(String),
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("unknown state `{name}` referenced by {field}")]
    UnknownState { field: String, name: String },
    #[error("expected exactly one transfer state, found {0}")]
    TransferStateCount(usize),
    #[error("negative latency or energy for transition `{from}` -> `{to}`")]
    NegativeTransition { from: String, to: String },
    #[error("unreachable active state: no direct transition `{from}` -> `{to}`")]
    UnreachableActive { from: String, to: String },
    #[error("active throughput must be positive")]
    ZeroThroughput,
}

impl WnicModel {
    pub fn state(&self, name: &str) -> Option<&PowerState> {
        self.states.iter().find(|s| s.name == name)
    }

    /// The unique state in which data can move.
    pub fn active_state(&self) -> Option<&PowerState> {
        self.states.iter().find(|s| s.can_transfer)
    }

    pub fn power_of(&self, name: &str) -> Result<Power, PowerModelError> {
        self.state(name).map(|s| s.power).ok_or_else(|| PowerModelError::UnknownState(name.to_string()))
    }

    pub fn active_power(&self) -> Power {
        self.active_state().map(|s| s.power).unwrap_or_default()
    }

    /// Cost of waking from the sleep state into the transfer state.
    pub fn wake_cost(&self) -> Result<TransitionCost, PowerModelError> {
        let active = self.active_state().ok_or(PowerModelError::NoActiveState)?;
        transition_cost(self, &self.sleep_state, &active.name)
    }

    /// Cost of dropping from the transfer state back to the sleep state.
    pub fn sleep_cost(&self) -> Result<TransitionCost, PowerModelError> {
        let active = self.active_state().ok_or(PowerModelError::NoActiveState)?;
        transition_cost(self, &active.name, &self.sleep_state)
    }

    /// Illustrative 802.11b card: 1 W while active (transmit, receive and
    /// listen draw about the same), 30 mW in doze, 0 when off; 5 Mbit/s.
    pub fn default_wlan() -> Self {
        let mut transitions = BTreeMap::new();
        for (from, to) in [("off", "active"), ("active", "off"), ("doze", "active"), ("active", "doze")] {
            transitions.insert((from.to_string(), to.to_string()), TransitionCost::FREE);
        }
        WnicModel {
            kind: InterfaceKind::Wlan,
            states: vec![
                PowerState::new("active", Power::from_mw(1000), true),
                PowerState::new("doze", Power::from_mw(30), false),
                PowerState::new("off", Power::from_mw(0), false),
            ],
            transitions,
            active_throughput_bps: 5_000_000,
            sleep_state: "off".into(),
            idle_state: "active".into(),
        }
    }

    /// Illustrative Bluetooth 1.1 radio: 100 mW active, 2 mW parked, 0 when
    /// off; 723 kbit/s.
    pub fn default_bluetooth() -> Self {
        let mut transitions = BTreeMap::new();
        for (from, to) in [("park", "active"), ("active", "park"), ("off", "active"), ("active", "off")] {
            transitions.insert((from.to_string(), to.to_string()), TransitionCost::FREE);
        }
        WnicModel {
            kind: InterfaceKind::Bluetooth,
            states: vec![
                PowerState::new("active", Power::from_mw(100), true),
                PowerState::new("park", Power::from_mw(2), false),
                PowerState::new("off", Power::from_mw(0), false),
            ],
            transitions,
            active_throughput_bps: 723_000,
            sleep_state: "park".into(),
            idle_state: "active".into(),
        }
    }
}

/// Checks every structural invariant of `model`, returning all violations.
pub fn validate_model(model: &WnicModel) -> Result<(), Vec<ModelViolation>> {
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    for state in &model.states {
        if state.power.0 < 0 {
            violations.push(ModelViolation::NegativePower(state.name.clone()));
        }
        if !seen.insert(state.name.as_str()) {
            violations.push(ModelViolation::DuplicateState(state.name.clone()));
        }
    }
    let transfer = model.states.iter().filter(|s| s.can_transfer).count();
    if transfer != 1 {
        violations.push(ModelViolation::TransferStateCount(transfer));
    }
    for (field, name) in [("sleep_state", &model.sleep_state), ("idle_state", &model.idle_state)] {
        if !seen.contains(name.as_str()) {
            violations.push(ModelViolation::UnknownState { field: field.into(), name: name.clone() });
        }
    }
    for ((from, to), cost) in &model.transitions {
        for name in [from, to] {
            if !seen.contains(name.as_str()) {
                violations.push(ModelViolation::UnknownState {
                    field: format!("transitions[{from} -> {to}]"),
                    name: name.clone(),
                });
            }
        }
        if cost.latency.0 < 0 || cost.energy.0 < 0 {
            violations.push(ModelViolation::NegativeTransition { from: from.clone(), to: to.clone() });
        }
    }
    if model.active_throughput_bps == 0 {
        violations.push(ModelViolation::ZeroThroughput);
    }
    if let Some(active) = model.active_state() {
        if seen.contains(model.sleep_state.as_str()) && active.name != model.sleep_state {
            for (from, to) in [(&model.sleep_state, &active.name), (&active.name, &model.sleep_state)] {
                if !model.transitions.contains_key(&(from.clone(), to.clone())) {
                    violations.push(ModelViolation::UnreachableActive { from: from.clone(), to: to.clone() });
                }
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

pub fn energy_of_interval(model: &WnicModel, state: &str, duration: Micros) -> Result<Energy, PowerModelError> {
    Ok(model.power_of(state)?.over(duration))
}

pub fn transition_cost(model: &WnicModel, from: &str, to: &str) -> Result<TransitionCost, PowerModelError> {
    for name in [from, to] {
        if model.state(name).is_none() {
            return Err(PowerModelError::UnknownState(name.to_string()));
        }
    }
    if from == to {
        return Ok(TransitionCost::FREE);
    }
    model
        .transitions
        .get(&(from.to_string(), to.to_string()))
        .copied()
        .ok_or_else(|| PowerModelError::NoTransition { from: from.into(), to: to.into() })
}

/// What a radio is doing over one timeline interval. Transitions with a
/// latency occupy their own interval at zero power; their energy is charged
/// as a lump through the transition record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TimelineState {
    State(String),
    Transition { from: String, to: String },
}

impl TimelineState {
    pub fn named(name: impl Into<String>) -> Self {
        TimelineState::State(name.into())
    }

    /// Key used in time-in-state maps.
    pub fn label(&self) -> &str {
        match self {
            TimelineState::State(name) => name,
            TimelineState::Transition { .. } => TRANSITION_LABEL,
        }
    }
}

pub const TRANSITION_LABEL: &str = "transition";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineInterval {
    pub start: Micros,
    pub end: Micros,
    pub state: TimelineState,
}

impl TimelineInterval {
    pub fn duration(&self) -> Micros {
        self.end - self.start
    }
}

/// A state change that happened at `at`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub at: Micros,
    pub from: String,
    pub to: String,
}

/// Contiguous, non-overlapping state intervals of one interface.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateTimeline {
    pub intervals: Vec<TimelineInterval>,
}

impl StateTimeline {
    pub fn new() -> Self {
        StateTimeline::default()
    }

    /// Appends an interval, merging with the previous one when the state is
    /// unchanged and dropping empty spans.
    pub fn push(&mut self, start: Micros, end: Micros, state: TimelineState) {
        if end <= start {
            return;
        }
        if let Some(last) = self.intervals.last_mut() {
            if last.end == start && last.state == state && matches!(state, TimelineState::State(_)) {
                last.end = end;
                return;
            }
        }
        self.intervals.push(TimelineInterval { start, end, state });
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn start(&self) -> Option<Micros> {
        self.intervals.first().map(|i| i.start)
    }

    pub fn end(&self) -> Option<Micros> {
        self.intervals.last().map(|i| i.end)
    }

    /// True when the intervals tile `[0, horizon]` exactly.
    pub fn covers(&self, horizon: Micros) -> bool {
        if horizon == Micros::ZERO {
            return self.is_empty();
        }
        self.start() == Some(Micros::ZERO) && self.end() == Some(horizon) && self.is_contiguous()
    }

    fn is_contiguous(&self) -> bool {
        self.intervals.iter().all(|i| i.end > i.start) && self.intervals.windows(2).all(|w| w[0].end == w[1].start)
    }

    /// State occupied at `t`, if `t` lies inside the timeline.
    pub fn state_at(&self, t: Micros) -> Option<&TimelineState> {
        let idx = self.intervals.partition_point(|i| i.end <= t);
        self.intervals.get(idx).filter(|i| i.start <= t).map(|i| &i.state)
    }

    /// Total time per state label (transitions pooled under
    /// [`TRANSITION_LABEL`]).
    pub fn time_in_state(&self) -> BTreeMap<String, Micros> {
        let mut out = BTreeMap::new();
        for interval in &self.intervals {
            *out.entry(interval.state.label().to_string()).or_insert(Micros::ZERO) += interval.duration();
        }
        out
    }

    /// Cuts the timeline at `t`. Intervals straddling `t` are split.
    pub fn split_at(&self, t: Micros) -> (StateTimeline, StateTimeline) {
        let mut left = StateTimeline::new();
        let mut right = StateTimeline::new();
        for i in &self.intervals {
            if i.end <= t {
                left.intervals.push(i.clone());
            } else if i.start >= t {
                right.intervals.push(i.clone());
            } else {
                left.intervals.push(TimelineInterval { start: i.start, end: t, state: i.state.clone() });
                right.intervals.push(TimelineInterval { start: t, end: i.end, state: i.state.clone() });
            }
        }
        (left, right)
    }
}

/// The no-scheduling reference: the radio listens in its idle state for the
/// whole horizon.
pub fn baseline_timeline(model: &WnicModel, horizon: Micros) -> StateTimeline {
    let mut timeline = StateTimeline::new();
    timeline.push(Micros::ZERO, horizon, TimelineState::named(model.idle_state.clone()));
    timeline
}

/// Energy of a timeline: power × duration over every named interval plus the
/// lump energy of every transition taken.
///
/// The transition list must agree with the timeline: a transition at `t`
/// either opens a transition interval with the same endpoints, or sits on a
/// boundary between its `from` and `to` states.
pub fn timeline_energy(
    model: &WnicModel,
    timeline: &StateTimeline,
    transitions: &[TransitionEvent],
) -> Result<Energy, PowerModelError> {
    check_consistency(model, timeline, transitions)?;
    let mut total = Energy::ZERO;
    for interval in &timeline.intervals {
        if let TimelineState::State(name) = &interval.state {
            total += energy_of_interval(model, name, interval.duration())?;
        }
    }
    for t in transitions {
        total += transition_cost(model, &t.from, &t.to)?.energy;
    }
    Ok(total)
}

fn check_consistency(
    model: &WnicModel,
    timeline: &StateTimeline,
    transitions: &[TransitionEvent],
) -> Result<(), PowerModelError> {
    let bad = |msg: String| Err(PowerModelError::InconsistentTimeline(msg));
    if !timeline.is_contiguous() {
        return bad("intervals have gaps, overlaps or empty spans".into());
    }
    for interval in &timeline.intervals {
        match &interval.state {
            TimelineState::State(name) => {
                model.power_of(name)?;
            }
            TimelineState::Transition { from, to } => {
                transition_cost(model, from, to)?;
            }
        }
    }
    if timeline.is_empty() {
        if transitions.is_empty() {
            return Ok(());
        }
        return bad("transitions recorded on an empty timeline".into());
    }
    let (start, end) = (timeline.start().unwrap(), timeline.end().unwrap());
    let intervals = &timeline.intervals;
    let mut explained = BTreeSet::new();
    for tr in transitions {
        if tr.at < start || tr.at >= end {
            return bad(format!("transition at {} outside [{start}, {end})", tr.at));
        }
        let idx = intervals.partition_point(|i| i.start < tr.at);
        let next = match intervals.get(idx) {
            Some(i) if i.start == tr.at => i,
            _ => return bad(format!("transition at {} does not sit on an interval boundary", tr.at)),
        };
        let prev = idx.checked_sub(1).map(|p| &intervals[p]);
        let named = |i: &TimelineInterval, want: &str| matches!(&i.state, TimelineState::State(n) if n == want);
        let ok = match &next.state {
            TimelineState::Transition { from, to } if *from == tr.from && *to == tr.to => {
                explained.insert(idx);
                true
            }
            TimelineState::State(n) if *n == tr.to => prev.is_none_or(|p| named(p, &tr.from)),
            _ => false,
        };
        if !ok {
            return bad(format!("transition {} -> {} at {} disagrees with the timeline", tr.from, tr.to, tr.at));
        }
    }
    for (idx, interval) in intervals.iter().enumerate() {
        if matches!(interval.state, TimelineState::Transition { .. })
            && interval.start != start
            && !explained.contains(&idx)
        {
            return bad(format!("transition interval at {} has no transition record", interval.start));
        }
    }
    Ok(())
}

/// Energy of a piece of a timeline without consistency checks; transitions
/// are charged when their timestamp falls in `[start, end)`.
pub fn segment_energy(
    model: &WnicModel,
    segment: &StateTimeline,
    transitions: &[TransitionEvent],
) -> Result<Energy, PowerModelError> {
    let (Some(start), Some(end)) = (segment.start(), segment.end()) else {
        return Ok(Energy::ZERO);
    };
    let mut total = Energy::ZERO;
    for interval in &segment.intervals {
        if let TimelineState::State(name) = &interval.state {
            total += energy_of_interval(model, name, interval.duration())?;
        }
    }
    for t in transitions.iter().filter(|t| t.at >= start && t.at < end) {
        total += transition_cost(model, &t.from, &t.to)?.energy;
    }
    Ok(total)
}
