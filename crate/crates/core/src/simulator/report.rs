use std::collections::BTreeMap;

use crate::power_model::{timeline_energy, InterfaceKind, PowerModelError, TimelineState, WnicModel};
use crate::scheduler::{
    Burst, BurstFailure, DeadlineMiss, InterfaceSwitch, Overflow, SelectionAlarm, StartupOutcome, Underflow,
};
use crate::simulator::timeline::{InterfaceTimeline, StayAwake};
use crate::units::{div_round, fixed_decimal, AveragePower, ClientId, Energy, Micros, Power};

pub type Timelines = BTreeMap<(ClientId, InterfaceKind), InterfaceTimeline>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterfaceEnergy {
    pub time_in_state: BTreeMap<String, Micros>,
    pub transitions: usize,
    pub energy: Energy,
    pub average: AveragePower,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClientEnergy {
    pub interfaces: BTreeMap<InterfaceKind, InterfaceEnergy>,
    pub energy: Energy,
    pub average: AveragePower,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EnergyReport {
    pub horizon: Micros,
    pub clients: BTreeMap<ClientId, ClientEnergy>,
    pub total: Energy,
}

impl EnergyReport {
    /// Accounts every timeline against its model. `models` must cover every
    /// timeline key.
    pub fn from_timelines(
        horizon: Micros,
        timelines: &Timelines,
        models: &BTreeMap<(ClientId, InterfaceKind), &WnicModel>,
    ) -> Result<Self, PowerModelError> {
        let mut report = EnergyReport { horizon, ..EnergyReport::default() };
        for (key, it) in timelines {
            let model = models.get(key).ok_or_else(|| PowerModelError::UnknownState(key.1.to_string()))?;
            let energy = timeline_energy(model, &it.timeline, &it.transitions)?;
            let client = report.clients.entry(key.0).or_default();
            client.interfaces.insert(
                key.1.clone(),
                InterfaceEnergy {
                    time_in_state: it.timeline.time_in_state(),
                    transitions: it.transitions.len(),
                    energy,
                    average: AveragePower::new(energy, horizon),
                },
            );
            client.energy += energy;
            client.average = AveragePower::new(client.energy, horizon);
            report.total += energy;
        }
        Ok(report)
    }
}

/// Scheduled against baseline energy for one client or the whole scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Savings {
    pub scheduled: Energy,
    pub baseline: Energy,
}

impl Savings {
    /// `1 - scheduled / baseline`; zero when both are zero, `None` when only
    /// the baseline is.
    pub fn fraction(&self) -> Option<f64> {
        match (self.baseline.0, self.scheduled.0) {
            (0, 0) => Some(0.0),
            (0, _) => None,
            (b, s) => Some((b - s) as f64 / b as f64),
        }
    }

    /// Fraction rounded to `decimals` places, computed in integers.
    pub fn fixed(&self, decimals: u32) -> Option<String> {
        let scale = 10i128.pow(decimals);
        match (self.baseline.0, self.scheduled.0) {
            (0, 0) => Some(fixed_decimal(0, decimals)),
            (0, _) => None,
            (b, s) => Some(fixed_decimal(div_round((b - s) * scale, b), decimals)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SavingsReport {
    pub clients: BTreeMap<ClientId, Savings>,
    pub total: Savings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rejection {
    pub client: ClientId,
    pub at: Micros,
    pub bitrate_bps: u64,
    pub load_bps: u64,
    pub capacity_bps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QosEventKind {
    Underflow,
    StartupViolation,
    DeadlineMiss,
    NoViableInterface,
    BurstFailed,
    AdmissionRejected,
    Overflow,
    BeyondHorizon,
    Startup,
    Switch,
    StayAwake,
}

impl QosEventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            QosEventKind::Underflow => "underflow",
            QosEventKind::StartupViolation => "startup_violation",
            QosEventKind::DeadlineMiss => "deadline_miss",
            QosEventKind::NoViableInterface => "no_viable_interface",
            QosEventKind::BurstFailed => "burst_failed",
            QosEventKind::AdmissionRejected => "admission_rejected",
            QosEventKind::Overflow => "overflow",
            QosEventKind::BeyondHorizon => "beyond_horizon",
            QosEventKind::Startup => "startup",
            QosEventKind::Switch => "switch",
            QosEventKind::StayAwake => "stay_awake",
        }
    }

    /// A client missed playback: it stalled, started late, lost a burst or
    /// was refused service. Everything else (late bursts that the buffer
    /// absorbed, recovered selection alarms, deferred bytes, switches) is
    /// logged but does not fail a run.
    pub fn is_violation(self) -> bool {
        matches!(
            self,
            QosEventKind::Underflow
                | QosEventKind::StartupViolation
                | QosEventKind::BurstFailed
                | QosEventKind::AdmissionRejected
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct QosEvent {
    pub client: ClientId,
    pub at: Micros,
    pub kind: QosEventKind,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QosReport {
    pub underflows: Vec<Underflow>,
    pub startup: BTreeMap<ClientId, StartupOutcome>,
    pub overflows: Vec<Overflow>,
    pub misses: Vec<DeadlineMiss>,
    pub failures: Vec<BurstFailure>,
    pub alarms: Vec<SelectionAlarm>,
    pub switches: Vec<InterfaceSwitch>,
    pub rejected: Vec<Rejection>,
    pub beyond_horizon: Vec<Burst>,
    pub stay_awake: Vec<(ClientId, InterfaceKind, StayAwake)>,
}

impl QosReport {
    /// Every event, sorted by client, then time.
    pub fn events(&self) -> Vec<QosEvent> {
        let mut out = Vec::new();
        let mut add = |client, at, kind, detail: String| out.push(QosEvent { client, at, kind, detail });
        for u in &self.underflows {
            add(u.client, u.at, QosEventKind::Underflow, "buffer empty".into());
        }
        for (&client, s) in &self.startup {
            let kind = if s.violated { QosEventKind::StartupViolation } else { QosEventKind::Startup };
            let detail = match s.latency {
                Some(l) => format!("latency_us={} bound_us={}", l.0, s.bound.0),
                None => format!("never started bound_us={}", s.bound.0),
            };
            add(client, s.started_at.unwrap_or(s.bound), kind, detail);
        }
        for o in &self.overflows {
            add(o.client, o.at, QosEventKind::Overflow, format!("deferred_bytes={}", o.excess_bytes));
        }
        for m in &self.misses {
            add(
                m.client,
                m.end,
                QosEventKind::DeadlineMiss,
                format!("deadline_us={} late_us={}", m.deadline.0, (m.end - m.deadline).0),
            );
        }
        for f in &self.failures {
            add(f.client, f.at, QosEventKind::BurstFailed, format!("bytes={} {}", f.bytes, f.reason));
        }
        for a in &self.alarms {
            add(a.client, a.at, QosEventKind::NoViableInterface, a.reason.clone());
        }
        for s in &self.switches {
            add(s.client, s.at, QosEventKind::Switch, format!("{}->{}", s.from, s.to));
        }
        for r in &self.rejected {
            add(
                r.client,
                r.at,
                QosEventKind::AdmissionRejected,
                format!("bitrate_bps={} load_bps={} capacity_bps={}", r.bitrate_bps, r.load_bps, r.capacity_bps),
            );
        }
        for b in &self.beyond_horizon {
            add(
                b.client,
                b.end,
                QosEventKind::BeyondHorizon,
                format!("{} start_us={} bytes={}", b.interface, b.start.0, b.bytes),
            );
        }
        for (client, iface, gap) in &self.stay_awake {
            add(*client, gap.from, QosEventKind::StayAwake, format!("{} until_us={}", iface, gap.to.0));
        }
        out.sort();
        out
    }

    pub fn violations(&self) -> usize {
        self.events().iter().filter(|e| e.kind.is_violation()).count()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }
}

/// One step of a piecewise-constant power plot: `power` holds from `at` to
/// the next step. The last step of each series marks the timeline end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PowerStep {
    pub at: Micros,
    pub power: Power,
}

/// Maps each timeline interval to its power level. Transition intervals are
/// drawn at the higher of their two end states, so a wake shows up as the
/// transfer level starting `wake latency` early.
pub fn power_trace(
    timelines: &Timelines,
    models: &BTreeMap<(ClientId, InterfaceKind), &WnicModel>,
) -> Result<BTreeMap<(ClientId, InterfaceKind), Vec<PowerStep>>, PowerModelError> {
    let mut out = BTreeMap::new();
    for (key, it) in timelines {
        let model = models.get(key).ok_or_else(|| PowerModelError::UnknownState(key.1.to_string()))?;
        let mut steps: Vec<PowerStep> = Vec::new();
        for interval in &it.timeline.intervals {
            let power = match &interval.state {
                TimelineState::State(name) => model.power_of(name)?,
                TimelineState::Transition { from, to } => model.power_of(from)?.max(model.power_of(to)?),
            };
            if steps.last().is_none_or(|s| s.power != power) {
                steps.push(PowerStep { at: interval.start, power });
            }
        }
        if let (Some(end), Some(last)) = (it.timeline.end(), steps.last().copied()) {
            steps.push(PowerStep { at: end, power: last.power });
        }
        out.insert(key.clone(), steps);
    }
    Ok(out)
}
