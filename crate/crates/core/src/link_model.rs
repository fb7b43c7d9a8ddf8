//! Scripted channel conditions and the interface-selection policy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::power_model::{InterfaceKind, WnicModel};
use crate::units::{ClientId, Micros};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkStep {
    pub start: Micros,
    pub throughput_bps: u64,
    /// Unitless link quality in `[0, 1]`.
    pub quality: f64,
}

/// Piecewise-constant throughput and quality of one (client, interface) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkTrace {
    pub client: ClientId,
    pub interface: InterfaceKind,
    steps: Vec<LinkStep>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    #[error("link trace has no steps")]
    Empty,
    #[error("first step must start at 0, found {0}")]
    FirstStepNotZero(Micros),
    #[error("step start times must be strictly increasing (step {0})")]
    NotIncreasing(usize),
    #[error("step {index}: quality {quality} outside [0, 1]")]
    QualityRange { index: usize, quality: f64 },
    #[error("no viable interface at {0}")]
    NoViableInterface(Micros),
    #[error("invalid selection policy: {0}")]
    Policy(String),
}

impl LinkTrace {
    pub fn new(client: ClientId, interface: InterfaceKind, steps: Vec<LinkStep>) -> Result<Self, LinkError> {
        let first = steps.first().ok_or(LinkError::Empty)?;
        if first.start != Micros::ZERO {
            return Err(LinkError::FirstStepNotZero(first.start));
        }
        for (i, w) in steps.windows(2).enumerate() {
            if w[1].start <= w[0].start {
                return Err(LinkError::NotIncreasing(i + 1));
            }
        }
        for (index, s) in steps.iter().enumerate() {
            if !(0.0..=1.0).contains(&s.quality) {
                return Err(LinkError::QualityRange { index, quality: s.quality });
            }
        }
        Ok(LinkTrace { client, interface, steps })
    }

    /// Trace that never changes.
    pub fn constant(client: ClientId, interface: InterfaceKind, throughput_bps: u64, quality: f64) -> Self {
        LinkTrace::new(client, interface, vec![LinkStep { start: Micros::ZERO, throughput_bps, quality }])
            .expect("constant trace is well formed")
    }

    pub fn steps(&self) -> &[LinkStep] {
        &self.steps
    }

    /// Step whose half-open interval contains `t`; times before 0 clamp to the
    /// first step and times past the end to the last.
    pub fn step_at(&self, t: Micros) -> &LinkStep {
        let idx = self.steps.partition_point(|s| s.start <= t);
        &self.steps[idx.saturating_sub(1)]
    }

    pub fn quality_at(&self, t: Micros) -> f64 {
        self.step_at(t).quality
    }

    /// First step boundary strictly after `t`.
    pub fn next_change_after(&self, t: Micros) -> Option<Micros> {
        let idx = self.steps.partition_point(|s| s.start <= t);
        self.steps.get(idx).map(|s| s.start)
    }

    /// Lowest throughput over `[start, end)`.
    pub fn min_throughput(&self, start: Micros, end: Micros) -> u64 {
        let mut lowest = self.step_at(start).throughput_bps;
        let first = self.steps.partition_point(|s| s.start <= start);
        for step in self.steps[first..].iter().take_while(|s| s.start < end) {
            lowest = lowest.min(step.throughput_bps);
        }
        lowest
    }
}

pub fn throughput_at(trace: &LinkTrace, t: Micros) -> u64 {
    trace.step_at(t).throughput_bps
}

/// Anti-flapping interface selection parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    pub quality_floor: f64,
    pub hysteresis_margin: f64,
    pub min_dwell: Micros,
    /// Most preferred first. Interfaces absent from the list rank after it in
    /// kind order; an empty list means "derive from the models".
    pub preference: Vec<InterfaceKind>,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy {
            quality_floor: 0.5,
            hysteresis_margin: 0.1,
            min_dwell: Micros::from_secs(5),
            preference: Vec::new(),
        }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<(), LinkError> {
        if !(0.0..=1.0).contains(&self.quality_floor) {
            return Err(LinkError::Policy(format!("quality_floor {} outside [0, 1]", self.quality_floor)));
        }
        if self.hysteresis_margin.is_nan() || self.hysteresis_margin < 0.0 {
            return Err(LinkError::Policy(format!(
                "hysteresis_margin {} is not a non-negative number",
                self.hysteresis_margin
            )));
        }
        if self.min_dwell.0 < 0 {
            return Err(LinkError::Policy("min_dwell is negative".into()));
        }
        Ok(())
    }

    /// Copy of this policy with the preference filled in from `models` when
    /// none was configured.
    pub fn with_default_preference<'a>(&self, models: impl IntoIterator<Item = &'a WnicModel>) -> SelectionPolicy {
        let mut policy = self.clone();
        if policy.preference.is_empty() {
            policy.preference = preference_by_energy_per_bit(models);
        }
        policy
    }
}

/// Interfaces ordered by active power / active throughput, cheapest first.
pub fn preference_by_energy_per_bit<'a>(models: impl IntoIterator<Item = &'a WnicModel>) -> Vec<InterfaceKind> {
    let mut ranked: Vec<&WnicModel> = models.into_iter().collect();
    // a/b < c/d  <=>  a*d < c*b for positive denominators
    ranked.sort_by(|a, b| {
        let lhs = a.active_power().0 as i128 * b.active_throughput_bps as i128;
        let rhs = b.active_power().0 as i128 * a.active_throughput_bps as i128;
        lhs.cmp(&rhs).then_with(|| a.kind.cmp(&b.kind))
    });
    ranked.into_iter().map(|m| m.kind.clone()).collect()
}

/// Picks the interface a client should use at `t`.
///
/// Returns the most preferred interface that carries `required_bps` at or
/// above the quality floor, except that a still-qualifying `current`
/// interface is kept while the dwell time since `last_switch` has not elapsed
/// or the challenger's quality advantage is below the hysteresis margin.
pub fn select_interface(
    traces: &BTreeMap<InterfaceKind, &LinkTrace>,
    t: Micros,
    required_bps: u64,
    policy: &SelectionPolicy,
    current: Option<&InterfaceKind>,
    last_switch: Micros,
) -> Result<InterfaceKind, LinkError> {
    let qualifies = |kind: &InterfaceKind| {
        traces.get(kind).is_some_and(|trace| {
            let step = trace.step_at(t);
            step.throughput_bps >= required_bps && step.quality >= policy.quality_floor
        })
    };
    let ranked = policy.preference.iter().chain(traces.keys().filter(|k| !policy.preference.contains(k)));
    let mut challenger = None;
    for kind in ranked {
        if qualifies(kind) {
            challenger = Some(kind);
            break;
        }
    }
    let challenger = challenger.ok_or(LinkError::NoViableInterface(t))?;
    if let Some(cur) = current {
        if cur != challenger && qualifies(cur) {
            let advantage = traces[challenger].quality_at(t) - traces[cur].quality_at(t);
            if t - last_switch < policy.min_dwell || advantage < policy.hysteresis_margin {
                return Ok(cur.clone());
            }
        }
    }
    Ok(challenger.clone())
}
