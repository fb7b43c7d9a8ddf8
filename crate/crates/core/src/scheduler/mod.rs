//! Server-side resource manager: turns streams into deadline-bearing burst
//! requests and lays them out on the radio media with EDF or WFQ.

mod admission;
mod bursts;
mod edf;
mod engine;
mod playout;
mod wfq;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link_model::{LinkTrace, SelectionPolicy};
use crate::power_model::{InterfaceKind, WnicModel};
use crate::units::{ClientId, Micros};

pub use admission::{admit_client, Admission};
pub use bursts::derive_bursts;
pub use edf::schedule_edf;
pub use playout::{check_feasibility, Overflow, PlayoutBuffer, QosVerdict, StartupOutcome, Underflow};
pub use wfq::{schedule_wfq, tag_to_f64, weight_from_f64, wfq_finish_tag, GpsClock, VirtualTime, WfqFlowState};

pub const DEFAULT_MAX_BURST_BYTES: u64 = 64_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerError {
    #[error("burst size must be positive")]
    ZeroBurst,
    #[error("burst size {burst} exceeds buffer capacity {capacity}")]
    BurstTooLarge { burst: u64, capacity: u64 },
    #[error("max_startup_latency must be positive")]
    ZeroStartupLatency,
    #[error("covering the startup window takes a first burst of {needed} bytes, more than buffer capacity {capacity}")]
    StartupExceedsBuffer { needed: u64, capacity: u64 },
    #[error("invalid stream for client {client}: {reason}")]
    InvalidStream { client: ClientId, reason: String },
    #[error("client {0} has no positive WFQ weight")]
    InvalidWeight(ClientId),
    #[error("WFQ reference rate must be positive")]
    ZeroRate,
}

/// QoS needs of one client's stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub client: ClientId,
    pub bitrate_bps: u64,
    pub start: Micros,
    pub duration: Micros,
    pub prebuffer_bytes: u64,
    pub buffer_capacity_bytes: u64,
    pub max_startup_latency: Micros,
}

impl StreamSpec {
    /// Whole-stream payload, `ceil(bitrate × duration / 8)`.
    pub fn total_bytes(&self) -> u64 {
        let bits_x_us = self.bitrate_bps as u128 * self.duration.0.max(0) as u128;
        bits_x_us.div_ceil(8_000_000) as u64
    }

    pub fn end(&self) -> Micros {
        self.start + self.duration
    }

    /// `min(capacity / 2, 64 000)`, at least one byte.
    pub fn default_burst_bytes(&self) -> u64 {
        (self.buffer_capacity_bytes / 2).clamp(1, DEFAULT_MAX_BURST_BYTES)
    }

    pub fn validate(&self) -> Result<(), SchedulerError> {
        let fail =
            |reason: &str| Err(SchedulerError::InvalidStream { client: self.client, reason: reason.to_string() });
        if self.bitrate_bps == 0 {
            return fail("bitrate must be positive");
        }
        if self.prebuffer_bytes == 0 || self.prebuffer_bytes > self.buffer_capacity_bytes {
            return fail("prebuffer must satisfy 0 < prebuffer <= buffer_capacity");
        }
        if self.start.0 < 0 || self.duration.0 < 0 {
            return fail("start and duration must be non-negative");
        }
        if self.max_startup_latency.0 <= 0 {
            return Err(SchedulerError::ZeroStartupLatency);
        }
        Ok(())
    }
}

/// Bytes one client must receive inside `[release, deadline]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurstRequest {
    pub client: ClientId,
    pub bytes: u64,
    pub release: Micros,
    pub deadline: Micros,
}

/// One scheduled transfer: a single radio wake cycle on one interface.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Burst {
    pub client: ClientId,
    pub interface: InterfaceKind,
    pub start: Micros,
    pub end: Micros,
    pub bytes: u64,
    pub deadline: Micros,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlineMiss {
    pub client: ClientId,
    pub deadline: Micros,
    pub end: Micros,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurstFailure {
    pub client: ClientId,
    pub at: Micros,
    pub bytes: u64,
    pub deadline: Micros,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfaceSwitch {
    pub client: ClientId,
    pub at: Micros,
    pub from: InterfaceKind,
    pub to: InterfaceKind,
}

/// Raised the first time a request finds no usable interface.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionAlarm {
    pub client: ClientId,
    pub at: Micros,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    /// In start order.
    pub bursts: Vec<Burst>,
    /// Busy windows per medium, in start order.
    pub occupancy: BTreeMap<InterfaceKind, Vec<(Micros, Micros)>>,
    pub misses: Vec<DeadlineMiss>,
    pub failures: Vec<BurstFailure>,
    pub switches: Vec<InterfaceSwitch>,
    pub alarms: Vec<SelectionAlarm>,
}

impl Schedule {
    pub(crate) fn push(&mut self, burst: Burst) {
        self.occupancy.entry(burst.interface.clone()).or_default().push((burst.start, burst.end));
        if burst.end > burst.deadline {
            self.misses.push(DeadlineMiss { client: burst.client, deadline: burst.deadline, end: burst.end });
        }
        self.bursts.push(burst);
    }

    pub fn bursts_for(&self, client: ClientId) -> impl Iterator<Item = &Burst> {
        self.bursts.iter().filter(move |b| b.client == client)
    }

    /// Checks that no medium carries two bursts at once, no client receives
    /// two bursts at once, and every burst's average rate fits under the
    /// lowest link throughput seen while it runs.
    pub fn check_validity(&self, traces: &BTreeMap<(ClientId, InterfaceKind), &LinkTrace>) -> Result<(), String> {
        for (medium, windows) in &self.occupancy {
            let mut sorted = windows.clone();
            sorted.sort();
            if let Some(w) = sorted.windows(2).find(|w| w[1].0 < w[0].1) {
                return Err(format!("overlap on {medium}: {:?} and {:?}", w[0], w[1]));
            }
        }
        let mut per_client: BTreeMap<ClientId, Vec<(Micros, Micros)>> = BTreeMap::new();
        for b in &self.bursts {
            per_client.entry(b.client).or_default().push((b.start, b.end));
            let Some(trace) = traces.get(&(b.client, b.interface.clone())) else {
                return Err(format!("no trace for client {} on {}", b.client, b.interface));
            };
            let lowest = trace.min_throughput(b.start, b.end) as u128;
            let bits_x_us = b.bytes as u128 * 8 * 1_000_000;
            let span = (b.end - b.start).0 as u128;
            if span == 0 || bits_x_us > lowest * span {
                return Err(format!("burst {b:?} exceeds link throughput {lowest}"));
            }
        }
        for (client, mut windows) in per_client {
            windows.sort();
            if windows.windows(2).any(|w| w[1].0 < w[0].1) {
                return Err(format!("client {client} receives overlapping bursts"));
            }
        }
        Ok(())
    }
}

/// Everything the scheduler knows about one client.
#[derive(Debug, Clone, Default)]
pub struct ClientLinks<'a> {
    pub traces: BTreeMap<InterfaceKind, &'a LinkTrace>,
    pub models: BTreeMap<InterfaceKind, &'a WnicModel>,
    /// Rate an interface must sustain to be selectable.
    pub required_bps: u64,
    /// When present, deliveries are clipped to the client's buffer headroom
    /// and the excess deferred to a follow-on burst.
    pub stream: Option<&'a StreamSpec>,
}

#[derive(Debug, Clone, Default)]
pub struct SchedulingContext<'a> {
    pub clients: BTreeMap<ClientId, ClientLinks<'a>>,
    pub policy: SelectionPolicy,
    /// Reference server rate for WFQ finish tags.
    pub total_rate_bps: u64,
}
