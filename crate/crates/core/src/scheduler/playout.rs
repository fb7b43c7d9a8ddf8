//! Client playout buffer replay.
//!
//! Levels are tracked in bit-microseconds (one byte = 8 000 000 units) so
//! consumption at an integer bitrate over integer microseconds stays exact.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::scheduler::{Schedule, StreamSpec};
use crate::units::{ClientId, Micros};

const UNITS_PER_BYTE: i128 = 8_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Prebuffer not reached yet.
    Waiting,
    Playing,
    /// Ran dry with content outstanding; resumes on the next delivery.
    Stalled,
    Finished,
}

/// Incremental replay of one stream's client buffer. Deliveries must be fed
/// in non-decreasing time order.
#[derive(Debug, Clone)]
pub struct PlayoutBuffer {
    client: ClientId,
    bitrate: i128,
    start: Micros,
    startup_bound: Micros,
    prebuffer: i128,
    capacity: i128,
    total: i128,
    now: Micros,
    level: i128,
    consumed: i128,
    received: i128,
    phase: Phase,
    started_at: Option<Micros>,
    underflows: Vec<Micros>,
    overflows: Vec<(Micros, u64)>,
}

impl PlayoutBuffer {
    pub fn client(&self) -> ClientId {
        self.client
    }

    pub fn new(stream: &StreamSpec) -> Self {
        let total = stream.total_bytes() as i128 * UNITS_PER_BYTE;
        PlayoutBuffer {
            client: stream.client,
            bitrate: stream.bitrate_bps as i128,
            start: stream.start,
            startup_bound: stream.start + stream.max_startup_latency,
            prebuffer: (stream.prebuffer_bytes as i128 * UNITS_PER_BYTE).min(total),
            capacity: stream.buffer_capacity_bytes as i128 * UNITS_PER_BYTE,
            total,
            now: Micros::ZERO,
            level: 0,
            consumed: 0,
            received: 0,
            phase: if total == 0 { Phase::Finished } else { Phase::Waiting },
            started_at: None,
            underflows: Vec::new(),
            overflows: Vec::new(),
        }
    }

    /// Plays forward to `t`, recording an underflow if the buffer empties with
    /// stream content still outstanding. Reaching exactly zero at `t` is not
    /// an underflow: a delivery at `t` arrives in time.
    pub fn advance_to(&mut self, t: Micros) {
        if t <= self.now {
            return;
        }
        if self.phase == Phase::Playing {
            let available = self.level.min(self.total - self.consumed);
            let need = self.bitrate * (t - self.now).0 as i128;
            if need < available {
                self.level -= need;
                self.consumed += need;
            } else {
                self.level -= available;
                self.consumed += available;
                if self.consumed >= self.total {
                    self.phase = Phase::Finished;
                } else if need > available {
                    self.phase = Phase::Stalled;
                    let dry = self.now + Micros((available / self.bitrate) as i64);
                    self.underflows.push(dry);
                }
            }
        }
        self.now = t;
    }

    /// Adds `bytes` arriving at `t`; returns the bytes that did not fit.
    pub fn deliver(&mut self, t: Micros, bytes: u64) -> u64 {
        self.advance_to(t);
        // whole bytes only, so the deferred remainder loses nothing
        let room_bytes = ((self.capacity - self.level).max(0) / UNITS_PER_BYTE) as u64;
        let taken = bytes.min(room_bytes);
        let accepted = taken as i128 * UNITS_PER_BYTE;
        self.level += accepted;
        self.received += accepted;
        let excess = bytes - taken;
        if excess > 0 {
            self.overflows.push((t, excess));
        }
        match self.phase {
            Phase::Waiting if self.received >= self.prebuffer => {
                self.phase = Phase::Playing;
                self.started_at = Some(t);
            }
            Phase::Stalled if accepted > 0 => self.phase = Phase::Playing,
            _ => {}
        }
        excess
    }

    /// Plays out whatever is buffered, recording a final underflow if the
    /// stream is left incomplete.
    pub fn finish(&mut self) {
        if self.phase == Phase::Playing {
            let available = self.level.min(self.total - self.consumed);
            if self.consumed + available >= self.total {
                self.consumed += available;
                self.level -= available;
                self.phase = Phase::Finished;
            } else {
                let dry = self.now + Micros((available / self.bitrate) as i64);
                self.underflows.push(dry);
                self.consumed += available;
                self.level -= available;
                self.phase = Phase::Stalled;
            }
        }
    }

    /// Free space at `t` in whole bytes, given deliveries so far.
    pub fn room_at(&self, t: Micros) -> u64 {
        let mut probe = self.clone();
        probe.advance_to(t);
        ((probe.capacity - probe.level).max(0) / UNITS_PER_BYTE) as u64
    }

    /// Earliest time at or after `from` when `bytes` would fit, if playback
    /// will ever drain enough.
    pub fn time_room_for(&self, from: Micros, bytes: u64) -> Option<Micros> {
        let mut probe = self.clone();
        probe.advance_to(from);
        let target = probe.capacity - (bytes as i128 * UNITS_PER_BYTE).min(probe.capacity);
        if probe.level <= target {
            return Some(probe.now);
        }
        if probe.phase != Phase::Playing {
            return None;
        }
        let drop = probe.level - target;
        if drop > probe.total - probe.consumed {
            return None;
        }
        Some(probe.now + Micros(((drop + probe.bitrate - 1) / probe.bitrate) as i64))
    }

    pub fn started_at(&self) -> Option<Micros> {
        self.started_at
    }

    pub fn underflows(&self) -> &[Micros] {
        &self.underflows
    }

    pub fn overflows(&self) -> &[(Micros, u64)] {
        &self.overflows
    }

    fn startup_outcome(&self) -> StartupOutcome {
        let violated = self.total > 0 && self.started_at.is_none_or(|s| s > self.startup_bound);
        StartupOutcome {
            started_at: self.started_at,
            latency: self.started_at.map(|s| s - self.start),
            bound: self.startup_bound,
            violated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Underflow {
    pub client: ClientId,
    pub at: Micros,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overflow {
    pub client: ClientId,
    pub at: Micros,
    pub excess_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartupOutcome {
    /// When playback began.
    pub started_at: Option<Micros>,
    /// Time from stream start until the prebuffer was in place.
    pub latency: Option<Micros>,
    /// Latest acceptable playback start.
    pub bound: Micros,
    pub violated: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QosVerdict {
    pub underflows: Vec<Underflow>,
    pub startup: BTreeMap<ClientId, StartupOutcome>,
    /// Bytes that did not fit on arrival; they are deferred, not lost.
    pub overflows: Vec<Overflow>,
}

impl QosVerdict {
    pub fn startup_violations(&self) -> impl Iterator<Item = (&ClientId, &StartupOutcome)> {
        self.startup.iter().filter(|(_, s)| s.violated)
    }

    pub fn passed(&self) -> bool {
        self.underflows.is_empty() && self.startup_violations().next().is_none()
    }
}

/// Replays every client buffer against the bytes the schedule delivers.
///
/// Each burst lands in full at its end time. Bytes that would overflow the
/// buffer are held back and delivered as a follow-on mini-burst as soon as
/// playback has drained enough room.
pub fn check_feasibility(schedule: &Schedule, streams: &[StreamSpec]) -> QosVerdict {
    let mut verdict = QosVerdict::default();
    for stream in streams {
        let mut buffer = PlayoutBuffer::new(stream);
        let mut pending: BinaryHeap<Reverse<(Micros, usize, u64)>> =
            schedule.bursts_for(stream.client).enumerate().map(|(seq, b)| Reverse((b.end, seq, b.bytes))).collect();
        let mut seq = pending.len();
        while let Some(Reverse((at, _, bytes))) = pending.pop() {
            let excess = buffer.deliver(at, bytes);
            if excess > 0 {
                if let Some(when) = buffer.time_room_for(at, excess) {
                    pending.push(Reverse((when.max(at), seq, excess)));
                    seq += 1;
                }
            }
        }
        buffer.finish();
        verdict.underflows.extend(buffer.underflows().iter().map(|&at| Underflow { client: stream.client, at }));
        verdict.overflows.extend(buffer.overflows().iter().map(|&(at, excess_bytes)| Overflow {
            client: stream.client,
            at,
            excess_bytes,
        }));
        verdict.startup.insert(stream.client, buffer.startup_outcome());
    }
    verdict
}
