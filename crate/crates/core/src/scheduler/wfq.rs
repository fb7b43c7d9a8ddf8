//! Weighted fair queuing at burst granularity.
//!
//! Finish tags follow the usual packet-by-packet GPS construction:
//! `F = max(V(arrival), F_prev) + L / (φ · r)` where `V` is the virtual time
//! of a fluid GPS server of rate `r`. Virtual time advances at
//! `1 / Σφ` over the flows that are backlogged in the fluid system, so tags
//! are measured in seconds of service per unit weight. All arithmetic is
//! exact (big rationals), which keeps tag ties such as `0.5 + 0.5 == 1`
//! reliable.

use std::collections::{BTreeMap, VecDeque};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::scheduler::engine::{self, Discipline};
use crate::scheduler::{BurstRequest, Schedule, SchedulerError, SchedulingContext};
use crate::units::{ClientId, Micros, MICROS_PER_SEC};

pub type VirtualTime = BigRational;

/// Exact rational for a positive, finite weight.
pub fn weight_from_f64(phi: f64) -> Option<BigRational> {
    if phi.is_finite() && phi > 0.0 {
        BigRational::from_float(phi)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WfqFlowState {
    pub flow: ClientId,
    pub weight: BigRational,
    pub last_finish: VirtualTime,
    /// Tagged requests not yet started, in arrival order.
    pub pending: VecDeque<(BurstRequest, VirtualTime)>,
}

impl WfqFlowState {
    pub fn new(flow: ClientId, weight: BigRational) -> Self {
        WfqFlowState { flow, weight, last_finish: VirtualTime::zero(), pending: VecDeque::new() }
    }
}

/// Stamps a burst of `bytes` arriving at `virtual_now` and advances the flow's
/// last finish tag.
pub fn wfq_finish_tag(
    flow: &mut WfqFlowState,
    virtual_now: &VirtualTime,
    bytes: u64,
    total_rate_bps: u64,
) -> VirtualTime {
    let start = if *virtual_now > flow.last_finish { virtual_now.clone() } else { flow.last_finish.clone() };
    let bits = BigRational::from_integer(BigInt::from(bytes) * 8);
    let service = bits / (&flow.weight * BigRational::from_integer(BigInt::from(total_rate_bps)));
    let tag = start + service;
    flow.last_finish = tag.clone();
    tag
}

/// Virtual clock of the reference fluid GPS server.
#[derive(Debug, Clone)]
pub struct GpsClock {
    /// Real time of the last update, in microseconds.
    t: BigRational,
    v: VirtualTime,
    rate_bps: u64,
    flows: BTreeMap<ClientId, WfqFlowState>,
}

impl GpsClock {
    pub fn new(rate_bps: u64, weights: impl IntoIterator<Item = (ClientId, BigRational)>) -> Self {
        GpsClock {
            t: BigRational::zero(),
            v: VirtualTime::zero(),
            rate_bps,
            flows: weights.into_iter().map(|(c, w)| (c, WfqFlowState::new(c, w))).collect(),
        }
    }

    pub fn virtual_time(&self) -> &VirtualTime {
        &self.v
    }

    pub fn flow(&self, client: ClientId) -> Option<&WfqFlowState> {
        self.flows.get(&client)
    }

    /// Moves the clock to real time `to`, retiring flows whose fluid backlog
    /// drains on the way.
    pub fn advance(&mut self, to: Micros) {
        let to = BigRational::from_integer(BigInt::from(to.0));
        if to <= self.t {
            return;
        }
        let us_per_sec = BigRational::from_integer(BigInt::from(MICROS_PER_SEC));
        loop {
            let backlogged: Vec<&WfqFlowState> = self.flows.values().filter(|f| f.last_finish > self.v).collect();
            if backlogged.is_empty() {
                self.t = to;
                return;
            }
            let weight_sum: BigRational = backlogged.iter().map(|f| f.weight.clone()).sum();
            let next_finish = backlogged.iter().map(|f| &f.last_finish).min().expect("nonempty").clone();
            let reach = &self.t + (&next_finish - &self.v) * &weight_sum * &us_per_sec;
            if reach <= to {
                self.v = next_finish;
                self.t = reach;
            } else {
                self.v += (&to - &self.t) / (weight_sum * us_per_sec);
                self.t = to;
                return;
            }
        }
    }

    /// Registers an arrival and returns its finish tag.
    pub fn arrive(&mut self, req: &BurstRequest) -> Option<VirtualTime> {
        self.advance(req.release);
        let flow = self.flows.get_mut(&req.client)?;
        let tag = wfq_finish_tag(flow, &self.v, req.bytes, self.rate_bps);
        flow.pending.push_back((req.clone(), tag.clone()));
        Some(tag)
    }
}

struct FairQueuing {
    clock: GpsClock,
}

impl Discipline for FairQueuing {
    type Key = (VirtualTime, ClientId, Micros);

    fn on_release(&mut self, req: &BurstRequest) -> Self::Key {
        let tag = self.clock.arrive(req).expect("weights checked before scheduling");
        (tag, req.client, req.release)
    }

    fn on_start(&mut self, req: &BurstRequest) {
        if let Some(flow) = self.clock.flows.get_mut(&req.client) {
            // deferred remainders share their parent's entry
            if flow.pending.front().is_some_and(|(r, _)| r.deadline == req.deadline) {
                flow.pending.pop_front();
            }
        }
    }
}

/// Serves released requests in ascending finish-tag order (ties: smaller
/// client id, then earlier release), non-preemptively, using
/// `ctx.total_rate_bps` as the reference GPS rate.
pub fn schedule_wfq(
    requests: &[BurstRequest],
    weights: &BTreeMap<ClientId, BigRational>,
    ctx: &SchedulingContext<'_>,
) -> Result<Schedule, SchedulerError> {
    if ctx.total_rate_bps == 0 {
        return Err(SchedulerError::ZeroRate);
    }
    for req in requests {
        match weights.get(&req.client) {
            Some(w) if *w > BigRational::zero() => {}
            _ => return Err(SchedulerError::InvalidWeight(req.client)),
        }
    }
    let clock = GpsClock::new(ctx.total_rate_bps, weights.iter().map(|(c, w)| (*c, w.clone())));
    Ok(engine::run(requests, ctx, &mut FairQueuing { clock }))
}

/// Lossy view of a tag for reports and tests.
pub fn tag_to_f64(tag: &VirtualTime) -> f64 {
    tag.to_f64().unwrap_or(f64::NAN)
}
