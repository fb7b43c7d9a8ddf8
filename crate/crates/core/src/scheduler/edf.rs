use crate::scheduler::engine::{self, Discipline};
use crate::scheduler::{BurstRequest, Schedule, SchedulingContext};
use crate::units::{ClientId, Micros};

struct EarliestDeadline;

impl Discipline for EarliestDeadline {
    type Key = (Micros, ClientId, Micros);

    fn on_release(&mut self, req: &BurstRequest) -> Self::Key {
        (req.deadline, req.client, req.release)
    }
}

/// Non-preemptive earliest-deadline-first. Ties go to the smaller client id,
/// then the earlier release. Deadline misses are reported in the schedule,
/// never fatal.
pub fn schedule_edf(requests: &[BurstRequest], ctx: &SchedulingContext<'_>) -> Schedule {
    engine::run(requests, ctx, &mut EarliestDeadline)
}
