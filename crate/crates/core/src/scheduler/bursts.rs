use crate::scheduler::{BurstRequest, SchedulerError, StreamSpec};
use crate::units::Micros;

/// Splits a stream into burst requests whose deadlines guarantee zero
/// underflow.
///
/// Burst 1 is released at the stream start, carries at least the prebuffer
/// and is due by the startup bound. Playback may begin as soon as the
/// prebuffer lands, so burst `k` is due at the instant the buffer would run
/// dry if playback had started at the stream start and the earlier bursts
/// were in place; it is released at burst `k - 1`'s deadline. Deadlines are
/// rounded down to the microsecond so they never fall after the true
/// exhaustion instant.
///
/// A burst whose deadline would not come after its release is folded into
/// the one before it. If that makes the first burst larger than the buffer,
/// the startup window is longer than the buffer can bridge and the stream is
/// rejected.
pub fn derive_bursts(stream: &StreamSpec, burst_bytes: u64) -> Result<Vec<BurstRequest>, SchedulerError> {
    if burst_bytes == 0 {
        return Err(SchedulerError::ZeroBurst);
    }
    if burst_bytes > stream.buffer_capacity_bytes {
        return Err(SchedulerError::BurstTooLarge { burst: burst_bytes, capacity: stream.buffer_capacity_bytes });
    }
    if stream.max_startup_latency.0 <= 0 {
        return Err(SchedulerError::ZeroStartupLatency);
    }
    let total = stream.total_bytes();
    if total == 0 {
        return Ok(Vec::new());
    }
    let exhaustion = |cum_bytes: u64| {
        let us = cum_bytes as i128 * 8 * 1_000_000 / stream.bitrate_bps as i128;
        stream.start + Micros(us as i64)
    };

    let mut out: Vec<BurstRequest> = Vec::new();
    let mut sent = 0u64;
    let mut release = stream.start;
    let mut deadline = stream.start + stream.max_startup_latency;
    while sent < total {
        let want = if out.is_empty() { burst_bytes.max(stream.prebuffer_bytes) } else { burst_bytes };
        let bytes = want.min(total - sent);
        if deadline <= release {
            if let Some(prev) = out.last_mut() {
                prev.bytes += bytes;
                sent += bytes;
                deadline = exhaustion(sent);
                continue;
            }
        }
        out.push(BurstRequest { client: stream.client, bytes, release, deadline });
        sent += bytes;
        release = deadline;
        deadline = exhaustion(sent);
    }
    if let Some(big) = out.iter().find(|r| r.bytes > stream.buffer_capacity_bytes) {
        return Err(SchedulerError::StartupExceedsBuffer { needed: big.bytes, capacity: stream.buffer_capacity_bytes });
    }
    Ok(out)
}
