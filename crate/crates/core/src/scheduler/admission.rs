use crate::scheduler::StreamSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admit,
    Reject,
}

/// Bandwidth admission: a stream fits when the aggregate bitrate stays within
/// the server capacity.
pub fn admit_client(server_load_bps: u64, capacity_bps: u64, stream: &StreamSpec) -> Admission {
    match server_load_bps.checked_add(stream.bitrate_bps) {
        Some(load) if load <= capacity_bps => Admission::Admit,
        _ => Admission::Reject,
    }
}
