use crate::power_model::{PowerModelError, StateTimeline, TimelineState, TransitionEvent, WnicModel};
use crate::units::Micros;

/// State timeline of one (client, interface) pair plus the transitions taken.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InterfaceTimeline {
    pub timeline: StateTimeline,
    pub transitions: Vec<TransitionEvent>,
}

/// Two bursts too close together to sleep in between; the radio stayed in
/// its transfer state over `[from, to)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StayAwake {
    pub from: Micros,
    pub to: Micros,
}

/// Lays out the power states of one radio over `[0, horizon]` given the
/// busy windows it must serve.
///
/// The radio sits in its sleep state, starts waking `wake latency` before a
/// burst so it is in the transfer state exactly at the burst start, and goes
/// back to sleep right after. When the gap to the next burst is not longer
/// than sleep latency + wake latency it stays in the transfer state instead.
/// Everything is clipped to the horizon; windows starting at or after it are
/// ignored.
pub fn build_timeline(
    model: &WnicModel,
    windows: &[(Micros, Micros)],
    horizon: Micros,
) -> Result<(InterfaceTimeline, Vec<StayAwake>), PowerModelError> {
    let mut out = InterfaceTimeline::default();
    let mut awake = Vec::new();
    if horizon <= Micros::ZERO {
        return Ok((out, awake));
    }
    let active = model.active_state().ok_or(PowerModelError::NoActiveState)?.name.clone();
    let sleep = model.sleep_state.clone();
    model.power_of(&sleep)?;
    let switching = active != sleep;
    let wake = model.wake_cost()?;
    let down = model.sleep_cost()?;

    let mut sorted: Vec<(Micros, Micros)> = windows
        .iter()
        .map(|&(s, e)| (s.max(Micros::ZERO), e.min(horizon)))
        .filter(|&(s, e)| s < horizon && e > s)
        .collect();
    sorted.sort();
    let mut runs: Vec<(Micros, Micros)> = Vec::new();
    for (s, e) in sorted {
        if let Some(last) = runs.last_mut() {
            if s <= last.1 + down.latency + wake.latency {
                if s > last.1 {
                    awake.push(StayAwake { from: last.1, to: s });
                }
                last.1 = last.1.max(e);
                continue;
            }
        }
        runs.push((s, e));
    }

    let tl = &mut out.timeline;
    let mut cursor = Micros::ZERO;
    for (s, e) in runs {
        if switching {
            let wake_start = (s - wake.latency).max(cursor);
            tl.push(cursor, wake_start, TimelineState::named(sleep.clone()));
            tl.push(wake_start, s, TimelineState::Transition { from: sleep.clone(), to: active.clone() });
            out.transitions.push(TransitionEvent { at: wake_start, from: sleep.clone(), to: active.clone() });
        } else {
            tl.push(cursor, s, TimelineState::named(sleep.clone()));
        }
        tl.push(s, e, TimelineState::named(active.clone()));
        cursor = e;
        if switching && e < horizon {
            let settled = (e + down.latency).min(horizon);
            tl.push(e, settled, TimelineState::Transition { from: active.clone(), to: sleep.clone() });
            out.transitions.push(TransitionEvent { at: e, from: active.clone(), to: sleep.clone() });
            cursor = settled;
        }
    }
    tl.push(cursor, horizon, TimelineState::named(sleep));
    Ok((out, awake))
}
