//! Deterministic simulator of an energy-aware Hotspot server that streams
//! media to battery-powered clients in bursts, picks a radio per client, and
//! accounts each radio's power states against an always-on baseline.

pub mod cli;
pub mod link_model;
pub mod power_model;
pub mod scheduler;
pub mod simulator;
pub mod units;

pub use link_model::{select_interface, LinkTrace, SelectionPolicy};
pub use power_model::{InterfaceKind, StateTimeline, WnicModel};
pub use scheduler::{derive_bursts, schedule_edf, schedule_wfq, Schedule, StreamSpec};
pub use simulator::{compare, run, run_baseline, EnergyReport, QosReport, RunOutput, Scenario};
pub use units::{ClientId, Energy, Micros, Power};
