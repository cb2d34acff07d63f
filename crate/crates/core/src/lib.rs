//! Network digital twin workbench.
//!
//! The pipeline runs in a closed loop:
//!
//! 1. [`topology`] draws a degree-bounded provider core from one of the
//!    classic random graph models and attaches PE/CE/switch/host LANs.
//! 2. [`traffic`] schedules growing file transfers between hosts of
//!    different LANs.
//! 3. [`netsim`] replays the schedule through a time-stepped fluid model
//!    over shortest-path routing plus optional policy-based overrides,
//!    logging drained chunks per directed link.
//! 4. [`telemetry`] turns the log into per-edge and per-vertex metrics
//!    and into model features.
//! 5. [`mpnn`] classifies every directed core edge into one of four
//!    congestion classes.
//! 6. [`reroute`] turns the classes into per-router diversion rules.
//! 7. [`harness`] runs the baseline and closed-loop phases and compares them.

pub mod harness;
pub mod mpnn;
pub mod netsim;
pub mod reroute;
pub mod telemetry;
pub mod topology;
pub mod traffic;

pub(crate) mod seed;
