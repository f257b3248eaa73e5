//! Deterministic multi-actor simulation harness: epoch orchestration,
//! the message bus and canonical wire format, scenarios with fault
//! injection, and event-log checkers.

pub mod checker;
pub mod scenario;
pub mod wire;
pub mod world;

pub use scenario::{FaultPlan, Op, Scenario, ScenarioError, ScenarioFile};
pub use wire::{parse_event_log, Envelope, Message};
pub use world::{
    replay_uploads, run_scenario, RunError, Scheduler, SimError, Topology, World, WorldSnapshot,
};
