//! Plan execution and continuous test assurance.
//!
//! [`orchestrator`] executes a plan against simulated domain controllers and
//! emits telemetry. [`tdd_qa`] turns the plan's derived tests into red/green
//! instances driven by that telemetry. [`closed_loop`] connects the two.

pub mod closed_loop;
pub mod orchestrator;
pub mod tdd_qa;

/// Logical time shared with the bus.
pub type Tick = u64;

pub use closed_loop::{ClosedLoop, LoopEvent};
pub use orchestrator::{Engine, RunConfig};
pub use tdd_qa::{instantiate_tests, QaConfig, SlaReport};
