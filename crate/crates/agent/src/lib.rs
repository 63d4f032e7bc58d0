//! Intent co-creation agent and the convergence benchmark that replays it.

pub mod bench;
pub mod cocreation;
