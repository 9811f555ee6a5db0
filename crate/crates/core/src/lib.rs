//! Deterministic discrete-event simulator of a two-subflow multipath TCP
//! connection, with pluggable packet schedulers and congestion controllers.

pub mod cc;
pub mod conn;
pub mod engine;
pub mod harness;
pub mod metrics;
pub mod path;
pub mod sched;
pub mod sim;
pub mod subflow;

pub use cc::CcKind;
pub use engine::{derive_seed, SimTime};
pub use path::PathConfig;
pub use sched::SchedKind;
pub use sim::{run, RunOutput, SimConfig};
pub use harness::{RunMatrix, RunResult};
pub use metrics::{RunRecord, ScoreTable};
