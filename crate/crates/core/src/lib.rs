//! Parallel agent teams sharing a global memory bank, with a trainable
//! admission controller deciding which intermediate steps get published.
//!
//! * [`memory_bank`]: linearizable append-only key/value store with usage logs.
//! * [`controller`]: context assembly, the admission policy, gates, checkpoints.
//! * [`runtime`]: K-team episode execution, traces, aggregation.
//! * [`training`]: group-relative, usage-shaped policy-gradient training.
//! * [`sim`]: seeded task generator, scripted teams and scorers.
//! * [`endpoint`]: chat-completions backed teams, aggregator and embedder.
//! * [`metrics`]: memory statistics and report files.

pub mod controller;
pub mod embedding;
pub mod endpoint;
pub mod error;
pub mod memory_bank;
pub mod metrics;
pub mod runtime;
pub mod seeds;
pub mod sim;
pub mod training;

pub use controller::{
    Action, AdmissionGate, AdmissionPolicy, ControllerContext, Decision, DecisionMode, PolicyShape,
    StepTriplet,
};
pub use embedding::{EmbeddingProvider, HashingEmbedder};
pub use error::{Error, Result};
pub use memory_bank::{MemoryBank, MemoryEntry, RetrievalRecord};
pub use metrics::{Ratio, RunMetrics};
pub use runtime::{EpisodeTrace, TaskSpec};
