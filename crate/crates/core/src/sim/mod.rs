//! Deterministic desk-scale task environment.
//!
//! Tasks are layered DAGs of facts. Overlap facts are needed by every team,
//! private facts by one team only. Distractor steps assert wrong values for
//! overlap facts; a team that retrieves one pays a time penalty on every
//! later move and may report the wrong value.

mod backend;
mod matrix;
mod scorer;
mod task;

pub use backend::{label_step, ScriptedTeam, SimTeamFactory, StepLabel};
pub use matrix::{run_matrix, run_sim_episode, MatrixResult, Variant};
pub use scorer::SimScorer;
pub use task::{
    format_answer, generate_task, parse_answer, AnswerField, Distractor, SimCosts, SimNode,
    SimParams, SimTask,
};
