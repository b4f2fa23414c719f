//! Tree-based genetic programming with pre-generated tournaments. Members
//! that can no longer win any of their tournaments stop being evaluated,
//! without changing which parents are selected.

pub mod cli;
pub mod data;
pub mod engine;
pub mod error;
pub mod eval;
pub mod genome;
pub mod tourney;

pub use data::{BitCaseTable, Dataset, FitnessCaseTable, Schema};
pub use engine::{run_experiment, verify_paths, Engine, GenerationStats, RunConfig};
pub use error::{DataError, EngineError, GenomeError};
pub use eval::{EvalState, Status};
pub use genome::{FunctionSet, Program};
pub use tourney::{EfficiencyLedger, TournamentSet};
