//! KAM iteration.

pub mod hypotheses;
pub mod linalg;
pub mod map;
pub mod model;
pub mod run;
pub mod step;

pub use hypotheses::{check_hypotheses, evaluate_hypotheses, HypothesisCheck, HypothesisReport};
pub use map::{MapSpectra, TorusMap};
pub use model::{build_example_hamiltonian, BuiltinKind, HamiltonianModel, ModelParams};
pub use run::{
    approximate_sequence, conjugacy_regularity, invariance_residual, run_from_config, run_kam, ConjugacyRegularity, IterationTrace,
    KamFailure, KamRun, RunConfig, TraceRecord,
};
pub use step::{kam_step, solve_homological, StepOptions, StepTransform};
