//! Numerical construction of the zero-dimensional phi^4 Green's-function
//! hierarchy by fixed-point iteration.
//!
//! The crate builds truncated sequences of connected, amputated Green's
//! functions at zero external momenta, iterates the contractive update
//! mapping on them from an explicit starting sequence, and provides the
//! surrounding instrumentation: convergence tracking with per-component
//! freezing, oscillation diagnostics and stability scans over the coupling
//! and the truncation dimension, an upward sign map, and an independent
//! power-series oracle for small couplings.

pub mod combinatorics;
pub mod diagnostics;
pub mod error;
pub mod mapping;
pub mod model;
pub mod series;
pub mod solver;

pub use error::{Error, Result};
pub use mapping::{apply_mstar, MStarOutput, SweepConfig, SweepOrder};
pub use model::{
    bound_check, check_signs, eom_residual, extract_splitting, fundamental_sequence,
    BoundConfig, ClosureMode, Coupling, GreenSequence, SplittingSequence,
};
pub use solver::{
    component_converged, run, two_step_run, warm_start_run, IterationTrace, RunResult, RunStatus,
    SolverConfig, StartPoint,
};
