//! Optimal client participation for a fixed antenna position.
//!
//! Solves `min_{q in simplex} J(q) = f(q) g(q)`: the product of the expected
//! straggler latency and the convergence factor. The objective diverges on
//! the simplex boundary, so every minimizer is interior; interior KKT points
//! satisfy an adjacent-index recursion in `psi_i = c_i / q_i^2` whose
//! increments are the tail-latency premiums `(g/(f omega)) K gap_i Q_i^{K-1}`.
//!
//! Submodules:
//! - [`inner`]: the general N-client solver (projected gradient with
//!   multi-start, then a Newton polish of the KKT system), KKT diagnostics,
//!   and the latency-class reduction.
//! - [`two_class`]: the scalar fast/slow specialization, its stationarity
//!   solver, and the participation-collapse threshold.

mod inner;
mod two_class;

pub use inner::{
    class_partition, kkt_report, solve_class_reduced, solve_inner, sqrt_rule, tail_premium,
    ClassPartition, ClassReducedSolution, InnerSolution, InnerSolveOptions, KktReport,
};
pub use two_class::{
    collapse_threshold, phase_transition_sweep, solve_two_class, two_class_expected_straggler,
    two_class_objective, two_class_stationarity, PhaseSweepOptions, PhaseSweepRow,
    SlowClassScaling, ThresholdCheck, TwoClassProblem, TwoClassSolution,
};
