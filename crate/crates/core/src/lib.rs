//! Two-sided singular control of a cash reserve under drift ambiguity.
//!
//! The manager keeps cash inside a band `[x_L, x_U]` and, being uncertain
//! about the drift, evaluates costs under the worst prior in a
//! `kappa`-ignorance set. This crate computes the optimal band, checks the
//! optimality conditions on the resulting cost function, validates it by
//! Monte Carlo and runs comparative statics sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod model;
pub mod numerics;
pub mod simulator;
pub mod solver;
pub mod sweep;
pub mod verifier;

pub use error::{Error, Result};
pub use model::{
    affine_coeffs, feasibility_check, fundamental_pair, holding_cost, perpetual_cost,
    quadratic_roots, working_interval, AffineCoeffs, Derivs, Diffusion, DriftSign, Feasibility,
    FundamentalPair, ModelParams, PerpetualCost, Violation,
};
pub use simulator::{
    simulate_cost, simulate_path, simulate_policy, simulate_policy_path, BandPolicy, Generator,
    PathRecord, SimConfig, SimEstimate,
};
pub use solver::{
    solve_band, solve_band_from, solve_classical, solve_general, BandProblem, BandSolution,
    Candidate, SolutionRecord, SolveDiagnostics, SolveMethod, SolverConfig,
};
pub use sweep::{run_sweep, write_csv, Overlay, Start, SweepParam, SweepRow, SweepSpec};
pub use verifier::{
    generator_from_slope, hjb_residual, verify, worst_case_generator, Condition, ConditionReport,
    Tolerances, VerificationReport, DEFAULT_GRID_POINTS,
};
