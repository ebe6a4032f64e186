//! Numerical wave operators for the radial weakly coupled system
//! `∂_t² u1 - Δu1 = |∂_t u2|^p`, `∂_t² u2 - Δu2 = |∂_t u1|^q` in three
//! space dimensions.

pub mod error;
pub mod experiments;
pub mod fields;
pub mod finalstate;
pub mod lattice;
pub mod params;
pub mod scatter;
pub mod solver;
pub mod waveops;

pub use error::{Error, Result};
pub use experiments::{
    fit_decay_exponent, rate_checks, run, scaling_checks, verify_suite, Check, Command,
    ExponentCheck, RateFit, RunConfig, RunSummary,
};
pub use fields::{
    bracket_at, bracket_norm, check_y_membership, energy_norm, energy_norm_checked, make_profile,
    norm_x, norm_z, trace_at_zero, weighted_sup_m, DataPair, Field, Order, ProfileFamily,
    SourceField, WeightParams,
};
pub use finalstate::{
    attach_scaling, build_final_ladder, build_inverse_ladder, ladder_norm_report, InverseLadder,
    Ladder, NormRecord,
};
pub use lattice::{GridSpec, Lattice};
pub use params::{
    build_ladder, classify_regime, compute_kappas, compute_kappas_with, ladder_for, ExponentLadder,
    Exponents, KappaPair, Regime,
};
pub use scatter::{
    epsilon_scaling, forward_operator, generalized_wave_operator_plus, relative_y_error,
    sample_times, scattering_map, wave_operator_inverse, wave_operator_minus, wave_operator_plus,
    Diagnostics, EnergySeries, MembershipCheck, OperatorConfig, OperatorKind, OperatorResult,
    ShiftProfile,
};
pub use solver::{
    contraction_probe, metric_d, solve_fvp_long, solve_fvp_short, solve_ivp, FixedPointMap,
    IterationTrace, MetricKind, MetricSpec, ProbeReport, Solution, SolverOptions, Termination,
};
pub use waveops::{
    apply_k, apply_l, apply_r, difference_source, nonlinearity, pde_residual, tail_estimate,
    Residual, TruncationPolicy,
};
