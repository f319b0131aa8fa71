//! Monte Carlo experiment engine.
//!
//! An [`ExperimentSpec`] expands into grid points; each point is evaluated
//! over a finite signal family whose worst member stands in for the
//! supremum over the sparsity class. The spikes family brackets the
//! thresholds where the bias/variance trade-off of hard thresholding turns,
//! and custom signal lists can be supplied when that is not enough.

mod engine;
mod family;
mod output;
mod spec;

pub use engine::{
    calibrate_d0, coordinate_key, evaluate_coordinate, lower_bound_consistency, mc_risk, member_stream,
    prior_functional_variance, replicate_stream, selection_error_frequency, sigma_hat_coverage,
    sigma_hat_fourth_moment_budget, sigma_impossibility_demo, CalibrationReport, CalibrationRow, CoordinateReport,
    LowerBoundReport, MemberRisk, RiskEstimate, SelectionPath, SigmaDemoRow, SigmaHatCoverage, CALIBRATION_DIMS,
    COVERAGE_BUDGET, SELECTION_BUDGET,
};
pub use family::{default_lambdas, members, spike_signal, Member, MemberSignal};
pub use output::{run_experiment, to_csv_string, write_csv, ResultRow, CSV_HEADER};
pub use spec::{
    Checks, Coordinate, CustomSignal, EstimatorKind, ExperimentSpec, FamilySpec, GridPoint, SparsityExpr,
    DEFAULT_REPS, DEFAULT_SEED,
};
