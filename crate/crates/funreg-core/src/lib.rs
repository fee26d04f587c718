//! Functional linear regression with functional responses, a functional
//! covariate, and (optionally high-dimensional) vector covariates, solved by
//! RKHS penalized least squares.
//!
//! The model is
//!
//! ```text
//! Y_t(r) = int_0^1 A(r, s) X_t(s) ds + sum_l beta_l(r) Z_tl + eps_t(r)
//! ```
//!
//! observed on discrete sample grids. By the representer theorem the
//! penalized estimator reduces to finite coefficient matrices, fitted by an
//! iterative coordinate descent that alternates a closed-form spectral ridge
//! update of the bivariate coefficient with a group-lasso block coordinate
//! descent over the vector-covariate coefficients.
//!
//! The crate provides the solver ([`estimator`]), sample grids and datasets
//! with CSV I/O ([`grid`], [`dataset`]), the synthetic-study generator and
//! its oracle ([`mod@simulate`]), prediction and metrics ([`evaluate`]),
//! k-fold cross-validation ([`tuning`]), and model serialization
//! ([`model`]).

pub mod dataset;
pub mod error;
pub mod estimator;
pub mod evaluate;
pub mod grid;
pub mod kernel;
pub mod model;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod tuning;

mod textio;

pub use dataset::FunctionalDataset;
pub use error::{Error, Result};
pub use estimator::{
    fit, fit_ws, fit_ws_observed, group_check, kkt_report, objective, precompute,
    group_lasso_lambda_max, smooth_gradient, solve_scalar_subproblem, update_b, update_b_from,
    update_r, CoefficientFit,
    GroupKkt, PenaltyConfig, SolverWorkspace, TraceLevel,
};
pub use evaluate::{
    discretized_excess_risk, eval_a, eval_beta, predict, rmise, rmse_mae, PredictionRequest,
};
pub use grid::SampleGrid;
pub use kernel::{spectral_power, sym_eig, KernelKind, KernelSpec, SymmetricSpectrum};
pub use model::FittedModel;
pub use simulate::{
    cosine_basis, load_oracle, oracle_from_string, oracle_to_string, save_oracle, simulate,
    OracleCurve, OracleModel, ScenarioKind, SimulationScenario,
};
pub use tuning::{
    cv_fold_score, cv_score, cv_select, kfold_split, log10_grid, preset_fof_lambda1,
    preset_mixed_lambda, score_table_csv, CvConfig, ScoreRow,
};
