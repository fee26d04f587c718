//! Prediction from a fitted model and the study metrics: relative RMISE
//! against an oracle, windowed RMSE/MAE, and the discretized excess risk.

use ndarray::Array2;

use crate::dataset::FunctionalDataset;
use crate::error::{Error, Result};
use crate::estimator::{CoefficientFit, SolverWorkspace};
use crate::grid::SampleGrid;
use crate::kernel::KernelSpec;
use crate::quad::simpson_unit;
use crate::simulate::OracleModel;

/// New subjects to predict: covariate curves sampled on the training x grid,
/// scalar covariates, and the response points to evaluate at.
#[derive(Debug, Clone)]
pub struct PredictionRequest {
    /// n1 x m curve values, one column per subject.
    pub x_new: Array2<f64>,
    /// p x m scalar covariates.
    pub z_new: Array2<f64>,
    /// Evaluation points in `[0, 1]`; may differ from the training y grid.
    pub target_points: Vec<f64>,
}

/// `A_hat(r, s) = k1(r)^T R k2(s)`.
pub fn eval_a(ws: &SolverWorkspace, fit: &CoefficientFit, r: f64, s: f64) -> Result<f64> {
    let kernel = ws.kernel();
    let mut acc = 0.0;
    for (j, &rj) in ws.y_grid().points().iter().enumerate() {
        let k1r = kernel.eval(r, rj)?;
        if k1r == 0.0 {
            continue;
        }
        for (i, &si) in ws.x_grid().points().iter().enumerate() {
            acc += k1r * fit.r[[j, i]] * kernel.eval(s, si)?;
        }
    }
    Ok(acc)
}

/// `beta_hat_l(r) = k1(r)^T b_l` for covariate column `l` (0-based).
pub fn eval_beta(ws: &SolverWorkspace, fit: &CoefficientFit, l: usize, r: f64) -> Result<f64> {
    if l >= fit.b.ncols() {
        return Err(Error::Index(format!(
            "covariate {l} out of range for p = {}",
            fit.b.ncols()
        )));
    }
    let kernel = ws.kernel();
    let mut acc = 0.0;
    for (j, &rj) in ws.y_grid().points().iter().enumerate() {
        acc += kernel.eval(r, rj)? * fit.b[[j, l]];
    }
    Ok(acc)
}

/// Shared prediction core: `(1/n1) sum_i w_s(i) A_hat(rho, s_i) X(s_i) +
/// <beta_hat(rho), Z>` for every target point and subject.
pub(crate) fn predict_raw(
    kernel: KernelSpec,
    x_grid: &SampleGrid,
    y_grid: &SampleGrid,
    k2: &Array2<f64>,
    r_coef: &Array2<f64>,
    b_coef: &Array2<f64>,
    req: &PredictionRequest,
) -> Result<Array2<f64>> {
    let n1 = x_grid.len();
    let n2 = y_grid.len();
    let p = b_coef.ncols();
    if req.x_new.nrows() != n1 {
        return Err(Error::Shape(format!(
            "X_new has {} rows but the training x grid has {n1} points",
            req.x_new.nrows()
        )));
    }
    let m = req.x_new.ncols();
    if req.z_new.nrows() != p {
        return Err(Error::Shape(format!(
            "Z_new has {} rows but the model has p = {p}",
            req.z_new.nrows()
        )));
    }
    if p > 0 && req.z_new.ncols() != m {
        return Err(Error::Shape(format!(
            "Z_new has {} subjects but X_new has {m}",
            req.z_new.ncols()
        )));
    }
    let n_targets = req.target_points.len();
    let mut k_ty = Array2::zeros((n_targets, n2));
    for (tau, &rho) in req.target_points.iter().enumerate() {
        for (j, &rj) in y_grid.points().iter().enumerate() {
            k_ty[[tau, j]] = kernel.eval(rho, rj)?;
        }
    }
    // Quadrature against the training weights: (1/n1) A W_S X_new.
    let mut x_weighted = req.x_new.clone();
    for (i, mut row) in x_weighted.rows_mut().into_iter().enumerate() {
        row.mapv_inplace(|v| v * x_grid.weights()[i]);
    }
    let a_grid = k_ty.dot(r_coef).dot(k2);
    let mut out = a_grid.dot(&x_weighted) / n1 as f64;
    if p > 0 {
        out = out + k_ty.dot(b_coef).dot(&req.z_new);
    }
    Ok(out)
}

/// Predictions as a `target_points.len() x subjects` matrix.
pub fn predict(
    ws: &SolverWorkspace,
    fit: &CoefficientFit,
    req: &PredictionRequest,
) -> Result<Array2<f64>> {
    predict_raw(
        ws.kernel(),
        ws.x_grid(),
        ws.y_grid(),
        ws.k2(),
        &fit.r,
        &fit.b,
        req,
    )
}

/// Relative root mean integrated squared error of predictions against oracle
/// curves, both sampled on `integration_grid`:
/// `sqrt( sum_t int (oracle - pred)^2 / sum_t int oracle^2 )` with integrals
/// approximated by the grid's weighted Riemann sum.
pub fn rmise(
    predictions: &Array2<f64>,
    oracles: &Array2<f64>,
    integration_grid: &SampleGrid,
) -> Result<f64> {
    if predictions.dim() != oracles.dim() {
        return Err(Error::Shape(format!(
            "prediction block {:?} does not match oracle block {:?}",
            predictions.dim(),
            oracles.dim()
        )));
    }
    if predictions.nrows() != integration_grid.len() {
        return Err(Error::Shape(format!(
            "blocks have {} rows but the integration grid has {} points",
            predictions.nrows(),
            integration_grid.len()
        )));
    }
    let w = integration_grid.weights();
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 0..predictions.ncols() {
        for j in 0..predictions.nrows() {
            let d = oracles[[j, t]] - predictions[[j, t]];
            num += w[j] * d * d;
            den += w[j] * oracles[[j, t]] * oracles[[j, t]];
        }
    }
    if den == 0.0 {
        return Err(Error::Metric(
            "RMISE is undefined: the oracle signal is identically zero on the grid".into(),
        ));
    }
    Ok((num / den).sqrt())
}

/// Root mean squared error and mean absolute error over a window of points.
pub fn rmse_mae(predicted: &[f64], observed: &[f64]) -> Result<(f64, f64)> {
    if predicted.len() != observed.len() {
        return Err(Error::Shape(format!(
            "windows disagree: {} predicted vs {} observed",
            predicted.len(),
            observed.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Param("RMSE/MAE need a nonempty window".into()));
    }
    let n = predicted.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    for (p, o) in predicted.iter().zip(observed) {
        let d = p - o;
        sq += d * d;
        abs += d.abs();
    }
    Ok(((sq / n).sqrt(), abs / n))
}

const EXCESS_RISK_SIMPSON_INTERVALS: usize = 2048;

/// Discretized excess risk of a fit on an independent test set:
/// the empirical mean over test subjects of
/// `(1/n2) sum_j [ (Y - Yhat)^2 - (Y - Ytrue)^2 ]`,
/// where `Ytrue` uses the exact signal of the oracle (its covariate integral
/// evaluated by dense Simpson quadrature). Monte-Carlo noise can make the
/// value slightly negative; it is reported as computed.
pub fn discretized_excess_risk(
    ws: &SolverWorkspace,
    fit: &CoefficientFit,
    test: &FunctionalDataset,
    oracle: &OracleModel,
    subject_offset: usize,
) -> Result<f64> {
    if test.x_grid().points() != ws.x_grid().points()
        || test.y_grid().points() != ws.y_grid().points()
    {
        return Err(Error::Grid(
            "the test dataset must share the training sample grids".into(),
        ));
    }
    if subject_offset + test.subjects() > oracle.subjects() {
        return Err(Error::Index(format!(
            "test subjects {}..{} exceed the oracle's {} stored subjects",
            subject_offset,
            subject_offset + test.subjects(),
            oracle.subjects()
        )));
    }
    let req = PredictionRequest {
        x_new: test.x().clone(),
        z_new: test.z().clone(),
        target_points: ws.y_grid().points().to_vec(),
    };
    let predicted = predict(ws, fit, &req)?;
    let n2 = ws.y_grid().len();
    let m = test.subjects();
    let mut total = 0.0;
    for t in 0..m {
        let coeffs = oracle.x_coeffs().column(subject_offset + t);
        let x_curve = |s: f64| -> f64 {
            coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * crate::simulate::cosine_basis(i + 1, s))
                .sum()
        };
        let mut subject = 0.0;
        for (j, &rj) in ws.y_grid().points().iter().enumerate() {
            let integral = simpson_unit(
                |s| oracle.eval_a_star(rj, s) * x_curve(s),
                EXCESS_RISK_SIMPSON_INTERVALS,
            );
            let mut truth = integral;
            for l in 0..test.p() {
                truth += oracle.eval_beta_star(l, rj)? * test.z()[[l, t]];
            }
            let y = test.y()[[j, t]];
            let d_fit = y - predicted[[j, t]];
            let d_true = y - truth;
            subject += d_fit * d_fit - d_true * d_true;
        }
        total += subject / n2 as f64;
    }
    Ok(total / m as f64)
}
