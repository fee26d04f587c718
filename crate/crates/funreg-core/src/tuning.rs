//! k-fold cross-validation over penalty grids.
//!
//! Folds are formed by a seeded shuffle followed by contiguous blocks. The
//! CV criterion is held-out discretized squared prediction error against the
//! observed response: the mean over held-out subjects of
//! `(1/n2) sum_j w_r(j) (Y_t(r_j) - Yhat_t(r_j))^2`.


use crate::dataset::FunctionalDataset;
use crate::error::{Error, Result};
use crate::estimator::{fit_ws, PenaltyConfig, SolverWorkspace};
use crate::evaluate::{predict, PredictionRequest};
use crate::kernel::KernelSpec;
use crate::rng::PortableRng;
use crate::textio::fmt_f64;

#[derive(Debug, Clone)]
pub struct CvConfig {
    pub folds: usize,
    pub lambda1_grid: Vec<f64>,
    pub lambda2_grid: Vec<f64>,
    /// May be a singleton (typically `[0]`) when `p = 0`.
    pub lambda3_grid: Vec<f64>,
    pub seed: u64,
    pub epsilon: f64,
    pub l_max: usize,
}

impl CvConfig {
    pub fn new(
        folds: usize,
        lambda1_grid: Vec<f64>,
        lambda2_grid: Vec<f64>,
        lambda3_grid: Vec<f64>,
        seed: u64,
    ) -> Self {
        CvConfig {
            folds,
            lambda1_grid,
            lambda2_grid,
            lambda3_grid,
            seed,
            epsilon: PenaltyConfig::DEFAULT_EPSILON,
            l_max: PenaltyConfig::DEFAULT_L_MAX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Param(format!(
                "cross-validation needs at least 2 folds, got {}",
                self.folds
            )));
        }
        for (name, grid, allow_zero) in [
            ("lambda1", &self.lambda1_grid, false),
            ("lambda2", &self.lambda2_grid, true),
            ("lambda3", &self.lambda3_grid, true),
        ] {
            if grid.is_empty() {
                return Err(Error::Param(format!("{name} grid is empty")));
            }
            for &v in grid {
                if !v.is_finite() || v < 0.0 || (!allow_zero && v == 0.0) {
                    return Err(Error::Param(format!("invalid {name} grid value {v}")));
                }
            }
        }
        Ok(())
    }
}

/// `10^e` for `e` from `start` to `end` inclusive in steps of `step`.
pub fn log10_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let count = ((end - start) / step).round() as usize + 1;
    (0..count)
        .map(|k| 10f64.powf(start + k as f64 * step))
        .collect()
}

/// The function-on-function study grid `10^(-15:0.5:2)`.
pub fn preset_fof_lambda1() -> Vec<f64> {
    log10_grid(-15.0, 2.0, 0.5)
}

/// The mixed-predictor study grid `10^(-18:1:-1)`, used per penalty.
pub fn preset_mixed_lambda() -> Vec<f64> {
    log10_grid(-18.0, -1.0, 1.0)
}

/// Partition of `0..t` into `folds` disjoint blocks whose sizes differ by at
/// most one, deterministic in the seed. Indices inside each fold are sorted.
pub fn kfold_split(t: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Param(format!("need at least 2 folds, got {folds}")));
    }
    if folds > t {
        return Err(Error::Param(format!(
            "cannot split {t} subjects into {folds} folds"
        )));
    }
    let mut order: Vec<usize> = (0..t).collect();
    let mut rng = PortableRng::new(seed);
    rng.shuffle(&mut order);
    let base = t / folds;
    let extra = t % folds;
    let mut out = Vec::with_capacity(folds);
    let mut cursor = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        let mut fold: Vec<usize> = order[cursor..cursor + size].to_vec();
        fold.sort_unstable();
        out.push(fold);
        cursor += size;
    }
    Ok(out)
}

fn holdout_score(
    train_ws: &SolverWorkspace,
    dataset: &FunctionalDataset,
    holdout: &[usize],
    cfg: &PenaltyConfig,
) -> Result<f64> {
    let fitted = fit_ws(train_ws, cfg)?;
    let held = dataset.subset(holdout)?;
    let req = PredictionRequest {
        x_new: held.x().clone(),
        z_new: held.z().clone(),
        target_points: dataset.y_grid().points().to_vec(),
    };
    let predicted = predict(train_ws, &fitted, &req)?;
    let w_r = dataset.y_grid().weights();
    let n2 = dataset.n2() as f64;
    let mut total = 0.0;
    for (col, _) in holdout.iter().enumerate() {
        let mut acc = 0.0;
        for j in 0..dataset.n2() {
            let d = held.y()[[j, col]] - predicted[[j, col]];
            acc += w_r[j] * d * d;
        }
        total += acc / n2;
    }
    Ok(total / holdout.len() as f64)
}

/// Held-out score of one fold: the complement of `holdout` trains the model.
pub fn cv_fold_score(
    dataset: &FunctionalDataset,
    kernel: KernelSpec,
    cfg: &PenaltyConfig,
    holdout: &[usize],
) -> Result<f64> {
    let mask: Vec<bool> = {
        let mut m = vec![false; dataset.subjects()];
        for &t in holdout {
            if t >= dataset.subjects() {
                return Err(Error::Index(format!(
                    "holdout subject {t} out of range 0..{}",
                    dataset.subjects()
                )));
            }
            m[t] = true;
        }
        m
    };
    let train_idx: Vec<usize> = (0..dataset.subjects()).filter(|&t| !mask[t]).collect();
    if train_idx.is_empty() {
        return Err(Error::Param("holdout covers the whole dataset".into()));
    }
    let train = dataset.subset(&train_idx)?;
    let ws = SolverWorkspace::new(&train, kernel)?;
    holdout_score(&ws, dataset, holdout, cfg)
}

/// Mean fold score of a penalty setting over a full partition.
pub fn cv_score(
    dataset: &FunctionalDataset,
    kernel: KernelSpec,
    cfg: &PenaltyConfig,
    split: &[Vec<usize>],
) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::Param("empty cross-validation split".into()));
    }
    let mut total = 0.0;
    for (k, fold) in split.iter().enumerate() {
        let score = cv_fold_score(dataset, kernel, cfg, fold)
            .map_err(|e| Error::Numeric(format!("fold {k} failed: {e}")))?;
        total += score;
    }
    Ok(total / split.len() as f64)
}

/// One grid point of the score table.
#[derive(Debug, Clone)]
pub struct ScoreRow {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
}

/// Exhaustive grid search. Returns the winning penalties (ties broken toward
/// larger `lambda1`, then `lambda2`, then `lambda3`) and the full score
/// table in grid order.
pub fn cv_select(
    dataset: &FunctionalDataset,
    kernel: KernelSpec,
    cv: &CvConfig,
) -> Result<(PenaltyConfig, Vec<ScoreRow>)> {
    cv.validate()?;
    let split = kfold_split(dataset.subjects(), cv.folds, cv.seed)?;

    // One workspace per fold, shared across all grid points.
    let mut fold_ws = Vec::with_capacity(split.len());
    for fold in &split {
        let mask: Vec<bool> = {
            let mut m = vec![false; dataset.subjects()];
            for &t in fold {
                m[t] = true;
            }
            m
        };
        let train_idx: Vec<usize> = (0..dataset.subjects()).filter(|&t| !mask[t]).collect();
        let train = dataset.subset(&train_idx)?;
        fold_ws.push(SolverWorkspace::new(&train, kernel)?);
    }

    let mut rows: Vec<ScoreRow> = Vec::new();
    let mut best: Option<(f64, PenaltyConfig)> = None;
    for &l1 in &cv.lambda1_grid {
        for &l2 in &cv.lambda2_grid {
            for &l3 in &cv.lambda3_grid {
                let cfg = PenaltyConfig::new(l1, l2, l3).with_tolerance(cv.epsilon, cv.l_max);
                let mut fold_scores = Vec::with_capacity(split.len());
                for (k, fold) in split.iter().enumerate() {
                    let score =
                        holdout_score(&fold_ws[k], dataset, fold, &cfg).map_err(|e| {
                            Error::Numeric(format!(
                                "fold {k} failed at lambda = ({l1}, {l2}, {l3}): {e}"
                            ))
                        })?;
                    fold_scores.push(score);
                }
                let mean_score = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
                rows.push(ScoreRow {
                    lambda1: l1,
                    lambda2: l2,
                    lambda3: l3,
                    fold_scores,
                    mean_score,
                });
                let candidate = (mean_score, cfg);
                best = Some(match best {
                    None => candidate,
                    Some((best_score, best_cfg)) => {
                        let wins = mean_score < best_score
                            || (mean_score == best_score
                                && (l1, l2, l3)
                                    > (best_cfg.lambda1, best_cfg.lambda2, best_cfg.lambda3));
                        if wins {
                            candidate
                        } else {
                            (best_score, best_cfg)
                        }
                    }
                });
            }
        }
    }
    let (_, cfg) = best.ok_or_else(|| Error::Param("empty penalty grid".into()))?;
    Ok((cfg, rows))
}

/// Score table as CSV: `lambda1,lambda2,lambda3,fold,score,mean_score`.
pub fn score_table_csv(rows: &[ScoreRow]) -> String {
    let mut out = String::from("lambda1,lambda2,lambda3,fold,score,mean_score\n");
    for row in rows {
        for (k, s) in row.fold_scores.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{k},{},{}\n",
                fmt_f64(row.lambda1),
                fmt_f64(row.lambda2),
                fmt_f64(row.lambda3),
                fmt_f64(*s),
                fmt_f64(row.mean_score)
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SampleGrid;
    use ndarray::Array2;
    use crate::simulate::{simulate, ScenarioKind, SimulationScenario};

    fn kernel() -> KernelSpec {
        KernelSpec::bernoulli_w22()
    }

    #[test]
    fn kfold_even_sizes() {
        let split = kfold_split(10, 5, 1).unwrap();
        assert_eq!(split.len(), 5);
        assert!(split.iter().all(|f| f.len() == 2));
        let mut all: Vec<usize> = split.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn kfold_uneven_sizes() {
        let split = kfold_split(7, 5, 3).unwrap();
        let mut sizes: Vec<usize> = split.iter().map(|f| f.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![1, 1, 1, 2, 2]);
        let mut all: Vec<usize> = split.concat();
        all.sort_unstable();
        assert_eq!(all, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn kfold_is_deterministic_and_rejects_bad_params() {
        assert_eq!(kfold_split(9, 4, 7).unwrap(), kfold_split(9, 4, 7).unwrap());
        assert!(kfold_split(3, 5, 0).is_err());
        assert!(kfold_split(10, 1, 0).is_err());
    }

    #[test]
    fn cv_config_validation() {
        let ok = CvConfig::new(5, vec![1e-3], vec![0.0], vec![0.0], 1);
        assert!(ok.validate().is_ok());
        assert!(CvConfig::new(1, vec![1e-3], vec![0.0], vec![0.0], 1)
            .validate()
            .is_err());
        assert!(CvConfig::new(5, vec![], vec![0.0], vec![0.0], 1)
            .validate()
            .is_err());
        assert!(CvConfig::new(5, vec![0.0], vec![0.0], vec![0.0], 1)
            .validate()
            .is_err());
        assert!(CvConfig::new(5, vec![1e-3], vec![-1.0], vec![0.0], 1)
            .validate()
            .is_err());
    }

    #[test]
    fn preset_grids_have_documented_sizes() {
        assert_eq!(preset_fof_lambda1().len(), 35);
        assert_eq!(preset_mixed_lambda().len(), 18);
        assert!((preset_fof_lambda1()[0] - 1e-15).abs() < 1e-25);
        assert!((preset_fof_lambda1()[34] - 1e2).abs() < 1e-10);
    }

    fn small_study(seed: u64) -> FunctionalDataset {
        let sc = SimulationScenario {
            kind: ScenarioKind::Exponential,
            q: 4,
            kappa: 1.0,
            p: 0,
            seed,
        };
        simulate(&sc, 5, 5, 20).unwrap().0
    }

    #[test]
    fn huge_ridge_score_approaches_heldout_energy() {
        let d = small_study(2);
        let split = kfold_split(d.subjects(), 4, 9).unwrap();
        let cfg = PenaltyConfig::new(1e12, 0.0, 0.0);
        let score = cv_score(&d, kernel(), &cfg, &split).unwrap();
        // Predictions shrink to ~0, so each fold's score tends to the
        // weighted mean energy of its held-out responses.
        let w_r = d.y_grid().weights();
        let mut energy = 0.0;
        for fold in &split {
            let mut fold_energy = 0.0;
            for &t in fold {
                let mut acc = 0.0;
                for (j, w) in w_r.iter().enumerate() {
                    acc += w * d.y()[[j, t]] * d.y()[[j, t]];
                }
                fold_energy += acc / d.n2() as f64;
            }
            energy += fold_energy / fold.len() as f64;
        }
        energy /= split.len() as f64;
        assert!(
            (score - energy).abs() <= 1e-6 * energy,
            "score {score} vs energy {energy}"
        );
    }

    #[test]
    fn noiseless_representable_signal_scores_near_zero() {
        // Construct Y directly in the representer span: Y = K1 C K2 W_S X / n1,
        // no noise, p = 0; a tiny ridge then predicts nearly perfectly.
        let n = 4;
        let t = 12;
        let x_grid = SampleGrid::equispaced(n).unwrap();
        let y_grid = SampleGrid::equispaced(n).unwrap();
        let mut rng = crate::rng::PortableRng::new(77);
        let x = Array2::from_shape_fn((n, t), |_| rng.uniform_sym(1.0));
        let k = kernel();
        let k1 = k.gram(y_grid.points()).unwrap();
        let k2 = k.gram(x_grid.points()).unwrap();
        let c = Array2::from_shape_fn((n, n), |_| rng.uniform_sym(1.0));
        let y = k1.dot(&c).dot(&k2).dot(&x) / n as f64;
        let d = FunctionalDataset::new(x_grid, y_grid, x, y, Array2::zeros((0, t))).unwrap();
        let split = kfold_split(t, 4, 5).unwrap();
        let cfg = PenaltyConfig::new(1e-10, 0.0, 0.0);
        let score = cv_score(&d, kernel(), &cfg, &split).unwrap();
        assert!(score < 1e-6, "score {score}");
    }

    #[test]
    fn duplicated_fold_scores_are_identical() {
        // A dataset whose subjects repeat across folds gives the same score
        // for every fold.
        let base = small_study(3);
        let idx: Vec<usize> = (0..4).chain(0..4).chain(0..4).collect();
        let d = base.subset(&idx).unwrap();
        let folds: Vec<Vec<usize>> = vec![
            (0..4).collect(),
            (4..8).collect(),
            (8..12).collect(),
        ];
        let cfg = PenaltyConfig::new(1e-3, 0.0, 0.0);
        let s0 = cv_fold_score(&d, kernel(), &cfg, &folds[0]).unwrap();
        let s1 = cv_fold_score(&d, kernel(), &cfg, &folds[1]).unwrap();
        let s2 = cv_fold_score(&d, kernel(), &cfg, &folds[2]).unwrap();
        assert!((s0 - s1).abs() < 1e-12);
        assert!((s1 - s2).abs() < 1e-12);
    }

    #[test]
    fn singleton_grid_returns_that_point() {
        let d = small_study(4);
        let cv = CvConfig::new(4, vec![1e-3], vec![0.0], vec![0.0], 11);
        let (cfg, rows) = cv_select(&d, kernel(), &cv).unwrap();
        assert_eq!(cfg.lambda1, 1e-3);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].fold_scores.len(), 4);
        let mean = rows[0].fold_scores.iter().sum::<f64>() / 4.0;
        assert!((rows[0].mean_score - mean).abs() < 1e-15);
    }

    #[test]
    fn duplicated_grid_point_breaks_tie_deterministically() {
        let d = small_study(5);
        let cv = CvConfig::new(4, vec![1e-3, 1e-3], vec![0.0], vec![0.0], 2);
        let (cfg, rows) = cv_select(&d, kernel(), &cv).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mean_score, rows[1].mean_score);
        assert_eq!(cfg.lambda1, 1e-3);
    }

    #[test]
    fn cv_select_is_deterministic() {
        let d = small_study(6);
        let cv = CvConfig::new(5, vec![1e-6, 1e-3, 1.0], vec![0.0], vec![0.0], 21);
        let (cfg_a, rows_a) = cv_select(&d, kernel(), &cv).unwrap();
        let (cfg_b, rows_b) = cv_select(&d, kernel(), &cv).unwrap();
        assert_eq!(cfg_a.lambda1, cfg_b.lambda1);
        for (a, b) in rows_a.iter().zip(rows_b.iter()) {
            assert_eq!(a.mean_score.to_bits(), b.mean_score.to_bits());
        }
    }

    #[test]
    fn score_table_has_full_grid_cardinality() {
        let d = small_study(7);
        let cv = CvConfig::new(4, vec![1e-4, 1e-2], vec![0.0, 1e-5], vec![0.0], 3);
        let (_, rows) = cv_select(&d, kernel(), &cv).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert_eq!(row.fold_scores.len(), 4);
            let mean = row.fold_scores.iter().sum::<f64>() / 4.0;
            assert!((row.mean_score - mean).abs() <= 1e-15 * mean.max(1.0));
        }
        let csv = score_table_csv(&rows);
        assert_eq!(csv.lines().count(), 1 + 4 * 4);
        assert!(csv.starts_with("lambda1,lambda2,lambda3,fold,score,mean_score"));
    }
}
