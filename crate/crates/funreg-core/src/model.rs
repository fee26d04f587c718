//! Self-contained serialization of a fitted model: kernel kind, both sample
//! grids, the representer coefficients, the penalty configuration and the
//! convergence metadata, in a line-oriented text format with bit-exact reals.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::estimator::{CoefficientFit, PenaltyConfig, SolverWorkspace};
use crate::evaluate::{predict_raw, PredictionRequest};
use crate::grid::SampleGrid;
use crate::kernel::{KernelKind, KernelSpec};
use crate::textio::{expect_header, fmt_f64, join_f64, parse_f64, parse_f64_row, parse_usize};

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub kernel: KernelSpec,
    pub x_grid: SampleGrid,
    pub y_grid: SampleGrid,
    pub r: Array2<f64>,
    pub b: Array2<f64>,
    pub penalties: PenaltyConfig,
    pub converged: bool,
    pub iterations: usize,
    pub final_objective: f64,
}

impl FittedModel {
    pub fn from_fit(ws: &SolverWorkspace, fit: &CoefficientFit, cfg: &PenaltyConfig) -> Self {
        FittedModel {
            kernel: ws.kernel(),
            x_grid: ws.x_grid().clone(),
            y_grid: ws.y_grid().clone(),
            r: fit.r.clone(),
            b: fit.b.clone(),
            penalties: *cfg,
            converged: fit.converged,
            iterations: fit.iterations,
            final_objective: *fit.objective_trace.last().unwrap_or(&f64::NAN),
        }
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    /// Predictions for new subjects using the stored grids and kernel.
    pub fn predict(&self, req: &PredictionRequest) -> Result<Array2<f64>> {
        let k2 = self.kernel.gram(self.x_grid.points())?;
        predict_raw(
            self.kernel,
            &self.x_grid,
            &self.y_grid,
            &k2,
            &self.r,
            &self.b,
            req,
        )
    }

    pub fn to_string_repr(&self) -> String {
        let mut out = String::from("#funreg-model: v1\n");
        out.push_str(&format!("#kernel: {}\n", self.kernel.kind.name()));
        out.push_str("#x_grid: ");
        out.push_str(&join_f64(self.x_grid.points().iter().copied()));
        out.push('\n');
        out.push_str("#y_grid: ");
        out.push_str(&join_f64(self.y_grid.points().iter().copied()));
        out.push('\n');
        out.push_str(&format!("#p: {}\n", self.p()));
        out.push_str(&format!(
            "#lambda: {},{},{}\n",
            fmt_f64(self.penalties.lambda1),
            fmt_f64(self.penalties.lambda2),
            fmt_f64(self.penalties.lambda3)
        ));
        out.push_str(&format!("#epsilon: {}\n", fmt_f64(self.penalties.epsilon)));
        out.push_str(&format!("#l_max: {}\n", self.penalties.l_max));
        out.push_str(&format!("#converged: {}\n", self.converged));
        out.push_str(&format!("#iterations: {}\n", self.iterations));
        out.push_str(&format!("#objective: {}\n", fmt_f64(self.final_objective)));
        out.push_str("#R:\n");
        for row in self.r.rows() {
            out.push_str(&join_f64(row.iter().copied()));
            out.push('\n');
        }
        out.push_str("#B:\n");
        for row in self.b.rows() {
            out.push_str(&join_f64(row.iter().copied()));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_string_repr())?;
        Ok(())
    }

    pub fn from_string_repr(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut take = |key: &str| -> Result<(usize, String)> {
            lines
                .next()
                .map(|(i, l)| (i + 1, l.to_string()))
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    msg: format!("missing '{key}' section"),
                })
        };
        let (l, magic) = take("funreg-model")?;
        expect_header(&magic, "funreg-model", l)?;
        let (l, kernel_line) = take("kernel")?;
        let kernel_name = expect_header(&kernel_line, "kernel", l)?;
        let kind = KernelKind::from_name(kernel_name).ok_or(Error::Parse {
            line: l,
            msg: format!("unknown kernel '{kernel_name}'"),
        })?;
        let (l, xg) = take("x_grid")?;
        let x_points = parse_f64_row(expect_header(&xg, "x_grid", l)?, l)?;
        let x_grid = SampleGrid::new(x_points).map_err(|e| Error::Parse {
            line: l,
            msg: format!("invalid x grid: {e}"),
        })?;
        let (l, yg) = take("y_grid")?;
        let y_points = parse_f64_row(expect_header(&yg, "y_grid", l)?, l)?;
        let y_grid = SampleGrid::new(y_points).map_err(|e| Error::Parse {
            line: l,
            msg: format!("invalid y grid: {e}"),
        })?;
        let (l, p_line) = take("p")?;
        let p = parse_usize(expect_header(&p_line, "p", l)?, l)?;
        let (l, lam_line) = take("lambda")?;
        let lams = parse_f64_row(expect_header(&lam_line, "lambda", l)?, l)?;
        if lams.len() != 3 {
            return Err(Error::Parse {
                line: l,
                msg: format!("expected 3 penalty values, got {}", lams.len()),
            });
        }
        let (l, eps_line) = take("epsilon")?;
        let epsilon = parse_f64(expect_header(&eps_line, "epsilon", l)?, l)?;
        let (l, lmax_line) = take("l_max")?;
        let l_max = parse_usize(expect_header(&lmax_line, "l_max", l)?, l)?;
        let (l, conv_line) = take("converged")?;
        let converged = match expect_header(&conv_line, "converged", l)? {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Parse {
                    line: l,
                    msg: format!("expected true/false, got '{other}'"),
                })
            }
        };
        let (l, iter_line) = take("iterations")?;
        let iterations = parse_usize(expect_header(&iter_line, "iterations", l)?, l)?;
        let (l, obj_line) = take("objective")?;
        let final_objective = parse_f64(expect_header(&obj_line, "objective", l)?, l)?;

        let (n1, n2) = (x_grid.len(), y_grid.len());
        let (l, r_header) = take("R")?;
        expect_header(&r_header, "R", l)?;
        let mut r = Array2::zeros((n2, n1));
        for j in 0..n2 {
            let (l, row) = take("R row")?;
            let vals = parse_f64_row(&row, l)?;
            if vals.len() != n1 {
                return Err(Error::Parse {
                    line: l,
                    msg: format!("R row has {} entries, expected {n1}", vals.len()),
                });
            }
            for i in 0..n1 {
                r[[j, i]] = vals[i];
            }
        }
        let (l, b_header) = take("B")?;
        expect_header(&b_header, "B", l)?;
        let mut b = Array2::zeros((n2, p));
        for j in 0..n2 {
            let (l, row) = take("B row")?;
            let vals = parse_f64_row(&row, l)?;
            if vals.len() != p {
                return Err(Error::Parse {
                    line: l,
                    msg: format!("B row has {} entries, expected {p}", vals.len()),
                });
            }
            for c in 0..p {
                b[[j, c]] = vals[c];
            }
        }
        Ok(FittedModel {
            kernel: KernelSpec { kind },
            x_grid,
            y_grid,
            r,
            b,
            penalties: PenaltyConfig {
                lambda1: lams[0],
                lambda2: lams[1],
                lambda3: lams[2],
                epsilon,
                l_max,
            },
            converged,
            iterations,
            final_objective,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_string_repr(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::fit;
    use crate::evaluate::predict;
    use crate::simulate::{simulate, ScenarioKind, SimulationScenario};

    #[test]
    fn model_round_trip_is_bit_exact() {
        let sc = SimulationScenario {
            kind: ScenarioKind::Exponential,
            q: 3,
            kappa: 1.0,
            p: 2,
            seed: 8,
        };
        let (d, _) = simulate(&sc, 4, 5, 15).unwrap();
        let cfg = PenaltyConfig::new(1e-4, 1e-5, 1e-2);
        let ws = SolverWorkspace::new(&d, KernelSpec::bernoulli_w22()).unwrap();
        let fitted = crate::estimator::fit_ws(&ws, &cfg).unwrap();
        let model = FittedModel::from_fit(&ws, &fitted, &cfg);
        let text = model.to_string_repr();
        let back = FittedModel::from_string_repr(&text).unwrap();
        assert_eq!(model.r, back.r);
        assert_eq!(model.b, back.b);
        assert_eq!(model.converged, back.converged);
        assert_eq!(model.iterations, back.iterations);
        assert_eq!(text, back.to_string_repr());
    }

    #[test]
    fn model_parse_errors_name_the_line() {
        let bad_kernel = "#funreg-model: v1\n#kernel: unknown_kernel\n";
        match FittedModel::from_string_repr(bad_kernel) {
            Err(crate::error::Error::Parse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("unknown_kernel"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(FittedModel::from_string_repr("").is_err());
    }

    #[test]
    fn model_predict_matches_workspace_predict() {
        let sc = SimulationScenario {
            kind: ScenarioKind::Random,
            q: 3,
            kappa: 1.0,
            p: 1,
            seed: 9,
        };
        let (d, _) = simulate(&sc, 5, 4, 10).unwrap();
        let cfg = PenaltyConfig::new(1e-3, 1e-6, 1e-3);
        let ws = SolverWorkspace::new(&d, KernelSpec::bernoulli_w22()).unwrap();
        let fitted = fit(&d, KernelSpec::bernoulli_w22(), &cfg).unwrap();
        let model = FittedModel::from_fit(&ws, &fitted, &cfg);
        let req = PredictionRequest {
            x_new: d.x().clone(),
            z_new: d.z().clone(),
            target_points: vec![0.12, 0.48, 0.9],
        };
        let a = predict(&ws, &fitted, &req).unwrap();
        let b = model.predict(&req).unwrap();
        assert_eq!(a, b);
    }
}
