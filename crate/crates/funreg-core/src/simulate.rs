//! Synthetic data generation for the two simulation scenarios, together with
//! the noiseless oracle each scenario implies.
//!
//! Curves are built in the cosine basis `u_1 = 1`, `u_i(s) = sqrt(2) cos((i-1) pi s)`:
//!
//! * `X_t = sum_i x_ti u_i` with `x_ti ~ Unif[-1/i, 1/i]`,
//! * noise `eps_t = sum_i e_ti u_i` with `e_ti ~ Unif[-0.2/i, 0.2/i]`,
//! * `Z_tj ~ Unif[-1/sqrt(3), 1/sqrt(3)]`.
//!
//! Scenario `Exponential` uses `A*(r,s) = kappa sqrt(3) e^{-(r+s)}` and
//! `beta*_1(r) = kappa sqrt(3) e^{-r}`; scenario `Random` draws a coefficient
//! matrix in the cosine basis rescaled to unit spectral norm and a unit-norm
//! coefficient vector. All response integrals are evaluated exactly in the
//! basis, so the oracle signal carries no quadrature error.
//!
//! The random stream order is fixed (x, then e, then Z, then the Random
//! scenario's matrix and vector) so datasets are reproducible across
//! platforms from the seed alone.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};

use crate::dataset::FunctionalDataset;
use crate::error::{Error, Result};
use crate::grid::SampleGrid;
use crate::kernel::sym_eig;
use crate::rng::PortableRng;
use crate::textio::{expect_header, fmt_f64, join_f64, parse_f64_row, parse_usize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Scenario A of the numerical study.
    Exponential,
    /// Scenario B: random coefficients in the cosine basis.
    Random,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Exponential => "exponential",
            ScenarioKind::Random => "random",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "exponential" | "A" | "a" => Some(ScenarioKind::Exponential),
            "random" | "B" | "b" => Some(ScenarioKind::Random),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimulationScenario {
    pub kind: ScenarioKind,
    /// Basis dimension of the covariate/noise subspace.
    pub q: usize,
    /// Signal scale.
    pub kappa: f64,
    /// Number of scalar covariates.
    pub p: usize,
    pub seed: u64,
}

impl SimulationScenario {
    fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::Param("basis dimension q must be at least 1".into()));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::Param(format!("kappa must be positive, got {}", self.kappa)));
        }
        Ok(())
    }
}

/// `u_i(s)`: 1 for `i = 1`, `sqrt(2) cos((i-1) pi s)` otherwise. `i` is
/// 1-based; calling with `i = 0` is a programming error.
pub fn cosine_basis(i: usize, s: f64) -> f64 {
    assert!(i >= 1, "cosine basis index is 1-based");
    if i == 1 {
        1.0
    } else {
        std::f64::consts::SQRT_2 * ((i - 1) as f64 * std::f64::consts::PI * s).cos()
    }
}

fn basis_matrix(q: usize, points: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((q, points.len()), |(k, i)| cosine_basis(k + 1, points[i]))
}

/// `int_0^1 e^{-s} u_i(s) ds`, closed form.
fn exp_cosine_integral(i: usize) -> f64 {
    let inv_e = (-1.0f64).exp();
    if i == 1 {
        1.0 - inv_e
    } else {
        let m = (i - 1) as f64;
        let sign = if (i - 1) % 2 == 0 { 1.0 } else { -1.0 };
        std::f64::consts::SQRT_2 * (1.0 - sign * inv_e)
            / (1.0 + m * m * std::f64::consts::PI * std::f64::consts::PI)
    }
}

#[derive(Debug, Clone)]
enum CoefficientTruth {
    Exponential {
        kappa: f64,
    },
    Random {
        kappa: f64,
        /// q x q coefficient matrix with unit spectral norm.
        lambda: Array2<f64>,
        /// Unit-norm coefficient vector of `beta*_1`.
        b: Array1<f64>,
    },
}

/// The true signal of a simulation: the coefficient functions in evaluable
/// form plus the basis coefficients of every simulated covariate curve, which
/// make the response integrals computable exactly.
#[derive(Debug, Clone)]
pub struct OracleModel {
    truth: CoefficientTruth,
    q: usize,
    p: usize,
    /// q x T basis coefficients of the simulated `X_t`, in subject order.
    x_coeffs: Array2<f64>,
}

/// A noiseless response curve, evaluable at arbitrary `r` in `[0, 1]`.
#[derive(Debug, Clone)]
pub enum OracleCurve {
    /// `amplitude * e^{-r}`.
    ExpDecay { amplitude: f64 },
    /// `sum_i coeffs[i] u_{i+1}(r)`.
    CosineSeries { coeffs: Array1<f64> },
}

impl OracleCurve {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            OracleCurve::ExpDecay { amplitude } => amplitude * (-r).exp(),
            OracleCurve::CosineSeries { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * cosine_basis(k + 1, r))
                .sum(),
        }
    }
}

impl OracleModel {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn kind(&self) -> ScenarioKind {
        match self.truth {
            CoefficientTruth::Exponential { .. } => ScenarioKind::Exponential,
            CoefficientTruth::Random { .. } => ScenarioKind::Random,
        }
    }

    pub fn kappa(&self) -> f64 {
        match &self.truth {
            CoefficientTruth::Exponential { kappa } => *kappa,
            CoefficientTruth::Random { kappa, .. } => *kappa,
        }
    }

    /// Basis coefficients of subject `t`'s covariate curve.
    pub fn x_coeffs(&self) -> &Array2<f64> {
        &self.x_coeffs
    }

    pub fn subjects(&self) -> usize {
        self.x_coeffs.ncols()
    }

    /// `A*(r, s)`.
    pub fn eval_a_star(&self, r: f64, s: f64) -> f64 {
        match &self.truth {
            CoefficientTruth::Exponential { kappa } => kappa * 3.0f64.sqrt() * (-(r + s)).exp(),
            CoefficientTruth::Random { kappa, lambda, .. } => {
                let mut acc = 0.0;
                for i in 0..self.q {
                    let ui = cosine_basis(i + 1, r);
                    for j in 0..self.q {
                        acc += lambda[[i, j]] * ui * cosine_basis(j + 1, s);
                    }
                }
                kappa * acc
            }
        }
    }

    /// `beta*_l(r)` for covariate column `l` (0-based). Identically zero for
    /// every covariate except the first.
    pub fn eval_beta_star(&self, l: usize, r: f64) -> Result<f64> {
        if l >= self.p {
            return Err(Error::Index(format!(
                "covariate {l} out of range for p = {}",
                self.p
            )));
        }
        if l > 0 {
            return Ok(0.0);
        }
        Ok(match &self.truth {
            CoefficientTruth::Exponential { kappa } => kappa * 3.0f64.sqrt() * (-r).exp(),
            CoefficientTruth::Random { kappa, b, .. } => {
                kappa
                    * b.iter()
                        .enumerate()
                        .map(|(k, c)| c * cosine_basis(k + 1, r))
                        .sum::<f64>()
            }
        })
    }

    /// Noiseless response for a curve with basis coefficients `x_coef` and
    /// scalar covariates `z`: `int A*(., s) X(s) ds + beta*_1 z_1`, evaluated
    /// exactly in the basis.
    pub fn signal(&self, x_coef: ArrayView1<f64>, z: ArrayView1<f64>) -> Result<OracleCurve> {
        if x_coef.len() != self.q {
            return Err(Error::Shape(format!(
                "expected {} basis coefficients, got {}",
                self.q,
                x_coef.len()
            )));
        }
        if z.len() != self.p {
            return Err(Error::Shape(format!(
                "expected {} scalar covariates, got {}",
                self.p,
                z.len()
            )));
        }
        let z1 = if self.p > 0 { z[0] } else { 0.0 };
        Ok(match &self.truth {
            CoefficientTruth::Exponential { kappa } => {
                let proj: f64 = (0..self.q)
                    .map(|i| x_coef[i] * exp_cosine_integral(i + 1))
                    .sum();
                OracleCurve::ExpDecay {
                    amplitude: kappa * 3.0f64.sqrt() * (proj + z1),
                }
            }
            CoefficientTruth::Random { kappa, lambda, b } => {
                let mut coeffs = lambda.dot(&x_coef);
                if self.p > 0 {
                    coeffs += &(b * z1);
                }
                OracleCurve::CosineSeries {
                    coeffs: coeffs * *kappa,
                }
            }
        })
    }

    /// Noiseless response of a stored subject.
    pub fn signal_for_subject(&self, t: usize, z: ArrayView1<f64>) -> Result<OracleCurve> {
        if t >= self.subjects() {
            return Err(Error::Index(format!(
                "subject {t} out of range 0..{}",
                self.subjects()
            )));
        }
        self.signal(self.x_coeffs.column(t), z)
    }

    /// Signal values at `points` for a block of stored subjects, as a
    /// `points.len() x subjects` matrix. `z` must hold the same subjects in
    /// the same order.
    pub fn signal_matrix(
        &self,
        first_subject: usize,
        z: &Array2<f64>,
        points: &[f64],
    ) -> Result<Array2<f64>> {
        let m = z.ncols();
        let mut out = Array2::zeros((points.len(), m));
        for t in 0..m {
            let curve = self.signal_for_subject(first_subject + t, z.column(t))?;
            for (j, &r) in points.iter().enumerate() {
                out[[j, t]] = curve.eval(r);
            }
        }
        Ok(out)
    }
}

/// Simulates `t_total` subjects on canonical equispaced grids of sizes `n1`
/// (covariate) and `n2` (response). Deterministic in the scenario seed.
pub fn simulate(
    scenario: &SimulationScenario,
    n1: usize,
    n2: usize,
    t_total: usize,
) -> Result<(FunctionalDataset, OracleModel)> {
    scenario.validate()?;
    if n1 == 0 || n2 == 0 || t_total == 0 {
        return Err(Error::Param(
            "grid sizes and subject count must be at least 1".into(),
        ));
    }
    let q = scenario.q;
    let p = scenario.p;
    let mut rng = PortableRng::new(scenario.seed);

    // Stream order: x, e, Z, then the Random scenario draws.
    let mut x_coeffs = Array2::zeros((q, t_total));
    for t in 0..t_total {
        for i in 0..q {
            x_coeffs[[i, t]] = rng.uniform_sym(1.0 / (i + 1) as f64);
        }
    }
    let mut e_coeffs = Array2::zeros((q, t_total));
    for t in 0..t_total {
        for i in 0..q {
            e_coeffs[[i, t]] = rng.uniform_sym(0.2 / (i + 1) as f64);
        }
    }
    let mut z = Array2::zeros((p, t_total));
    let z_half_width = 1.0 / 3.0f64.sqrt();
    for t in 0..t_total {
        for j in 0..p {
            z[[j, t]] = rng.uniform_sym(z_half_width);
        }
    }
    let truth = match scenario.kind {
        ScenarioKind::Exponential => CoefficientTruth::Exponential {
            kappa: scenario.kappa,
        },
        ScenarioKind::Random => {
            let mut lambda = Array2::zeros((q, q));
            for i in 0..q {
                for j in 0..q {
                    lambda[[i, j]] = rng.standard_normal();
                }
            }
            let mut b = Array1::zeros(q);
            for i in 0..q {
                b[i] = rng.standard_normal();
            }
            let gram = lambda.t().dot(&lambda);
            let top = sym_eig(&gram)?.eigenvalues[0].max(0.0);
            let spectral_norm = top.sqrt();
            if spectral_norm <= 0.0 {
                return Err(Error::Numeric("degenerate random coefficient matrix".into()));
            }
            lambda.mapv_inplace(|v| v / spectral_norm);
            let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            if b_norm <= 0.0 {
                return Err(Error::Numeric("degenerate random coefficient vector".into()));
            }
            b.mapv_inplace(|v| v / b_norm);
            CoefficientTruth::Random {
                kappa: scenario.kappa,
                lambda,
                b,
            }
        }
    };

    let oracle = OracleModel {
        truth,
        q,
        p,
        x_coeffs: x_coeffs.clone(),
    };

    let x_grid = SampleGrid::equispaced(n1)?;
    let y_grid = SampleGrid::equispaced(n2)?;
    let basis_x = basis_matrix(q, x_grid.points());
    let basis_y = basis_matrix(q, y_grid.points());

    let x = basis_x.t().dot(&x_coeffs);
    let noise = basis_y.t().dot(&e_coeffs);
    let mut y = noise;
    for t in 0..t_total {
        let curve = oracle.signal(x_coeffs.column(t), z.column(t))?;
        for (j, &r) in y_grid.points().iter().enumerate() {
            y[[j, t]] += curve.eval(r);
        }
    }

    let dataset = FunctionalDataset::new(x_grid, y_grid, x, y, z)?;
    Ok((dataset, oracle))
}

/// Serializes an oracle together with the train/test split marker of the
/// simulation it belongs to.
pub fn save_oracle(oracle: &OracleModel, train_subjects: usize, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, oracle_to_string(oracle, train_subjects))?;
    Ok(())
}

pub fn oracle_to_string(oracle: &OracleModel, train_subjects: usize) -> String {
    let mut out = String::from("#funreg-oracle: v1\n");
    out.push_str(&format!("#kind: {}\n", oracle.kind().name()));
    out.push_str(&format!("#kappa: {}\n", fmt_f64(oracle.kappa())));
    out.push_str(&format!("#q: {}\n", oracle.q));
    out.push_str(&format!("#p: {}\n", oracle.p));
    out.push_str(&format!("#train: {train_subjects}\n"));
    out.push_str(&format!("#subjects: {}\n", oracle.subjects()));
    if let CoefficientTruth::Random { lambda, b, .. } = &oracle.truth {
        out.push_str("#lambda:\n");
        for i in 0..oracle.q {
            out.push_str(&join_f64(lambda.row(i).iter().copied()));
            out.push('\n');
        }
        out.push_str("#b: ");
        out.push_str(&join_f64(b.iter().copied()));
        out.push('\n');
    }
    out.push_str("#x_coeffs:\n");
    for t in 0..oracle.subjects() {
        out.push_str(&join_f64(oracle.x_coeffs.column(t).iter().copied()));
        out.push('\n');
    }
    out
}

pub fn load_oracle(path: impl AsRef<Path>) -> Result<(OracleModel, usize)> {
    let text = std::fs::read_to_string(path)?;
    oracle_from_string(&text)
}

pub fn oracle_from_string(text: &str) -> Result<(OracleModel, usize)> {
    let mut lines = text.lines().enumerate().peekable();
    let mut next_line = |key: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((idx, l)) => Ok((idx + 1, l.to_string())),
            None => Err(Error::Parse {
                line: 0,
                msg: format!("missing '{key}' section"),
            }),
        }
    };
    let (l, magic) = next_line("funreg-oracle")?;
    expect_header(&magic, "funreg-oracle", l)?;
    let (l, kind_line) = next_line("kind")?;
    let kind_name = expect_header(&kind_line, "kind", l)?.to_string();
    let kind = ScenarioKind::from_name(&kind_name).ok_or(Error::Parse {
        line: l,
        msg: format!("unknown scenario kind '{kind_name}'"),
    })?;
    let (l, kappa_line) = next_line("kappa")?;
    let kappa = crate::textio::parse_f64(expect_header(&kappa_line, "kappa", l)?, l)?;
    let (l, q_line) = next_line("q")?;
    let q = parse_usize(expect_header(&q_line, "q", l)?, l)?;
    let (l, p_line) = next_line("p")?;
    let p = parse_usize(expect_header(&p_line, "p", l)?, l)?;
    let (l, train_line) = next_line("train")?;
    let train = parse_usize(expect_header(&train_line, "train", l)?, l)?;
    let (l, subj_line) = next_line("subjects")?;
    let subjects = parse_usize(expect_header(&subj_line, "subjects", l)?, l)?;

    let truth = match kind {
        ScenarioKind::Exponential => CoefficientTruth::Exponential { kappa },
        ScenarioKind::Random => {
            let (l, lam_header) = next_line("lambda")?;
            expect_header(&lam_header, "lambda", l)?;
            let mut lambda = Array2::zeros((q, q));
            for i in 0..q {
                let (l, row) = next_line("lambda row")?;
                let vals = parse_f64_row(&row, l)?;
                if vals.len() != q {
                    return Err(Error::Parse {
                        line: l,
                        msg: format!("lambda row has {} entries, expected {q}", vals.len()),
                    });
                }
                for j in 0..q {
                    lambda[[i, j]] = vals[j];
                }
            }
            let (l, b_line) = next_line("b")?;
            let b_vals = parse_f64_row(expect_header(&b_line, "b", l)?, l)?;
            if b_vals.len() != q {
                return Err(Error::Parse {
                    line: l,
                    msg: format!("b has {} entries, expected {q}", b_vals.len()),
                });
            }
            CoefficientTruth::Random {
                kappa,
                lambda,
                b: Array1::from_vec(b_vals),
            }
        }
    };
    let (l, xc_header) = next_line("x_coeffs")?;
    expect_header(&xc_header, "x_coeffs", l)?;
    let mut x_coeffs = Array2::zeros((q, subjects));
    for t in 0..subjects {
        let (l, row) = next_line("x_coeffs row")?;
        let vals = parse_f64_row(&row, l)?;
        if vals.len() != q {
            return Err(Error::Parse {
                line: l,
                msg: format!("coefficient row has {} entries, expected {q}", vals.len()),
            });
        }
        for i in 0..q {
            x_coeffs[[i, t]] = vals[i];
        }
    }
    Ok((
        OracleModel {
            truth,
            q,
            p,
            x_coeffs,
        },
        train,
    ))
}
