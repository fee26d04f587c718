//! Reproducing-kernel evaluation, Gram-matrix construction, and symmetric
//! spectral utilities shared by all solver stages.
//!
//! The shipped kernel is the rescaled Bernoulli-polynomial kernel
//!
//! ```text
//! K(x, y) = 1 + k1(x) k1(y) + k2(x) k2(y) - k4(|x - y|)
//! k1(x) = x - 1/2
//! k2(x) = (k1(x)^2 - 1/12) / 2
//! k4(x) = (k1(x)^4 - k1(x)^2 / 2 + 7/240) / 24
//! ```
//!
//! which reproduces the Sobolev space `W^{2,2}[0,1]`.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelKind {
    #[default]
    BernoulliW22,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::BernoulliW22 => "bernoulli_w22",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "bernoulli_w22" => Some(KernelKind::BernoulliW22),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KernelSpec {
    pub kind: KernelKind,
}

impl KernelSpec {
    pub fn bernoulli_w22() -> Self {
        KernelSpec {
            kind: KernelKind::BernoulliW22,
        }
    }

    /// Evaluates the kernel at `(x, y)`, both in `[0, 1]`.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        check_unit_interval(x, "x")?;
        check_unit_interval(y, "y")?;
        Ok(match self.kind {
            KernelKind::BernoulliW22 => bernoulli_w22(x, y),
        })
    }

    /// Gram matrix `M[i][j] = K(points[i], points[j])`.
    ///
    /// Duplicate points are allowed (the matrix is then rank-deficient but
    /// still positive semidefinite); an empty point set is rejected.
    pub fn gram(&self, points: &[f64]) -> Result<Array2<f64>> {
        if points.is_empty() {
            return Err(Error::Size("gram matrix requires at least one point".into()));
        }
        for &p in points {
            check_unit_interval(p, "gram point")?;
        }
        let n = points.len();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v = match self.kind {
                    KernelKind::BernoulliW22 => bernoulli_w22(points[i], points[j]),
                };
                m[[i, j]] = v;
                m[[j, i]] = v;
            }
        }
        Ok(m)
    }
}

fn check_unit_interval(v: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain(format!("{what} = {v} lies outside [0, 1]")));
    }
    Ok(())
}

fn bern_k1(x: f64) -> f64 {
    x - 0.5
}

fn bern_k2(x: f64) -> f64 {
    let k1 = bern_k1(x);
    0.5 * (k1 * k1 - 1.0 / 12.0)
}

fn bern_k4(x: f64) -> f64 {
    let k1 = bern_k1(x);
    let k1sq = k1 * k1;
    (k1sq * k1sq - 0.5 * k1sq + 7.0 / 240.0) / 24.0
}

fn bernoulli_w22(x: f64, y: f64) -> f64 {
    1.0 + bern_k1(x) * bern_k1(y) + bern_k2(x) * bern_k2(y) - bern_k4((x - y).abs())
}

/// Eigendecomposition of a symmetric matrix: eigenvalues in descending order
/// with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymmetricSpectrum {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

impl SymmetricSpectrum {
    /// `U diag(d) U^T`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.eigenvectors * &self.eigenvalues;
        scaled.dot(&self.eigenvectors.t())
    }

    /// `U diag(f(d)) U^T` with eigenvalues floored at `max(d) * 1e-12` before
    /// applying a fractional or negative power. A spectrum with no positive
    /// eigenvalue maps to the zero matrix (the pseudo-inverse convention).
    pub fn power(&self, exponent: f64) -> Result<Array2<f64>> {
        if !matches!(exponent, 0.5 | -0.5 | -1.0) {
            return Err(Error::Param(format!(
                "spectral power supports exponents 1/2, -1/2 and -1, got {exponent}"
            )));
        }
        let n = self.eigenvalues.len();
        let max = self.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        if max <= 0.0 {
            return Ok(Array2::zeros((n, n)));
        }
        let min = self.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-8 * max {
            return Err(Error::NotPsd(format!(
                "eigenvalue {min} below tolerance -1e-8 * {max}"
            )));
        }
        let floor = max * 1e-12;
        let powered = self.eigenvalues.mapv(|d| d.max(floor).powf(exponent));
        let scaled = &self.eigenvectors * &powered;
        let mut out = scaled.dot(&self.eigenvectors.t());
        symmetrize(&mut out);
        Ok(out)
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// The input is symmetrized (`(m + m^T)/2`) to absorb round-off before the
/// sweeps; inputs that are asymmetric beyond `1e-10 * max(1, |m|_inf)` are
/// rejected.
pub fn sym_eig(m: &Array2<f64>) -> Result<SymmetricSpectrum> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(Error::Shape(format!("expected a square matrix, got {rows}x{cols}")));
    }
    if rows == 0 {
        return Err(Error::Size("cannot decompose an empty matrix".into()));
    }
    let max_abs = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-10 * max_abs.max(1.0);
    for i in 0..rows {
        for j in (i + 1)..rows {
            if (m[[i, j]] - m[[j, i]]).abs() > tol {
                return Err(Error::Shape(format!(
                    "matrix is not symmetric: |m[{i}][{j}] - m[{j}][{i}]| = {}",
                    (m[[i, j]] - m[[j, i]]).abs()
                )));
            }
        }
    }
    let mut a = m.clone();
    symmetrize(&mut a);
    Ok(jacobi(a))
}

/// Applies `exponent` to the floored spectrum of a symmetric PSD matrix.
pub fn spectral_power(m: &Array2<f64>, exponent: f64) -> Result<Array2<f64>> {
    sym_eig(m)?.power(exponent)
}

fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

/// Cyclic Jacobi with the Numerical-Recipes style rotation thresholds.
/// Returns eigenvalues sorted descending, eigenvector columns orthonormal,
/// each column's largest-magnitude entry made positive so the decomposition
/// is deterministic.
fn jacobi(mut a: Array2<f64>) -> SymmetricSpectrum {
    let n = a.nrows();
    let mut v = Array2::eye(n);
    let mut d: Array1<f64> = a.diag().to_owned();
    let mut b = d.clone();
    let mut z = Array1::<f64>::zeros(n);

    for sweep in 0..100 {
        let mut off_sum = 0.0;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                off_sum += a[[p, q]].abs();
            }
        }
        if off_sum == 0.0 {
            break;
        }
        let thresh = if sweep < 3 {
            0.2 * off_sum / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let g = 100.0 * a[[p, q]].abs();
                if sweep > 3 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    a[[p, q]] = 0.0;
                    continue;
                }
                if a[[p, q]].abs() <= thresh {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    a[[p, q]] / h
                } else {
                    let theta = 0.5 * h / a[[p, q]];
                    let mut t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        t = -t;
                    }
                    t
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * a[[p, q]];
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                a[[p, q]] = 0.0;
                let rotate = |x: f64, y: f64| (x - s * (y + tau * x), y + s * (x - tau * y));
                for j in 0..p {
                    let (x, y) = rotate(a[[j, p]], a[[j, q]]);
                    a[[j, p]] = x;
                    a[[j, q]] = y;
                }
                for j in (p + 1)..q {
                    let (x, y) = rotate(a[[p, j]], a[[j, q]]);
                    a[[p, j]] = x;
                    a[[j, q]] = y;
                }
                for j in (q + 1)..n {
                    let (x, y) = rotate(a[[p, j]], a[[q, j]]);
                    a[[p, j]] = x;
                    a[[q, j]] = y;
                }
                for j in 0..n {
                    let (x, y) = rotate(v[[j, p]], v[[j, q]]);
                    v[[j, p]] = x;
                    v[[j, q]] = y;
                }
            }
        }
        for p in 0..n {
            b[p] += z[p];
            d[p] = b[p];
            z[p] = 0.0;
        }
    }

    // Sort descending; stable in the original index for determinism.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap().then(i.cmp(&j)));
    let mut eigenvalues = Array1::zeros(n);
    let mut eigenvectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues[dst] = d[src];
        let mut pivot = 0usize;
        let mut pivot_abs = -1.0f64;
        for r in 0..n {
            let abs = v[[r, src]].abs();
            if abs > pivot_abs {
                pivot_abs = abs;
                pivot = r;
            }
        }
        let sign = if v[[pivot, src]] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            eigenvectors[[r, dst]] = sign * v[[r, src]];
        }
    }
    SymmetricSpectrum {
        eigenvalues,
        eigenvectors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PortableRng;
    use ndarray::array;
    use proptest::prelude::*;

    fn frob(m: &Array2<f64>) -> f64 {
        m.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn kernel_value_at_origin() {
        // 1 + 1/4 + (1/12)^2 + 1/720 = 151/120, by direct evaluation of the
        // Bernoulli-polynomial formula.
        let k = KernelSpec::bernoulli_w22();
        let expected = 151.0 / 120.0;
        assert!((k.eval(0.0, 0.0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn kernel_value_at_center() {
        let k = KernelSpec::bernoulli_w22();
        assert!((k.eval(0.5, 0.5).unwrap() - 1.003125).abs() < 1e-15);
    }

    #[test]
    fn kernel_rejects_out_of_domain() {
        let k = KernelSpec::bernoulli_w22();
        assert!(matches!(k.eval(-0.1, 0.5), Err(Error::Domain(_))));
        assert!(matches!(k.eval(0.5, 1.5), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric(x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
            let k = KernelSpec::bernoulli_w22();
            let a = k.eval(x, y).unwrap();
            let b = k.eval(y, x).unwrap();
            prop_assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn gram_single_point() {
        let k = KernelSpec::bernoulli_w22();
        let g = k.gram(&[0.5]).unwrap();
        assert_eq!(g.dim(), (1, 1));
        assert!((g[[0, 0]] - 1.003125).abs() < 1e-15);
    }

    #[test]
    fn gram_rejects_empty() {
        let k = KernelSpec::bernoulli_w22();
        assert!(matches!(k.gram(&[]), Err(Error::Size(_))));
    }

    #[test]
    fn gram_is_psd_for_random_point_sets() {
        let k = KernelSpec::bernoulli_w22();
        let mut rng = PortableRng::new(11);
        for trial in 0..8 {
            let n = 5 + trial * 28; // up to 201 points
            let points: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let g = k.gram(&points).unwrap();
            let spec = sym_eig(&g).unwrap();
            let max = spec.eigenvalues[0];
            let min = spec.eigenvalues[spec.eigenvalues.len() - 1];
            assert!(min >= -1e-10 * max, "min {min} vs max {max} at n = {n}");
        }
    }

    #[test]
    fn gram_with_duplicates_is_rank_deficient_but_psd() {
        let k = KernelSpec::bernoulli_w22();
        let g = k.gram(&[0.3, 0.3, 0.8]).unwrap();
        assert_eq!(g.row(0).to_vec(), g.row(1).to_vec());
        let spec = sym_eig(&g).unwrap();
        let max = spec.eigenvalues[0];
        assert!(spec.eigenvalues[2].abs() <= 1e-12 * max);
        assert!(spec.eigenvalues[2] >= -1e-10 * max);
    }

    #[test]
    fn sym_eig_identity() {
        let spec = sym_eig(&Array2::eye(3)).unwrap();
        for v in spec.eigenvalues.iter() {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sym_eig_diagonal_sorted_descending() {
        let m = Array2::from_diag(&array![3.0, 1.0, 2.0]);
        let spec = sym_eig(&m).unwrap();
        assert!((spec.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((spec.eigenvalues[1] - 2.0).abs() < 1e-14);
        assert!((spec.eigenvalues[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sym_eig_reconstructs_random_matrix() {
        let mut rng = PortableRng::new(5);
        for _ in 0..10 {
            let n = 5;
            let mut m = Array2::zeros((n, n));
            for i in 0..n {
                for j in i..n {
                    let v = rng.uniform_sym(2.0);
                    m[[i, j]] = v;
                    m[[j, i]] = v;
                }
            }
            let spec = sym_eig(&m).unwrap();
            let resid = frob(&(&spec.reconstruct() - &m)) / frob(&m).max(1.0);
            assert!(resid < 1e-10, "reconstruction residual {resid}");
            let gram = spec.eigenvectors.t().dot(&spec.eigenvectors);
            let ortho = frob(&(&gram - &Array2::<f64>::eye(n)));
            assert!(ortho < 1e-10, "orthonormality residual {ortho}");
        }
    }

    #[test]
    fn sym_eig_rejects_asymmetric_input() {
        let m = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(sym_eig(&m), Err(Error::Shape(_))));
    }

    #[test]
    fn power_of_identity_is_identity() {
        for e in [0.5, -0.5, -1.0] {
            let p = spectral_power(&Array2::<f64>::eye(4), e).unwrap();
            assert!(frob(&(&p - &Array2::<f64>::eye(4))) < 1e-12);
        }
    }

    #[test]
    fn sqrt_of_diagonal() {
        // The power acts on the spectrum; positions in the original basis
        // are preserved.
        let m = Array2::from_diag(&array![4.0, 9.0]);
        let p = spectral_power(&m, 0.5).unwrap();
        assert!((p[[0, 0]] - 2.0).abs() < 1e-12);
        assert!((p[[1, 1]] - 3.0).abs() < 1e-12);
        assert!(p[[0, 1]].abs() < 1e-12);
    }

    #[test]
    fn inverse_sqrt_round_trip_on_gram() {
        let k = KernelSpec::bernoulli_w22();
        let points: Vec<f64> = (1..=5).map(|i| i as f64 / 6.0).collect();
        let g = k.gram(&points).unwrap();
        let inv_half = spectral_power(&g, -0.5).unwrap();
        let should_be_eye = inv_half.dot(&inv_half).dot(&g);
        let resid = frob(&(&should_be_eye - &Array2::<f64>::eye(5)));
        assert!(resid < 1e-6, "round-trip residual {resid}");
    }

    #[test]
    fn sqrt_squares_back_to_input() {
        let k = KernelSpec::bernoulli_w22();
        let points: Vec<f64> = (1..=8).map(|i| i as f64 / 9.0).collect();
        let g = k.gram(&points).unwrap();
        let half = spectral_power(&g, 0.5).unwrap();
        let resid = frob(&(&half.dot(&half) - &g)) / frob(&g);
        assert!(resid < 1e-8, "square residual {resid}");
    }

    #[test]
    fn power_rejects_indefinite_matrix() {
        let m = Array2::from_diag(&array![1.0, -0.5]);
        assert!(matches!(spectral_power(&m, 0.5), Err(Error::NotPsd(_))));
    }

    #[test]
    fn power_rejects_unsupported_exponent() {
        assert!(matches!(
            spectral_power(&Array2::eye(2), 2.0),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn zero_matrix_maps_to_zero() {
        let z = Array2::zeros((3, 3));
        for e in [0.5, -0.5, -1.0] {
            let p = spectral_power(&z, e).unwrap();
            assert!(frob(&p) == 0.0);
        }
    }
}
