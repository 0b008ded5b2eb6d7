//! Small complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

/// Stacks equal-length column vectors into a matrix.
pub fn stack_columns(cols: &[&CVector], rows: usize) -> CMatrix {
    let mut out = CMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// `sum_i weights[i] * G[:, i] G[:, i]^H + shift * I`.
pub fn weighted_gram(g: &CMatrix, weights: &[f64], shift: f64) -> CMatrix {
    debug_assert_eq!(g.ncols(), weights.len());
    let mut scaled = g.clone();
    for (j, &w) in weights.iter().enumerate() {
        scaled.column_mut(j).scale_mut(w);
    }
    let mut out = &scaled * g.adjoint();
    for i in 0..out.nrows() {
        out[(i, i)] += Complex64::new(shift, 0.0);
    }
    hermitize(&mut out);
    out
}

/// Replaces `m` by `(m + m^H) / 2`, removing rounding asymmetry.
pub fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Cholesky factorization of a Hermitian positive-definite matrix, reused for
/// any number of right-hand sides.
pub struct HpdFactor {
    chol: Cholesky<Complex64, Dyn>,
}

impl HpdFactor {
    pub fn new(m: CMatrix) -> Option<Self> {
        let chol = Cholesky::new(m)?;
        let l = chol.l_dirty();
        if (0..l.nrows()).any(|i| !(l[(i, i)].re > 0.0) || !l[(i, i)].re.is_finite()) {
            return None;
        }
        Some(Self { chol })
    }

    pub fn solve(&self, rhs: &CMatrix) -> CMatrix {
        self.chol.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &CVector) -> CVector {
        self.chol.solve(rhs)
    }

    /// `log2 det` of the factored matrix.
    pub fn log2_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.log2()).sum::<f64>()
    }
}

/// Hermitian PSD square root via eigendecomposition. Eigenvalues below
/// `-tol * max(1, |lambda_max|)` are rejected as non-PSD; small negative
/// ones are clipped to zero.
pub fn hermitian_psd_sqrt(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::Data("matrix is not square".into()));
    }
    let n = m.nrows();
    for i in 0..n {
        for j in i..n {
            if (m[(i, j)] - m[(j, i)].conj()).norm() > tol {
                return Err(Error::Data(format!(
                    "matrix is not Hermitian at ({i}, {j})"
                )));
            }
        }
    }
    let mut h = m.clone();
    hermitize(&mut h);
    let eig = SymmetricEigen::new(h);
    let scale = eig
        .eigenvalues
        .iter()
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    if let Some(min) = eig.eigenvalues.iter().cloned().reduce(f64::min) {
        if min < -tol * scale {
            return Err(Error::Data(format!(
                "matrix is not PSD (smallest eigenvalue {min:e})"
            )));
        }
    }
    let roots = DVector::from_iterator(
        n,
        eig.eigenvalues
            .iter()
            .map(|&v| Complex64::new(v.max(0.0).sqrt(), 0.0)),
    );
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, r) in roots.iter().enumerate() {
        scaled.column_mut(j).scale_mut(r.re);
    }
    let mut out = scaled * u.adjoint();
    hermitize(&mut out);
    Ok(out)
}

/// Order-fixed pairwise (tree) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_sum_complex(xs: &[Complex64]) -> Complex64 {
    const LEAF: usize = 8;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_complex(&xs[..mid]) + pairwise_sum_complex(&xs[mid..])
}

/// Sample mean and standard error of the mean (0 for fewer than two samples).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[c(2.0, 0.0), c(0.5, 0.5), c(0.5, -0.5), c(1.0, 0.0)],
        );
        let r = hermitian_psd_sqrt(&m, 1e-10).unwrap();
        assert!((&r * &r - &m).norm() < 1e-12);
        assert!((&r - r.adjoint()).norm() < 1e-14);
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(hermitian_psd_sqrt(&m, 1e-10), Err(Error::Data(_))));
        let skew = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.3, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(hermitian_psd_sqrt(&skew, 1e-10), Err(Error::Data(_))));
    }

    #[test]
    fn factor_solves_and_log_det() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[c(4.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(3.0, 0.0)],
        );
        let f = HpdFactor::new(m.clone()).unwrap();
        let b = CVector::from_vec(vec![c(1.0, 2.0), c(-1.0, 0.5)]);
        let x = f.solve_vec(&b);
        assert!((&m * x - b).norm() < 1e-13);
        // det = 12 - |1+i|^2 = 10
        assert!((f.log2_det() - 10f64.log2()).abs() < 1e-13);
        assert!(HpdFactor::new(CMatrix::zeros(2, 2)).is_none());
    }

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
        let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
