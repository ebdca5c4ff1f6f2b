//! PCA and linear least squares. Decompositions run in `f64` through nalgebra;
//! results are stored back as `f32` matrices.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

use super::Matrix;

/// Condition-number estimate above which the normal equations are regularized.
pub const CONDITION_LIMIT: f64 = 1e10;
/// Tikhonov factor, relative to the mean diagonal of `XᵀX`.
pub const TIKHONOV_LAMBDA: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct PcaFit {
    pub mean: Vec<f32>,
    /// `h × p`, orthonormal columns.
    pub basis: Matrix,
    /// Descending.
    pub variances: Vec<f32>,
}

/// Top-`p` principal subspace of the rows of `y` (`N × h`).
///
/// Eigendecomposition of the sample covariance (`N − 1` normalization).
/// Each eigenvector is signed so that its largest-magnitude entry is positive.
pub fn pca_fit(y: &Matrix, p: usize) -> Result<PcaFit> {
    let (n, h) = y.shape();
    if n < 2 {
        return Err(Error::contract(format!("pca_fit needs at least 2 samples, got {n}")));
    }
    if p == 0 || p > n.min(h) {
        return Err(Error::contract(format!(
            "pca_fit: p = {p} must be in 1..={} for {n} samples of dimension {h}",
            n.min(h)
        )));
    }

    let mut mean = vec![0.0f64; h];
    for r in 0..n {
        for (m, &v) in mean.iter_mut().zip(y.row(r)) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, h, |r, c| y.get(r, c) as f64 - mean[c]);
    let cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    let total: f64 = cov.diagonal().iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::degenerate("activations have zero variance"));
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..h).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut basis = Matrix::zeros(h, p);
    let mut variances = Vec::with_capacity(p);
    for (k, &idx) in order.iter().take(p).enumerate() {
        let col = eig.eigenvectors.column(idx);
        let pivot = (0..h).fold(0, |best, i| if col[i].abs() > col[best].abs() { i } else { best });
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..h {
            basis.set(i, k, (sign * col[i]) as f32);
        }
        variances.push(eig.eigenvalues[idx].max(0.0) as f32);
    }

    Ok(PcaFit {
        mean: mean.iter().map(|&m| m as f32).collect(),
        basis,
        variances,
    })
}

/// `X = (Y − μ) V`.
pub fn pca_coords(y: &Matrix, mean: &[f32], basis: &Matrix) -> Result<Matrix> {
    if mean.len() != y.cols() || basis.rows() != y.cols() {
        return Err(Error::shape(
            "pca_coords",
            format!("mean and basis rows of length {}", y.cols()),
            format!("mean {}, basis {}x{}", mean.len(), basis.rows(), basis.cols()),
        ));
    }
    let mut centered = y.clone();
    for r in 0..centered.rows() {
        for (v, &m) in centered.row_mut(r).iter_mut().zip(mean) {
            *v -= m;
        }
    }
    centered.matmul(basis)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Regularization {
    /// Add Tikhonov damping when the condition estimate exceeds [`CONDITION_LIMIT`].
    #[default]
    Auto,
    /// Fail with [`Error::Singular`] instead.
    None,
}

/// Solves `U = argmin Σ_j ‖U x_j − z_j‖²` for `x` (`N × p`) and `z` (`N × d`);
/// returns `U` as `d × p`.
pub fn least_squares(x: &Matrix, z: &Matrix, reg: Regularization) -> Result<Matrix> {
    let (n, p) = x.shape();
    if z.rows() != n {
        return Err(Error::shape(
            "least_squares",
            format!("{n} target rows"),
            z.rows(),
        ));
    }
    if n < p {
        return Err(Error::contract(format!(
            "least_squares is underdetermined: {n} samples for {p} coordinates"
        )));
    }
    let xm = DMatrix::from_row_slice(n, p, &x.to_f64());
    let zm = DMatrix::from_row_slice(n, z.cols(), &z.to_f64());
    let mut gram = xm.tr_mul(&xm);
    let rhs = xm.tr_mul(&zm);

    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if cond > CONDITION_LIMIT || !cond.is_finite() {
        match reg {
            Regularization::None => {
                return Err(Error::Singular(format!(
                    "XᵀX condition estimate {cond:.3e} exceeds {CONDITION_LIMIT:e}"
                )))
            }
            Regularization::Auto => {
                let scale = gram.diagonal().mean().max(f64::MIN_POSITIVE);
                for i in 0..p {
                    gram[(i, i)] += TIKHONOV_LAMBDA * scale;
                }
            }
        }
    }

    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Singular("normal equations are not positive definite".into()))?;
    let sol = chol.solve(&rhs); // p × d
    let d = z.cols();
    let mut u = Matrix::zeros(d, p);
    for i in 0..d {
        for k in 0..p {
            u.set(i, k, sol[(k, i)] as f32);
        }
    }
    if !u.is_finite() {
        return Err(Error::Singular("least-squares solution is not finite".into()));
    }
    Ok(u)
}
