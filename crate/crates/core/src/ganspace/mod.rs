//! Principal directions of the generator's first-layer activations, carried
//! back to latent space by least squares, and latent edits along them.

mod format;
mod registry;

pub use format::{BASIS_MAGIC, BASIS_VERSION};
pub use registry::{DirectionRegistry, RegistryEntry};

use crate::binio::Digest;
use crate::error::{Error, Result};
use crate::gan::{generate, GeneratorParams};
use crate::ndmath::{least_squares, pca_coords, pca_fit, Matrix, Regularization, SeededRng};

/// Default number of latent samples used to fit a basis.
pub const DEFAULT_SAMPLES: usize = 10_000;
/// Default number of exposed principal directions.
pub const DEFAULT_DIRECTIONS: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionBasis {
    /// Activation mean μ (`h`).
    pub mean: Vec<f32>,
    /// PCA basis `V` (`h × p`), orthonormal columns.
    pub components: Matrix,
    /// Descending.
    pub variances: Vec<f32>,
    /// Latent directions `U` (`d_z × p`); column `k` is `u_k`.
    pub latent: Matrix,
    pub sample_count: u64,
    pub generator_fingerprint: Digest,
}

impl DirectionBasis {
    pub fn directions(&self) -> usize {
        self.latent.cols()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent.rows()
    }

    pub fn hidden(&self) -> usize {
        self.components.rows()
    }

    /// `u_k` as a latent-space vector.
    pub fn direction(&self, k: usize) -> Result<Vec<f32>> {
        if k >= self.directions() {
            return Err(Error::contract(format!("direction {k} out of range 0..{}", self.directions())));
        }
        Ok(self.latent.column(k))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

/// Samples `n` latents and records the generator's first-layer activations.
/// Returns `(Z, Y)`.
pub fn collect_activations(g: &GeneratorParams, n: usize, rng: &mut SeededRng) -> Result<(Matrix, Matrix)> {
    if n < 2 {
        return Err(Error::contract(format!("collect_activations needs at least 2 samples, got {n}")));
    }
    let z = rng.normal_matrix(n, g.latent_dim());
    let y = g.0.first_layer(&z)?;
    Ok((z, y))
}

/// PCA of `y`, coordinates `X = (Y − μ)V`, then `U = argmin Σ ‖U x_j − z_j‖²`.
pub fn fit_directions(z: &Matrix, y: &Matrix, p: usize, generator_fingerprint: Digest) -> Result<DirectionBasis> {
    if z.rows() != y.rows() {
        return Err(Error::shape("fit_directions", format!("{} activation rows", z.rows()), y.rows()));
    }
    let pca = pca_fit(y, p)?;
    let x = pca_coords(y, &pca.mean, &pca.basis)?;
    let latent = least_squares(&x, z, Regularization::Auto)?;
    Ok(DirectionBasis {
        mean: pca.mean,
        components: pca.basis,
        variances: pca.variances,
        latent,
        sample_count: y.rows() as u64,
        generator_fingerprint,
    })
}

/// [`collect_activations`] followed by [`fit_directions`], bound to `g`.
pub fn fit_generator_directions(
    g: &GeneratorParams,
    n: usize,
    p: usize,
    rng: &mut SeededRng,
) -> Result<DirectionBasis> {
    let (z, y) = collect_activations(g, n, rng)?;
    fit_directions(&z, &y, p, g.fingerprint())
}

/// Principal coordinates `(Y − μ)V` of the first-layer activations of the rows of `z`.
pub fn pca_projection(g: &GeneratorParams, basis: &DirectionBasis, z: &Matrix) -> Result<Matrix> {
    if g.hidden() != basis.hidden() {
        return Err(Error::shape("pca_projection", basis.hidden(), g.hidden()));
    }
    pca_coords(&g.0.first_layer(z)?, &basis.mean, &basis.components)
}

/// `z' = z + U x`.
pub fn edit_latent(z: &[f32], basis: &DirectionBasis, x: &[f32]) -> Result<Vec<f32>> {
    if z.len() != basis.latent_dim() {
        return Err(Error::shape("edit_latent latent", basis.latent_dim(), z.len()));
    }
    if x.len() != basis.directions() {
        return Err(Error::shape("edit_latent offsets", basis.directions(), x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("edit offsets must be finite"));
    }
    Ok(z.iter()
        .enumerate()
        .map(|(i, &zi)| {
            let ux: f64 = basis
                .latent
                .row(i)
                .iter()
                .zip(x)
                .map(|(&u, &o)| u as f64 * o as f64)
                .sum();
            (zi as f64 + ux) as f32
        })
        .collect())
}

/// Offsets that move `amount` along direction `k` only.
pub fn single_offset(basis: &DirectionBasis, k: usize, amount: f32) -> Result<Vec<f32>> {
    basis.direction(k)?;
    let mut x = vec![0.0; basis.directions()];
    x[k] = amount;
    Ok(x)
}

pub fn edit_and_generate(g: &GeneratorParams, z: &[f32], basis: &DirectionBasis, x: &[f32]) -> Result<Vec<f32>> {
    if g.fingerprint() != basis.generator_fingerprint {
        return Err(Error::contract(format!(
            "basis was fitted on generator {}, not {}",
            basis.generator_fingerprint,
            g.fingerprint()
        )));
    }
    generate(g, &edit_latent(z, basis, x)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::{first_layer_activations, ArchConfig};

    fn small_generator(seed: u64) -> GeneratorParams {
        GeneratorParams::init(
            &ArchConfig {
                latent_dim: 4,
                hidden: 12,
                blocks: 1,
            },
            &mut SeededRng::new(seed),
        )
    }

    #[test]
    fn one_sample_rejected() {
        let g = small_generator(1);
        assert!(matches!(collect_activations(&g, 1, &mut SeededRng::new(0)), Err(Error::Contract(_))));
    }

    #[test]
    fn activation_rows_match_single_evaluation() {
        let g = small_generator(2);
        let (z, y) = collect_activations(&g, 20, &mut SeededRng::new(3)).unwrap();
        for r in 0..20 {
            assert_eq!(first_layer_activations(&g, z.row(r)).unwrap(), y.row(r));
        }
    }

    #[test]
    fn edits_are_linear_and_select_columns() {
        let g = small_generator(4);
        let basis = fit_generator_directions(&g, 400, 3, &mut SeededRng::new(5)).unwrap();
        let z = [0.3, -1.0, 0.5, 2.0];
        assert_eq!(edit_latent(&z, &basis, &[0.0; 3]).unwrap(), z);
        let x = [1.0, -2.0, 0.5];
        let d1: Vec<f64> = edit_latent(&z, &basis, &x).unwrap().iter().zip(&z).map(|(a, b)| (a - b) as f64).collect();
        let x3: Vec<f32> = x.iter().map(|v| v * 3.0).collect();
        let d3: Vec<f64> = edit_latent(&z, &basis, &x3).unwrap().iter().zip(&z).map(|(a, b)| (a - b) as f64).collect();
        for (a, b) in d1.iter().zip(&d3) {
            assert!((3.0 * a - b).abs() < 1e-5);
        }
        let e = edit_latent(&z, &basis, &single_offset(&basis, 1, 2.5).unwrap()).unwrap();
        for (i, u) in basis.direction(1).unwrap().iter().enumerate() {
            assert!(((e[i] - z[i]) - 2.5 * u).abs() < 1e-5);
        }
        assert!(matches!(edit_latent(&z, &basis, &[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn zero_edit_generates_identically_and_fingerprint_enforced() {
        let g = small_generator(6);
        let basis = fit_generator_directions(&g, 200, 2, &mut SeededRng::new(7)).unwrap();
        let z = [0.1, 0.2, -0.3, 0.4];
        assert_eq!(edit_and_generate(&g, &z, &basis, &[0.0, 0.0]).unwrap(), generate(&g, &z).unwrap());
        let other = small_generator(8);
        assert!(matches!(edit_and_generate(&other, &z, &basis, &[0.0, 0.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn single_direction_variance_is_top_eigenvalue() {
        let g = small_generator(9);
        let (z, y) = collect_activations(&g, 500, &mut SeededRng::new(10)).unwrap();
        let b = fit_directions(&z, &y, 1, g.fingerprint()).unwrap();
        // Power iteration on the covariance as an independent oracle.
        let (n, h) = y.shape();
        let mut mean = vec![0.0f64; h];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(y.row(r)) {
                *m += *v as f64 / n as f64;
            }
        }
        let mut cov = vec![vec![0.0f64; h]; h];
        for r in 0..n {
            let c: Vec<f64> = y.row(r).iter().zip(&mean).map(|(v, m)| *v as f64 - m).collect();
            for i in 0..h {
                for j in 0..h {
                    cov[i][j] += c[i] * c[j] / (n - 1) as f64;
                }
            }
        }
        let mut v = vec![1.0f64; h];
        let mut lambda = 0.0;
        for _ in 0..2000 {
            let w: Vec<f64> = (0..h).map(|i| (0..h).map(|j| cov[i][j] * v[j]).sum()).collect();
            lambda = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = w.iter().map(|x| x / lambda).collect();
        }
        assert!((b.variances[0] as f64 - lambda).abs() / lambda < 1e-4, "{} vs {lambda}", b.variances[0]);
    }

    #[test]
    fn sample_order_does_not_change_basis() {
        let g = small_generator(11);
        let (z, y) = collect_activations(&g, 300, &mut SeededRng::new(12)).unwrap();
        let a = fit_directions(&z, &y, 3, g.fingerprint()).unwrap();
        let mut idx: Vec<usize> = (0..300).collect();
        SeededRng::new(13).shuffle(&mut idx);
        let b = fit_directions(&z.select_rows(&idx), &y.select_rows(&idx), 3, g.fingerprint()).unwrap();
        for k in 0..3 {
            let (ca, cb) = (a.components.column(k), b.components.column(k));
            let cos: f64 = ca.iter().zip(&cb).map(|(x, y)| *x as f64 * *y as f64).sum();
            assert!(cos.abs() > 1.0 - 1e-4, "column {k}: {cos}");
        }
    }
}
