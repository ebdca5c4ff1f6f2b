//! Residual-MLP generator and critic, trained as a Wasserstein GAN whose
//! critic regresses onto exact transport duals.

mod checkpoint;
mod network;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::{ArchConfig, CriticParams, Dense, GeneratorParams, ResMlp, ResidualBlock};
pub use train::{critic_update, sample_latent_batch, train, train_step, StepMetrics, TrainConfig, TrainState};

use crate::error::{Error, Result};
use crate::ndmath::{Matrix, SeededRng};

/// `d_z` i.i.d. standard-normal components.
pub fn sample_latent(rng: &mut SeededRng, latent_dim: usize) -> Result<Vec<f32>> {
    if latent_dim == 0 {
        return Err(Error::contract("latent dimension must be at least 1"));
    }
    Ok(rng.normal_vec(latent_dim))
}

fn as_row(v: &[f32], expected: usize, op: &'static str) -> Result<Matrix> {
    if v.len() != expected {
        return Err(Error::shape(op, expected, v.len()));
    }
    Matrix::row_vector(v)
}

pub fn generate(g: &GeneratorParams, z: &[f32]) -> Result<Vec<f32>> {
    let z = as_row(z, g.latent_dim(), "generate")?;
    Ok(g.generate_batch(&z)?.into_vec())
}

/// Post-activation output of the generator's input layer (`h` values).
pub fn first_layer_activations(g: &GeneratorParams, z: &[f32]) -> Result<Vec<f32>> {
    let z = as_row(z, g.latent_dim(), "first_layer_activations")?;
    Ok(g.0.first_layer(&z)?.into_vec())
}

/// Generation resumed from first-layer activations.
pub fn generate_from_activations(g: &GeneratorParams, a: &[f32]) -> Result<Vec<f32>> {
    let a = as_row(a, g.hidden(), "generate_from_activations")?;
    Ok(g.0.from_first_layer(&a)?.into_vec())
}

pub fn critic_score(d: &CriticParams, e: &[f32]) -> Result<f32> {
    let e = as_row(e, crate::EMBED_DIM, "critic_score")?;
    Ok(d.score_batch(&e)?.get(0, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndmath::LEAKY_SLOPE;

    fn arch() -> ArchConfig {
        ArchConfig {
            latent_dim: 6,
            hidden: 10,
            blocks: 2,
        }
    }

    #[test]
    fn latent_moments() {
        let mut rng = SeededRng::new(11);
        let d = 4;
        let n = 25_000;
        let mut sum = vec![0.0f64; d];
        let mut sq = vec![0.0f64; d];
        for _ in 0..n {
            for (i, v) in sample_latent(&mut rng, d).unwrap().into_iter().enumerate() {
                sum[i] += v as f64;
                sq[i] += (v as f64).powi(2);
            }
        }
        for i in 0..d {
            let m = sum[i] / n as f64;
            let var = sq[i] / n as f64 - m * m;
            assert!(m.abs() < 0.02, "mean {m}");
            assert!((0.95..=1.05).contains(&var), "var {var}");
        }
        assert!(sample_latent(&mut rng, 0).is_err());
    }

    #[test]
    fn zero_output_layer_gives_zero_embedding() {
        let mut g = GeneratorParams::init(&arch(), &mut SeededRng::new(1));
        g.0.output = Dense {
            weight: Matrix::zeros(10, crate::EMBED_DIM),
            bias: Matrix::zeros(1, crate::EMBED_DIM),
        };
        let z = sample_latent(&mut SeededRng::new(2), 6).unwrap();
        assert!(generate(&g, &z).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn activations_match_layer_formula() {
        let g = GeneratorParams::init(&arch(), &mut SeededRng::new(3));
        let z = sample_latent(&mut SeededRng::new(4), 6).unwrap();
        let a = first_layer_activations(&g, &z).unwrap();
        let (w, b) = (&g.0.input.weight, &g.0.input.bias);
        for j in 0..10 {
            let mut pre = b.get(0, j) as f64;
            for (i, zi) in z.iter().enumerate() {
                pre += *zi as f64 * w.get(i, j) as f64;
            }
            let expect = if pre > 0.0 { pre } else { pre * LEAKY_SLOPE as f64 };
            assert!((a[j] as f64 - expect).abs() < 1e-5);
        }
        assert_eq!(generate_from_activations(&g, &a).unwrap(), generate(&g, &z).unwrap());
    }

    #[test]
    fn zero_critic_scores_zero() {
        let d = CriticParams(ResMlp::zeros(crate::EMBED_DIM, 8, 1, 1));
        assert_eq!(critic_score(&d, &[1.5; 64]).unwrap(), 0.0);
        assert!(matches!(critic_score(&d, &[0.0; 3]), Err(Error::Shape { .. })));
    }

    #[test]
    fn finite_for_extreme_latents() {
        let g = GeneratorParams::init(&arch(), &mut SeededRng::new(5));
        let out = generate(&g, &[1e6, -1e6, 0.0, 3.0, -7.0, 1e5]).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
    }
}
