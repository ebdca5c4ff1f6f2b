use serde::{Deserialize, Serialize};

use crate::binio::Digest;
use crate::corpus::EmbeddingCorpus;
use crate::error::{Error, Result};
use crate::ndmath::{adam_step, AdamConfig, AdamState, GradientRecord, Matrix, SeededRng};
use crate::transport::{cost_matrix, critic_targets, solve_assignment, TransportPlan};
use crate::EMBED_DIM;

use super::{ArchConfig, Checkpoint, CriticParams, GeneratorParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub arch: ArchConfig,
    pub batch_size: usize,
    pub steps: u64,
    pub generator_lr: f32,
    pub critic_lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    /// Critic updates per generator update.
    pub critic_iters: usize,
    /// Quadratic cost scale `K` in `‖x − y‖² / (2K)`.
    pub cost_scale: f64,
    pub seed: u64,
    /// Metrics are averaged and emitted every `log_every` steps.
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: ArchConfig::default(),
            batch_size: 64,
            steps: 20_000,
            generator_lr: 1e-4,
            critic_lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            critic_iters: 1,
            cost_scale: EMBED_DIM as f64,
            seed: 0,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::contract("batch size must be at least 2"));
        }
        if !(self.cost_scale > 0.0 && self.cost_scale.is_finite()) {
            return Err(Error::contract("cost scale K must be positive"));
        }
        if self.critic_iters == 0 || self.log_every == 0 {
            return Err(Error::contract("critic_iters and log_every must be at least 1"));
        }
        if self.arch.latent_dim == 0 || self.arch.hidden == 0 {
            return Err(Error::contract("latent and hidden widths must be positive"));
        }
        let lr_ok = |v: f32| v.is_finite() && v > 0.0;
        if !lr_ok(self.generator_lr) || !lr_ok(self.critic_lr) {
            return Err(Error::contract("learning rates must be positive"));
        }
        Ok(())
    }

    fn adam(&self, lr: f32) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepMetrics {
    pub step: u64,
    pub transport_cost: f64,
    pub critic_loss: f64,
    pub generator_loss: f64,
}

/// Networks plus optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub generator: GeneratorParams,
    pub critic: CriticParams,
    pub generator_adam: AdamState,
    pub critic_adam: AdamState,
    pub step: u64,
}

impl TrainState {
    /// Fresh networks drawn from `cfg.seed` (stream 1; training draws use stream 0).
    pub fn init(cfg: &TrainConfig) -> Self {
        let mut rng = SeededRng::with_stream(cfg.seed, 1);
        let generator = GeneratorParams::init(&cfg.arch, &mut rng);
        let critic = CriticParams::init(&cfg.arch, &mut rng);
        Self::from_networks(generator, critic, cfg)
    }

    pub fn from_networks(generator: GeneratorParams, critic: CriticParams, cfg: &TrainConfig) -> Self {
        let generator_adam = AdamState::new(cfg.adam(cfg.generator_lr), &generator.0.shapes());
        let critic_adam = AdamState::new(cfg.adam(cfg.critic_lr), &critic.0.shapes());
        Self {
            generator,
            critic,
            generator_adam,
            critic_adam,
            step: 0,
        }
    }

    pub fn into_checkpoint(self, config: TrainConfig, corpus_fingerprint: Digest) -> Checkpoint {
        Checkpoint {
            generator: self.generator,
            critic: self.critic,
            config,
            generator_adam: self.generator_adam,
            critic_adam: self.critic_adam,
            step: self.step,
            corpus_fingerprint,
        }
    }
}

/// Latent batch `n × d_z` of standard-normal draws.
pub fn sample_latent_batch(rng: &mut SeededRng, n: usize, latent_dim: usize) -> Matrix {
    rng.normal_matrix(n, latent_dim)
}

/// One regression step of the critic towards the dual potentials of `plan`:
/// `mean[(D(x_i) − u_i)²] + mean[(D(y_j) + v_j)²]`. Returns the loss before
/// the update.
pub fn critic_update(state: &mut TrainState, real: &Matrix, fake: &Matrix, plan: &TransportPlan) -> Result<f64> {
    let (t_real, t_fake) = critic_targets(plan);
    let t_real = Matrix::column_vector(&t_real)?;
    let t_fake = Matrix::column_vector(&t_fake)?;

    let mut rec = GradientRecord::new();
    let xr = rec.constant(real.clone());
    let xf = rec.constant(fake.clone());
    let (sr, vars) = state.critic.0.record(&mut rec, xr, true)?;
    // Second pass shares parameters through the same handles.
    let sf = record_shared(&state.critic.0, &mut rec, xf, &vars)?;
    let lr = rec.mean_square(sr, &t_real)?;
    let lf = rec.mean_square(sf, &t_fake)?;
    let loss = rec.add(lr, lf)?;
    let value = rec.value(loss).get(0, 0) as f64;
    if !value.is_finite() {
        return Err(Error::Divergence {
            step: state.step,
            detail: format!("critic loss is {value}"),
        });
    }
    let mut grads = rec.backward(loss)?;
    let g: Vec<Matrix> = vars
        .iter()
        .zip(state.critic.0.shapes())
        .map(|(&v, s)| grads.take_or_zeros(v, s))
        .collect();
    adam_step(&mut state.critic.0.params_mut(), &g, &mut state.critic_adam)?;
    Ok(value)
}

/// Forward pass of `net` on `x` reusing already-recorded parameter handles.
fn record_shared(
    net: &super::ResMlp,
    rec: &mut GradientRecord,
    x: crate::ndmath::Var,
    vars: &[crate::ndmath::Var],
) -> Result<crate::ndmath::Var> {
    let mut it = vars.iter().copied();
    let mut dense = |rec: &mut GradientRecord, h| -> Result<crate::ndmath::Var> {
        let (w, b) = (it.next().unwrap(), it.next().unwrap());
        let y = rec.matmul(h, w)?;
        rec.add_row(y, b)
    };
    let h = dense(rec, x)?;
    let mut h = rec.leaky_relu(h);
    for _ in &net.blocks {
        let t = dense(rec, h)?;
        let t = rec.leaky_relu(t);
        let t = dense(rec, t)?;
        h = rec.add(h, t)?;
    }
    dense(rec, h)
}

/// Generator step on `−mean D(G(z))` with the critic held fixed.
fn generator_update(state: &mut TrainState, z: &Matrix) -> Result<f64> {
    let mut rec = GradientRecord::new();
    let zv = rec.constant(z.clone());
    let (fake, gvars) = state.generator.0.record(&mut rec, zv, true)?;
    let (score, _) = state.critic.0.record(&mut rec, fake, false)?;
    let m = rec.mean(score);
    let loss = rec.scale(m, -1.0);
    let value = rec.value(loss).get(0, 0) as f64;
    if !value.is_finite() {
        return Err(Error::Divergence {
            step: state.step,
            detail: format!("generator loss is {value}"),
        });
    }
    let mut grads = rec.backward(loss)?;
    let g: Vec<Matrix> = gvars
        .iter()
        .zip(state.generator.0.shapes())
        .map(|(&v, s)| grads.take_or_zeros(v, s))
        .collect();
    adam_step(&mut state.generator.0.params_mut(), &g, &mut state.generator_adam)?;
    Ok(value)
}

/// One WGAN-QC iteration: sample latents, generate, solve the exact transport
/// problem between real and generated batches, regress the critic onto the
/// dual potentials, then move the generator up the critic.
pub fn train_step(state: &mut TrainState, real: &Matrix, cfg: &TrainConfig, rng: &mut SeededRng) -> Result<StepMetrics> {
    if real.rows() != cfg.batch_size || real.cols() != EMBED_DIM {
        return Err(Error::shape(
            "train_step real batch",
            format!("{}x{EMBED_DIM}", cfg.batch_size),
            format!("{}x{}", real.rows(), real.cols()),
        ));
    }
    if !real.is_finite() {
        return Err(Error::contract("real batch contains non-finite values"));
    }
    let n = cfg.batch_size;
    let d_z = state.generator.latent_dim();

    let mut transport_cost = 0.0;
    let mut critic_loss = 0.0;
    let mut z = Matrix::zeros(0, d_z);
    for _ in 0..cfg.critic_iters {
        z = sample_latent_batch(rng, n, d_z);
        let fake = state.generator.generate_batch(&z)?;
        if !fake.is_finite() {
            return Err(Error::Divergence {
                step: state.step,
                detail: "generator produced non-finite embeddings".into(),
            });
        }
        let plan = solve_assignment(&cost_matrix(real, &fake, cfg.cost_scale)?)?;
        transport_cost = plan.cost;
        critic_loss = critic_update(state, real, &fake, &plan)?;
    }
    let generator_loss = generator_update(state, &z)?;
    state.step += 1;
    Ok(StepMetrics {
        step: state.step,
        transport_cost,
        critic_loss,
        generator_loss,
    })
}

/// Trains from scratch on `corpus`; `on_metrics` receives interval averages
/// every `cfg.log_every` steps.
pub fn train(
    corpus: &EmbeddingCorpus,
    cfg: &TrainConfig,
    mut on_metrics: impl FnMut(&StepMetrics),
) -> Result<Checkpoint> {
    cfg.validate()?;
    if corpus.dim() != EMBED_DIM {
        return Err(Error::contract(format!(
            "corpus dimension {} differs from the embedding dimension {EMBED_DIM}",
            corpus.dim()
        )));
    }
    if corpus.count() < cfg.batch_size {
        return Err(Error::contract(format!(
            "corpus has {} embeddings, fewer than the batch size {}",
            corpus.count(),
            cfg.batch_size
        )));
    }
    let mut state = TrainState::init(cfg);
    let mut rng = SeededRng::new(cfg.seed);
    let data = corpus.embeddings();
    let mut acc = [0.0f64; 3];
    let mut in_window = 0u64;
    for _ in 0..cfg.steps {
        let idx = rng.sample_indices(data.rows(), cfg.batch_size);
        let real = data.select_rows(&idx);
        let m = train_step(&mut state, &real, cfg, &mut rng)?;
        acc[0] += m.transport_cost;
        acc[1] += m.critic_loss;
        acc[2] += m.generator_loss;
        in_window += 1;
        if m.step % cfg.log_every == 0 || m.step == cfg.steps {
            let k = in_window as f64;
            on_metrics(&StepMetrics {
                step: m.step,
                transport_cost: acc[0] / k,
                critic_loss: acc[1] / k,
                generator_loss: acc[2] / k,
            });
            acc = [0.0; 3];
            in_window = 0;
        }
    }
    Ok(state.into_checkpoint(cfg.clone(), corpus.content_hash()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            arch: ArchConfig {
                latent_dim: 4,
                hidden: 8,
                blocks: 1,
            },
            batch_size: 2,
            steps: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn two_sample_transport_cost_is_cheaper_assignment() {
        let cfg = tiny_cfg();
        let mut state = TrainState::init(&cfg);
        let mut rng = SeededRng::new(5);
        let mut real = Matrix::zeros(2, EMBED_DIM);
        real.set(0, 0, 1.0);
        real.set(1, 1, -2.0);
        // Reproduce the latents train_step will draw to know the fake batch.
        let mut peek = rng.clone();
        let z = sample_latent_batch(&mut peek, 2, 4);
        let fake = state.generator.generate_batch(&z).unwrap();
        let c = |i: usize, j: usize| -> f64 {
            real.row(i)
                .iter()
                .zip(fake.row(j))
                .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                .sum::<f64>()
                / (2.0 * cfg.cost_scale)
        };
        let expect = ((c(0, 0) + c(1, 1)).min(c(0, 1) + c(1, 0))) / 2.0;
        let m = train_step(&mut state, &real, &cfg, &mut rng).unwrap();
        assert!((m.transport_cost - expect).abs() < 1e-12, "{} vs {expect}", m.transport_cost);
    }

    #[test]
    fn zero_steps_return_initialization() {
        let mut cfg = tiny_cfg();
        cfg.steps = 0;
        let corpus = EmbeddingCorpus::new(SeededRng::new(1).normal_matrix(4, EMBED_DIM)).unwrap();
        let ck = train(&corpus, &cfg, |_| {}).unwrap();
        let init = TrainState::init(&cfg);
        assert_eq!(ck.generator, init.generator);
        assert_eq!(ck.critic, init.critic);
        assert_eq!(ck.step, 0);
    }

    #[test]
    fn small_corpus_rejected() {
        let mut cfg = tiny_cfg();
        cfg.batch_size = 8;
        let corpus = EmbeddingCorpus::new(Matrix::zeros(4, EMBED_DIM)).unwrap();
        assert!(matches!(train(&corpus, &cfg, |_| {}), Err(Error::Contract(_))));
    }

    #[test]
    fn critic_regression_gap_shrinks() {
        let cfg = TrainConfig {
            critic_lr: 1e-3,
            ..tiny_cfg()
        };
        let mut rng = SeededRng::new(8);
        let mut state = TrainState::init(&cfg);
        let real = rng.normal_matrix(16, EMBED_DIM);
        let fake = state.generator.generate_batch(&rng.normal_matrix(16, 4)).unwrap();
        let plan = solve_assignment(&cost_matrix(&real, &fake, cfg.cost_scale).unwrap()).unwrap();
        let before = critic_update(&mut state, &real, &fake, &plan).unwrap();
        let mut frozen = state.clone();
        let after = critic_update(&mut frozen, &real, &fake, &plan).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn divergence_reports_step() {
        let cfg = tiny_cfg();
        let mut state = TrainState::init(&cfg);
        state.step = 41;
        for p in state.generator.0.params_mut() {
            p.as_mut_slice().iter_mut().for_each(|v| *v = 1e30);
        }
        let mut rng = SeededRng::new(0);
        let real = Matrix::zeros(2, EMBED_DIM);
        match train_step(&mut state, &real, &cfg, &mut rng) {
            Err(Error::Divergence { step, .. }) => assert_eq!(step, 41),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
