use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for a fixed list of parameter matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Matrix>,
    pub second_moment: Vec<Matrix>,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
        Self {
            config,
            step: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.first_moment.iter().map(Matrix::shape).collect()
    }
}

/// One bias-corrected Adam update, applied in place.
pub fn adam_step(params: &mut [&mut Matrix], grads: &[Matrix], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} parameter tensors", state.first_moment.len()),
            format!("{} params, {} grads", params.len(), grads.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        let s = state.first_moment[i].shape();
        if p.shape() != s || g.shape() != s {
            return Err(Error::shape(
                "adam_step",
                format!("{s:?}"),
                format!("param {:?}, grad {:?} (tensor {i})", p.shape(), g.shape()),
            ));
        }
    }

    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let (lr, b1, b2, eps) = (lr as f64, beta1 as f64, beta2 as f64, eps as f64);
    let t = state.step as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);

    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first_moment[i].as_mut_slice();
        let v = state.second_moment[i].as_mut_slice();
        for (((pv, &gv), mv), vv) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            let gv = gv as f64;
            let m_new = b1 * *mv as f64 + (1.0 - b1) * gv;
            let v_new = b2 * *vv as f64 + (1.0 - b2) * gv * gv;
            *mv = m_new as f32;
            *vv = v_new as f32;
            let update = lr * (m_new / c1) / ((v_new / c2).sqrt() + eps);
            *pv = (*pv as f64 - update) as f32;
        }
    }
    Ok(())
}
