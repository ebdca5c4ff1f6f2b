use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndmath::{Matrix, SeededRng};
use crate::EMBED_DIM;

use super::{AttributeValues, EmbeddingCorpus};

pub const BINARY_ATTRIBUTE: &str = "planted_binary";
pub const SCALAR_ATTRIBUTE: &str = "planted_scalar";

/// Parameters of the synthetic speaker corpus.
///
/// Speaker centres are Gaussian (`mean_scale` per dimension) restricted to the
/// orthogonal complement of the two planted directions. Each speaker carries a
/// binary attribute that shifts its centre by `±margin · g`; each utterance
/// carries a scalar attribute `s ~ U[0, 1]` added as `s · slope · a`, plus
/// isotropic noise of scale `noise_scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticCorpusSpec {
    pub speakers: usize,
    pub utterances_per_speaker: usize,
    pub mean_scale: f32,
    pub noise_scale: f32,
    pub margin: f32,
    pub slope: f32,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            speakers: 10,
            utterances_per_speaker: 200,
            mean_scale: 0.5,
            noise_scale: 0.3,
            margin: 0.9,
            slope: 4.0,
            seed: 0,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.speakers == 0 || self.utterances_per_speaker == 0 {
            return Err(Error::contract("synthetic corpus needs at least one speaker and one utterance"));
        }
        let finite_pos = |v: f32| v.is_finite() && v > 0.0;
        if !finite_pos(self.mean_scale) || !finite_pos(self.noise_scale) {
            return Err(Error::contract("mean_scale and noise_scale must be positive"));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0 && self.slope.is_finite() && self.slope >= 0.0) {
            return Err(Error::contract("margin and slope must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Ground-truth attribute axes of a synthetic corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedDirections {
    /// Binary attribute axis `g` (unit length).
    pub binary: Vec<f32>,
    /// Scalar attribute axis `a` (unit length, orthogonal to `g`).
    pub scalar: Vec<f32>,
}

fn unit(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn draw_directions(rng: &mut SeededRng) -> (Vec<f64>, Vec<f64>) {
    let mut g: Vec<f64> = (0..EMBED_DIM).map(|_| rng.normal()).collect();
    unit(&mut g);
    let mut a: Vec<f64> = (0..EMBED_DIM).map(|_| rng.normal()).collect();
    let p = dot(&a, &g);
    a.iter_mut().zip(&g).for_each(|(x, gi)| *x -= p * gi);
    unit(&mut a);
    (g, a)
}

impl PlantedDirections {
    pub fn for_spec(spec: &SyntheticCorpusSpec) -> Self {
        let (g, a) = draw_directions(&mut SeededRng::new(spec.seed));
        Self {
            binary: g.iter().map(|&x| x as f32).collect(),
            scalar: a.iter().map(|&x| x as f32).collect(),
        }
    }
}

pub fn generate_synthetic_corpus(spec: &SyntheticCorpusSpec) -> Result<EmbeddingCorpus> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let (g, a) = draw_directions(&mut rng);

    let mut order: Vec<usize> = (0..spec.speakers).collect();
    rng.shuffle(&mut order);
    let mut speaker_class = vec![false; spec.speakers];
    for &s in order.iter().take(spec.speakers.div_ceil(2)) {
        speaker_class[s] = true;
    }

    let centres: Vec<Vec<f64>> = (0..spec.speakers)
        .map(|s| {
            let mut c: Vec<f64> = (0..EMBED_DIM).map(|_| rng.normal() * spec.mean_scale as f64).collect();
            let (pg, pa) = (dot(&c, &g), dot(&c, &a));
            for i in 0..EMBED_DIM {
                c[i] -= pg * g[i] + pa * a[i];
            }
            let shift = if speaker_class[s] { spec.margin } else { -spec.margin } as f64;
            c.iter_mut().zip(&g).for_each(|(x, gi)| *x += shift * gi);
            c
        })
        .collect();

    let n = spec.speakers * spec.utterances_per_speaker;
    let mut data = Vec::with_capacity(n * EMBED_DIM);
    let mut speakers = Vec::with_capacity(n);
    let mut binary = Vec::with_capacity(n);
    let mut scalar = Vec::with_capacity(n);
    for (s, centre) in centres.iter().enumerate() {
        for _ in 0..spec.utterances_per_speaker {
            let value = rng.uniform();
            for i in 0..EMBED_DIM {
                let x = centre[i] + value * spec.slope as f64 * a[i] + rng.normal() * spec.noise_scale as f64;
                data.push(x as f32);
            }
            speakers.push(s as u32);
            binary.push(speaker_class[s]);
            scalar.push(value as f32);
        }
    }

    EmbeddingCorpus::new(Matrix::from_vec(n, EMBED_DIM, data)?)?
        .with_speakers(speakers)?
        .with_attribute(BINARY_ATTRIBUTE, AttributeValues::Binary(binary))?
        .with_attribute(SCALAR_ATTRIBUTE, AttributeValues::Scalar(scalar))
}
