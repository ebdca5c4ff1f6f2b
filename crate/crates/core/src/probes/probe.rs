use serde::{Deserialize, Serialize};

use crate::corpus::{AttributeValues, EmbeddingCorpus};
use crate::error::{Error, Result};
use crate::ndmath::{least_squares, Matrix, Regularization, SeededRng};

const MIN_PROBE_SAMPLES: usize = 20;
const LOGISTIC_ITERS: usize = 1000;
const LOGISTIC_LR: f64 = 0.5;
const LOGISTIC_L2: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeMeta {
    pub attribute: String,
    /// Hex content hash of the corpus the probe was fitted on.
    pub corpus_fingerprint: String,
    pub heldout_fraction: f64,
    pub train_count: usize,
    pub heldout_count: usize,
    pub seed: u64,
}

/// Logistic probe: `σ(w·e + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryProbe {
    pub weight: Vec<f32>,
    pub bias: f32,
    pub heldout_accuracy: f64,
    pub meta: ProbeMeta,
}

/// Linear regressor clamped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarProbe {
    pub weight: Vec<f32>,
    pub bias: f32,
    pub heldout_mae: f64,
    pub heldout_r2: f64,
    pub meta: ProbeMeta,
}

fn linear(weight: &[f32], bias: f32, e: &[f32]) -> Result<f64> {
    if e.len() != weight.len() {
        return Err(Error::shape("probe input", weight.len(), e.len()));
    }
    Ok(bias as f64 + weight.iter().zip(e).map(|(w, x)| *w as f64 * *x as f64).sum::<f64>())
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl BinaryProbe {
    /// Pre-sigmoid score.
    pub fn logit(&self, e: &[f32]) -> Result<f64> {
        linear(&self.weight, self.bias, e)
    }

    /// Probability of the positive class, in `(0, 1)`.
    pub fn score(&self, e: &[f32]) -> Result<f64> {
        Ok(sigmoid(self.logit(e)?))
    }

    pub fn predict(&self, e: &[f32]) -> Result<bool> {
        Ok(self.score(e)? >= 0.5)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("probe serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format(e.column(), format!("binary probe JSON: {e}")))
    }
}

impl ScalarProbe {
    pub fn score(&self, e: &[f32]) -> Result<f64> {
        Ok(linear(&self.weight, self.bias, e)?.clamp(0.0, 1.0))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("probe serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format(e.column(), format!("scalar probe JSON: {e}")))
    }
}

/// Seeded train/held-out split; held-out indices first.
fn split(count: usize, heldout_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(heldout_fraction > 0.0 && heldout_fraction < 1.0) {
        return Err(Error::contract(format!("held-out fraction {heldout_fraction} not in (0, 1)")));
    }
    if count < MIN_PROBE_SAMPLES {
        return Err(Error::contract(format!(
            "probe fitting needs at least {MIN_PROBE_SAMPLES} labelled embeddings, got {count}"
        )));
    }
    let mut idx: Vec<usize> = (0..count).collect();
    SeededRng::new(seed).shuffle(&mut idx);
    let held = ((count as f64 * heldout_fraction).round() as usize).clamp(1, count - 1);
    let train = idx.split_off(held);
    Ok((train, idx))
}

fn meta(corpus: &EmbeddingCorpus, attribute: &str, f: f64, train: usize, held: usize, seed: u64) -> ProbeMeta {
    ProbeMeta {
        attribute: attribute.to_string(),
        corpus_fingerprint: corpus.content_hash().to_hex(),
        heldout_fraction: f,
        train_count: train,
        heldout_count: held,
        seed,
    }
}

/// Logistic regression by full-batch gradient descent on standardized
/// features; the standardization is folded back into `w` and `b`.
pub fn fit_binary_probe(
    corpus: &EmbeddingCorpus,
    attribute: &str,
    heldout_fraction: f64,
    seed: u64,
) -> Result<BinaryProbe> {
    let labels = match corpus.attribute(attribute) {
        Some(AttributeValues::Binary(v)) => v,
        Some(_) => return Err(Error::contract(format!("attribute {attribute:?} is not binary"))),
        None => return Err(Error::contract(format!("corpus has no attribute {attribute:?}"))),
    };
    let (train, held) = split(corpus.count(), heldout_fraction, seed)?;
    let positives = train.iter().filter(|&&i| labels[i]).count();
    if positives == 0 || positives == train.len() {
        return Err(Error::contract(format!("attribute {attribute:?} has a single class in the training split")));
    }

    let x = corpus.embeddings();
    let d = x.cols();
    let n = train.len() as f64;
    let (mean, std) = moments(x, &train);
    let feats: Vec<Vec<f64>> = train
        .iter()
        .map(|&i| (0..d).map(|j| (x.get(i, j) as f64 - mean[j]) / std[j]).collect())
        .collect();
    let y: Vec<f64> = train.iter().map(|&i| labels[i] as u8 as f64).collect();

    let mut w = vec![0.0f64; d];
    let mut b = 0.0f64;
    for _ in 0..LOGISTIC_ITERS {
        let mut gw = vec![0.0f64; d];
        let mut gb = 0.0;
        for (f, &t) in feats.iter().zip(&y) {
            let r = sigmoid(b + f.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>()) - t;
            gb += r;
            gw.iter_mut().zip(f).for_each(|(g, a)| *g += r * a);
        }
        for (wj, gj) in w.iter_mut().zip(&gw) {
            *wj -= LOGISTIC_LR * (gj / n + LOGISTIC_L2 * *wj);
        }
        b -= LOGISTIC_LR * gb / n;
    }

    let weight: Vec<f32> = w.iter().zip(&std).map(|(wj, s)| (wj / s) as f32).collect();
    let bias = (b - w.iter().zip(&mean).zip(&std).map(|((wj, m), s)| wj * m / s).sum::<f64>()) as f32;
    let mut probe = BinaryProbe {
        weight,
        bias,
        heldout_accuracy: 0.0,
        meta: meta(corpus, attribute, heldout_fraction, train.len(), held.len(), seed),
    };
    let correct = held
        .iter()
        .filter(|&&i| probe.predict(x.row(i)).map(|p| p == labels[i]).unwrap_or(false))
        .count();
    probe.heldout_accuracy = correct as f64 / held.len() as f64;
    Ok(probe)
}

/// Least-squares linear fit of a `[0, 1]` attribute.
pub fn fit_scalar_probe(
    corpus: &EmbeddingCorpus,
    attribute: &str,
    heldout_fraction: f64,
    seed: u64,
) -> Result<ScalarProbe> {
    let labels = match corpus.attribute(attribute) {
        Some(AttributeValues::Scalar(v)) => v,
        Some(_) => return Err(Error::contract(format!("attribute {attribute:?} is not scalar"))),
        None => return Err(Error::contract(format!("corpus has no attribute {attribute:?}"))),
    };
    let (train, held) = split(corpus.count(), heldout_fraction, seed)?;
    let x = corpus.embeddings();
    let d = x.cols();
    let mut design = Matrix::zeros(train.len(), d + 1);
    let mut target = Matrix::zeros(train.len(), 1);
    for (r, &i) in train.iter().enumerate() {
        design.row_mut(r)[..d].copy_from_slice(x.row(i));
        design.set(r, d, 1.0);
        target.set(r, 0, labels[i]);
    }
    let coef = least_squares(&design, &target, Regularization::Auto)?;
    let mut probe = ScalarProbe {
        weight: coef.row(0)[..d].to_vec(),
        bias: coef.get(0, d),
        heldout_mae: 0.0,
        heldout_r2: 0.0,
        meta: meta(corpus, attribute, heldout_fraction, train.len(), held.len(), seed),
    };
    let truth: Vec<f64> = held.iter().map(|&i| labels[i] as f64).collect();
    let pred: Vec<f64> = held.iter().map(|&i| probe.score(x.row(i))).collect::<Result<_>>()?;
    let m = truth.iter().sum::<f64>() / truth.len() as f64;
    let sse: f64 = truth.iter().zip(&pred).map(|(t, p)| (t - p).powi(2)).sum();
    let sst: f64 = truth.iter().map(|t| (t - m).powi(2)).sum();
    probe.heldout_mae = truth.iter().zip(&pred).map(|(t, p)| (t - p).abs()).sum::<f64>() / truth.len() as f64;
    probe.heldout_r2 = if sst > 0.0 { 1.0 - sse / sst } else { 0.0 };
    Ok(probe)
}

fn moments(x: &Matrix, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let d = x.cols();
    let n = rows.len() as f64;
    let mut mean = vec![0.0f64; d];
    for &i in rows {
        mean.iter_mut().zip(x.row(i)).for_each(|(m, v)| *m += *v as f64 / n);
    }
    let mut var = vec![0.0f64; d];
    for &i in rows {
        var.iter_mut()
            .zip(x.row(i))
            .zip(&mean)
            .for_each(|((s, v), m)| *s += (*v as f64 - m).powi(2) / n);
    }
    // Constant features keep unit scale.
    let std = var.iter().map(|v| if *v > 1e-12 { v.sqrt() } else { 1.0 }).collect();
    (mean, std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SyntheticCorpusSpec, BINARY_ATTRIBUTE, SCALAR_ATTRIBUTE};

    fn corpus() -> EmbeddingCorpus {
        generate_synthetic_corpus(&SyntheticCorpusSpec {
            speakers: 10,
            utterances_per_speaker: 60,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn planted_binary_attribute_is_learned() {
        let p = fit_binary_probe(&corpus(), BINARY_ATTRIBUTE, 0.25, 0).unwrap();
        assert!(p.heldout_accuracy >= 0.95, "{}", p.heldout_accuracy);
    }

    #[test]
    fn shuffled_labels_give_chance_accuracy() {
        // Labels independent of the embeddings.
        let c = corpus();
        let mut rng = SeededRng::new(77);
        let labels: Vec<bool> = (0..c.count()).map(|_| rng.uniform() < 0.5).collect();
        let c = c.with_attribute("noise", AttributeValues::Binary(labels)).unwrap();
        let p = fit_binary_probe(&c, "noise", 0.5, 1).unwrap();
        assert!((p.heldout_accuracy - 0.5).abs() <= 0.1, "{}", p.heldout_accuracy);
    }

    #[test]
    fn single_class_rejected() {
        let c = EmbeddingCorpus::new(SeededRng::new(2).normal_matrix(40, 4))
            .unwrap()
            .with_attribute("b", AttributeValues::Binary(vec![true; 40]))
            .unwrap();
        assert!(matches!(fit_binary_probe(&c, "b", 0.25, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn scalar_probe_fits_and_clamps() {
        let p = fit_scalar_probe(&corpus(), SCALAR_ATTRIBUTE, 0.25, 0).unwrap();
        assert!(p.heldout_r2 > 0.8, "{}", p.heldout_r2);
        assert_eq!(p.score(&[1e6; 64]).unwrap().clamp(0.0, 1.0), p.score(&[1e6; 64]).unwrap());
    }

    #[test]
    fn json_round_trip_preserves_predictions() {
        let c = corpus();
        let b = fit_binary_probe(&c, BINARY_ATTRIBUTE, 0.25, 3).unwrap();
        let s = fit_scalar_probe(&c, SCALAR_ATTRIBUTE, 0.25, 3).unwrap();
        let b2 = BinaryProbe::from_json(&b.to_json()).unwrap();
        let s2 = ScalarProbe::from_json(&s.to_json()).unwrap();
        assert_eq!(b2, b);
        assert_eq!(s2, s);
        for r in 0..20 {
            let e = c.embeddings().row(r);
            assert_eq!(b.score(e).unwrap(), b2.score(e).unwrap());
            assert_eq!(s.score(e).unwrap(), s2.score(e).unwrap());
        }
    }
}
