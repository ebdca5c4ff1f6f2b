use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingCorpus;
use crate::error::{Error, Result};
use crate::gan::GeneratorParams;
use crate::ndmath::{Matrix, SeededRng};

/// L2 distance at or below which a generated embedding counts as a copy.
pub const DUPLICATE_TOLERANCE: f64 = 1e-6;

/// Equal-error operating point between same-speaker and cross-speaker cosine
/// similarities. A pair is accepted when its similarity exceeds `threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    /// Cross-speaker pairs accepted.
    pub false_positive_rate: f64,
    /// Same-speaker pairs rejected.
    pub false_negative_rate: f64,
    pub equal_error_rate: f64,
    pub same_pairs: usize,
    pub cross_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "value")]
pub enum ThresholdPolicy {
    Fixed(f64),
    /// Equal-error threshold calibrated on the training corpus's speaker labels.
    Calibrated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyAuditReport {
    pub generated: usize,
    pub threshold: f64,
    pub calibration: Option<Calibration>,
    /// Generated embeddings above the threshold or duplicating a training row.
    pub flagged: usize,
    /// Percentage in `[0, 100]`.
    pub error_rate: f64,
    pub duplicates: usize,
    pub nearest_similarity: SimilaritySummary,
    /// Per generated embedding, in generation order.
    pub max_similarities: Vec<f64>,
}

fn unit_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows())
        .map(|r| {
            let row: Vec<f64> = m.row(r).iter().map(|&v| v as f64).collect();
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter().map(|v| v / n).collect()
            } else {
                row
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity; `0` when either vector is zero.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        ab += x as f64 * y as f64;
        aa += x as f64 * x as f64;
        bb += y as f64 * y as f64;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

/// Equal-error threshold over all same-speaker and cross-speaker pairs.
///
/// Candidate thresholds are midpoints between consecutive distinct
/// similarities (plus the two outer limits); the chosen one minimizes
/// `max(FPR, FNR)`, then `|FPR − FNR|`, then the threshold itself.
pub fn calibrate_threshold(corpus: &EmbeddingCorpus) -> Result<Calibration> {
    let speakers = corpus
        .speakers()
        .ok_or_else(|| Error::contract("threshold calibration needs speaker labels"))?;
    let mut per: std::collections::BTreeMap<u32, usize> = Default::default();
    for &s in speakers {
        *per.entry(s).or_default() += 1;
    }
    if per.len() < 2 || per.values().filter(|&&c| c >= 2).count() < 2 {
        return Err(Error::contract(
            "threshold calibration needs at least two speakers with two or more utterances each",
        ));
    }
    let u = unit_rows(corpus.embeddings());
    let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(u.len() * (u.len() - 1) / 2);
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            pairs.push((dot(&u[i], &u[j]), speakers[i] == speakers[j]));
        }
    }
    let same_total = pairs.iter().filter(|p| p.1).count();
    let cross_total = pairs.len() - same_total;
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let rates = |same_acc: usize, cross_acc: usize| {
        (
            cross_acc as f64 / cross_total as f64,
            1.0 - same_acc as f64 / same_total as f64,
        )
    };
    let score = |fpr: f64, fnr: f64, t: f64| (fpr.max(fnr), (fpr - fnr).abs(), t);
    // Threshold above every similarity: nothing accepted.
    let mut best_t = pairs[0].0 + 1e-6;
    let (fpr, fnr) = rates(0, 0);
    let mut best = score(fpr, fnr, best_t);
    let (mut same_acc, mut cross_acc) = (0usize, 0usize);
    let mut i = 0;
    while i < pairs.len() {
        let v = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == v {
            if pairs[i].1 {
                same_acc += 1;
            } else {
                cross_acc += 1;
            }
            i += 1;
        }
        let t = if i < pairs.len() { 0.5 * (v + pairs[i].0) } else { v - 1e-6 };
        let (fpr, fnr) = rates(same_acc, cross_acc);
        let s = score(fpr, fnr, t);
        if s.0 < best.0 || (s.0 == best.0 && (s.1 < best.1 || (s.1 == best.1 && s.2 < best.2))) {
            best = s;
            best_t = t;
        }
    }
    let same_acc = pairs.iter().filter(|p| p.1 && p.0 > best_t).count();
    let cross_acc = pairs.iter().filter(|p| !p.1 && p.0 > best_t).count();
    let (fpr, fnr) = rates(same_acc, cross_acc);
    Ok(Calibration {
        threshold: best_t,
        false_positive_rate: fpr,
        false_negative_rate: fnr,
        equal_error_rate: 0.5 * (fpr + fnr),
        same_pairs: same_total,
        cross_pairs: cross_total,
    })
}

/// Audits given embeddings against `train` at `threshold`.
pub fn audit_embeddings(generated: &Matrix, train: &EmbeddingCorpus, threshold: f64) -> Result<PrivacyAuditReport> {
    if train.count() == 0 {
        return Err(Error::contract("privacy audit against an empty corpus"));
    }
    if generated.rows() == 0 {
        return Err(Error::contract("privacy audit of zero generated embeddings"));
    }
    if generated.cols() != train.dim() {
        return Err(Error::shape("privacy audit", train.dim(), generated.cols()));
    }
    let gu = unit_rows(generated);
    let tu = unit_rows(train.embeddings());
    let t = train.embeddings();
    let mut max_similarities = Vec::with_capacity(gu.len());
    let (mut flagged, mut duplicates) = (0usize, 0usize);
    for (r, g) in gu.iter().enumerate() {
        let raw = generated.row(r);
        let mut best = f64::NEG_INFINITY;
        let mut nearest = f64::INFINITY;
        for (j, tv) in tu.iter().enumerate() {
            best = best.max(dot(g, tv));
            let d2: f64 = raw.iter().zip(t.row(j)).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum();
            nearest = nearest.min(d2);
        }
        let dup = nearest.sqrt() <= DUPLICATE_TOLERANCE;
        duplicates += dup as usize;
        flagged += (best > threshold || dup) as usize;
        max_similarities.push(best);
    }
    let mut sorted = max_similarities.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
    Ok(PrivacyAuditReport {
        generated: gu.len(),
        threshold,
        calibration: None,
        flagged,
        error_rate: 100.0 * flagged as f64 / gu.len() as f64,
        duplicates,
        nearest_similarity: SimilaritySummary {
            min: sorted[0],
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            median: q(0.5),
            p95: q(0.95),
            max: sorted[sorted.len() - 1],
        },
        max_similarities,
    })
}

/// Generates `n` embeddings from `seed` and audits them against `train`.
pub fn privacy_audit(
    g: &GeneratorParams,
    train: &EmbeddingCorpus,
    n: usize,
    policy: &ThresholdPolicy,
    seed: u64,
) -> Result<PrivacyAuditReport> {
    if train.count() == 0 {
        return Err(Error::contract("privacy audit against an empty corpus"));
    }
    if n == 0 {
        return Err(Error::contract("privacy audit needs at least one generated embedding"));
    }
    let (threshold, calibration) = match policy {
        ThresholdPolicy::Fixed(t) => (*t, None),
        ThresholdPolicy::Calibrated => {
            let c = calibrate_threshold(train)?;
            (c.threshold, Some(c))
        }
    };
    let z = SeededRng::new(seed).normal_matrix(n, g.latent_dim());
    let e = g.generate_batch(&z)?;
    let mut report = audit_embeddings(&e, train, threshold)?;
    report.calibration = calibration;
    Ok(report)
}
