use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::GeneratorParams;
use crate::ganspace::{edit_and_generate, pca_projection, single_offset, DirectionBasis};
use crate::ndmath::SeededRng;

use super::probe::{BinaryProbe, ScalarProbe};

/// Width of flip-point histogram bins, in offset units.
pub const FLIP_BIN_WIDTH: f64 = 5.0;
/// Width of min/max/range histogram bins, in probe-score units.
pub const SCORE_BIN_WIDTH: f64 = 0.05;

/// Seeds and offset grid for a direction sweep. Offsets run
/// `start, start + step, …` up to and including `end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub seeds: usize,
    pub start: f64,
    pub end: f64,
    pub step: f64,
    /// Seed of the latent stream; latent `i` belongs to seed index `i`.
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seeds: 300,
            start: -50.0,
            end: 50.0,
            step: 5.0,
            seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn offsets(&self) -> Result<Vec<f64>> {
        let finite = self.start.is_finite() && self.end.is_finite() && self.step.is_finite();
        if !finite || self.step <= 0.0 {
            return Err(Error::contract("sweep step must be positive and bounds finite"));
        }
        if self.start > self.end || self.seeds == 0 {
            return Err(Error::contract(format!(
                "empty sweep: {} seeds over [{}, {}]",
                self.seeds, self.start, self.end
            )));
        }
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|i| self.start + i as f64 * self.step).collect())
    }

    /// Latent vectors of the swept seeds, in seed-index order.
    pub fn latents(&self, latent_dim: usize) -> Vec<Vec<f32>> {
        let mut rng = SeededRng::new(self.seed);
        (0..self.seeds).map(|_| rng.normal_vec(latent_dim)).collect()
    }
}

/// Equal-width bins from `start`; the last bin is closed on the right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub start: f64,
    pub width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(start: f64, end: f64, width: f64) -> Self {
        let bins = (((end - start) / width) - 1e-9).ceil().max(1.0) as usize;
        Self {
            start,
            width,
            counts: vec![0; bins],
        }
    }

    pub fn add(&mut self, v: f64) {
        let i = ((v - self.start) / self.width + 1e-9).floor().max(0.0) as usize;
        let last = self.counts.len() - 1;
        self.counts[i.min(last)] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let lo = self.start + i as f64 * self.width;
        (lo, lo + self.width)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipOrientation {
    LowToHigh,
    HighToLow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipRecord {
    pub seed: usize,
    /// First offset whose thresholded prediction differs from the one at the range start.
    pub flip_point: Option<f64>,
    pub orientation: Option<FlipOrientation>,
    /// Number of prediction changes along the sweep.
    pub transitions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipSweepReport {
    pub direction: usize,
    pub config: SweepConfig,
    pub records: Vec<FlipRecord>,
    pub histogram: Histogram,
    /// Seeds flipping each way, as fractions of all seeds.
    pub fraction_low_to_high: f64,
    pub fraction_high_to_low: f64,
    /// Seeds whose prediction changed more than once.
    pub multi_flip_seeds: usize,
}

impl FlipSweepReport {
    pub fn flipped(&self) -> usize {
        self.records.iter().filter(|r| r.flip_point.is_some()).count()
    }

    pub fn flipped_once(&self) -> usize {
        self.records.iter().filter(|r| r.transitions == 1).count()
    }

    pub fn count(&self, o: FlipOrientation) -> usize {
        self.records.iter().filter(|r| r.orientation == Some(o)).count()
    }

    /// Fraction of flip points inside the middle half of the offset range.
    pub fn central_fraction(&self) -> f64 {
        let q = (self.config.end - self.config.start) / 4.0;
        let (lo, hi) = (self.config.start + q, self.config.end - q);
        let points: Vec<f64> = self.records.iter().filter_map(|r| r.flip_point).collect();
        if points.is_empty() {
            return 0.0;
        }
        points.iter().filter(|&&p| (lo..=hi).contains(&p)).count() as f64 / points.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeRecord {
    pub seed: usize,
    pub min: f64,
    pub max: f64,
    pub range: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeSweepReport {
    pub direction: usize,
    pub config: SweepConfig,
    pub records: Vec<RangeRecord>,
    pub min_histogram: Histogram,
    pub max_histogram: Histogram,
    pub range_histogram: Histogram,
}

impl RangeSweepReport {
    pub fn mean_range(&self) -> f64 {
        self.records.iter().map(|r| r.range).sum::<f64>() / self.records.len() as f64
    }
}

/// Per-seed scores along direction `k`; rows are seeds, columns offsets.
pub fn sweep_scores(
    g: &GeneratorParams,
    basis: &DirectionBasis,
    k: usize,
    cfg: &SweepConfig,
    mut score: impl FnMut(&[f32]) -> Result<f64>,
) -> Result<Vec<Vec<f64>>> {
    let offsets = cfg.offsets()?;
    basis.direction(k)?;
    cfg.latents(g.latent_dim())
        .iter()
        .map(|z| {
            offsets
                .iter()
                .map(|&o| score(&edit_and_generate(g, z, basis, &single_offset(basis, k, o as f32)?)?))
                .collect()
        })
        .collect()
}

/// Flip points of a binary prediction thresholded at `0.5` along direction `k`.
pub fn flip_sweep(
    g: &GeneratorParams,
    basis: &DirectionBasis,
    k: usize,
    probe: &BinaryProbe,
    cfg: &SweepConfig,
) -> Result<FlipSweepReport> {
    check_dim(probe.weight.len())?;
    let scores = sweep_scores(g, basis, k, cfg, |e| probe.score(e))?;
    Ok(flip_report(k, cfg, &scores))
}

fn check_dim(d: usize) -> Result<()> {
    if d != crate::EMBED_DIM {
        return Err(Error::shape("probe dimension", crate::EMBED_DIM, d));
    }
    Ok(())
}

/// Builds a [`FlipSweepReport`] from per-seed score rows.
pub fn flip_report(k: usize, cfg: &SweepConfig, scores: &[Vec<f64>]) -> FlipSweepReport {
    let offsets = cfg.offsets().expect("scores were produced from this grid");
    let mut histogram = Histogram::new(cfg.start, cfg.end, FLIP_BIN_WIDTH);
    let mut records = Vec::with_capacity(scores.len());
    for (seed, row) in scores.iter().enumerate() {
        let pred: Vec<bool> = row.iter().map(|&s| s >= 0.5).collect();
        let transitions = pred.windows(2).filter(|w| w[0] != w[1]).count();
        let first = pred.iter().position(|&p| p != pred[0]);
        let flip_point = first.map(|i| offsets[i]);
        let orientation = first.map(|_| {
            if pred[0] {
                FlipOrientation::HighToLow
            } else {
                FlipOrientation::LowToHigh
            }
        });
        if let Some(p) = flip_point {
            histogram.add(p);
        }
        records.push(FlipRecord {
            seed,
            flip_point,
            orientation,
            transitions,
        });
    }
    let n = records.len().max(1) as f64;
    let count = |o| records.iter().filter(|r| r.orientation == Some(o)).count() as f64;
    FlipSweepReport {
        direction: k,
        config: cfg.clone(),
        fraction_low_to_high: count(FlipOrientation::LowToHigh) / n,
        fraction_high_to_low: count(FlipOrientation::HighToLow) / n,
        multi_flip_seeds: records.iter().filter(|r| r.transitions > 1).count(),
        records,
        histogram,
    }
}

/// Min, max and range of a scalar probe along direction `k`.
pub fn range_sweep(
    g: &GeneratorParams,
    basis: &DirectionBasis,
    k: usize,
    probe: &ScalarProbe,
    cfg: &SweepConfig,
) -> Result<RangeSweepReport> {
    check_dim(probe.weight.len())?;
    let scores = sweep_scores(g, basis, k, cfg, |e| probe.score(e))?;
    Ok(range_report(k, cfg, &scores))
}

/// Builds a [`RangeSweepReport`] from per-seed score rows in `[0, 1]`.
pub fn range_report(k: usize, cfg: &SweepConfig, scores: &[Vec<f64>]) -> RangeSweepReport {
    let hist = || Histogram::new(0.0, 1.0, SCORE_BIN_WIDTH);
    let (mut hmin, mut hmax, mut hrange) = (hist(), hist(), hist());
    let records: Vec<RangeRecord> = scores
        .iter()
        .enumerate()
        .map(|(seed, row)| {
            let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            hmin.add(min);
            hmax.add(max);
            hrange.add(max - min);
            RangeRecord {
                seed,
                min,
                max,
                range: max - min,
            }
        })
        .collect();
    RangeSweepReport {
        direction: k,
        config: cfg.clone(),
        records,
        min_histogram: hmin,
        max_histogram: hmax,
        range_histogram: hrange,
    }
}

/// Pearson correlation between each principal coordinate of `n` generated
/// samples and `score` of the generated embedding; one value per direction.
pub fn direction_correlations(
    g: &GeneratorParams,
    basis: &DirectionBasis,
    n: usize,
    rng: &mut SeededRng,
    mut score: impl FnMut(&[f32]) -> Result<f64>,
) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::contract("direction correlations need at least 2 samples"));
    }
    let z = rng.normal_matrix(n, g.latent_dim());
    let x = pca_projection(g, basis, &z)?;
    let e = g.generate_batch(&z)?;
    let s: Vec<f64> = (0..n).map(|r| score(e.row(r))).collect::<Result<_>>()?;
    Ok((0..basis.directions())
        .map(|k| pearson(&x.column(k).iter().map(|&v| v as f64).collect::<Vec<_>>(), &s))
        .collect())
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Index of the largest `|value|`; ties go to the lower index.
pub fn strongest(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| v.abs() > values[b].abs()) {
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seeds: usize) -> SweepConfig {
        SweepConfig {
            seeds,
            ..Default::default()
        }
    }

    #[test]
    fn default_grid_has_21_centered_offsets() {
        let o = cfg(1).offsets().unwrap();
        assert_eq!(o.len(), 21);
        assert_eq!((o[0], o[10], o[20]), (-50.0, 0.0, 50.0));
        let bad = SweepConfig {
            start: 1.0,
            end: 0.0,
            ..cfg(1)
        };
        assert!(matches!(bad.offsets(), Err(Error::Contract(_))));
    }

    #[test]
    fn constant_scores_never_flip_and_have_zero_range() {
        let c = cfg(4);
        let rows = vec![vec![0.9; 21]; 4];
        let f = flip_report(0, &c, &rows);
        assert_eq!(f.flipped(), 0);
        assert_eq!(f.histogram.total(), 0);
        let r = range_report(0, &c, &rows);
        assert!(r.records.iter().all(|x| x.range == 0.0));
    }

    #[test]
    fn flip_points_orientations_and_histogram_agree() {
        let c = cfg(3);
        let step = |at: usize, up: bool| -> Vec<f64> {
            (0..21).map(|i| if (i >= at) == up { 0.8 } else { 0.2 }).collect()
        };
        let mut bounce = step(8, true);
        bounce[15] = 0.1;
        let rows = vec![step(10, true), step(12, false), bounce];
        let f = flip_report(2, &c, &rows);
        assert_eq!(f.records[0].flip_point, Some(0.0));
        assert_eq!(f.records[0].orientation, Some(FlipOrientation::LowToHigh));
        assert_eq!(f.records[1].flip_point, Some(10.0));
        assert_eq!(f.records[1].orientation, Some(FlipOrientation::HighToLow));
        assert_eq!(f.records[2].transitions, 3);
        assert_eq!(f.multi_flip_seeds, 1);
        assert_eq!(f.flipped_once(), 2);
        assert_eq!(f.histogram.total(), f.flipped());
        assert!((f.fraction_low_to_high + f.fraction_high_to_low - 1.0).abs() < 1e-12);
        assert_eq!(f.central_fraction(), 1.0);
    }

    #[test]
    fn histogram_edges() {
        let mut h = Histogram::new(0.0, 1.0, 0.05);
        assert_eq!(h.counts.len(), 20);
        h.add(0.0);
        h.add(0.05);
        h.add(1.0);
        assert_eq!((h.counts[0], h.counts[1], h.counts[19]), (1, 1, 1));
    }

    #[test]
    fn strongest_uses_magnitude() {
        assert_eq!(strongest(&[0.1, -0.7, 0.5]), Some(1));
        assert_eq!(strongest(&[]), None);
    }
}
