//! Redundancy-reduction objective over paired feature batches, the random
//! window sampler that produces such pairs, and the L1 pair distance.

use crate::error::{Error, Result};
use crate::ndmath::{Matrix, SeededRng};

/// Off-diagonal weight λ.
pub const DEFAULT_LAMBDA: f64 = 5e-3;
/// Upper bound of the default window length.
pub const WINDOW_CAP: usize = 128;

/// `T × F` sequence of feature frames.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence(Matrix);

impl FeatureSequence {
    pub fn new(frames: Matrix) -> Result<Self> {
        if frames.rows() == 0 {
            return Err(Error::contract("feature sequence needs at least one frame"));
        }
        if !frames.is_finite() {
            return Err(Error::contract("feature sequence must be finite"));
        }
        Ok(Self(frames))
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn features(&self) -> usize {
        self.0.cols()
    }

    pub fn frames(&self) -> &Matrix {
        &self.0
    }

    /// Half the sequence length, at least 1 and at most [`WINDOW_CAP`].
    pub fn default_window(&self) -> usize {
        (self.len() / 2).clamp(1, WINDOW_CAP)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowPair {
    pub first: Matrix,
    pub second: Matrix,
    pub first_start: usize,
    pub second_start: usize,
}

/// Two windows of length `w` with independent uniform starts in `[0, T − w]`.
pub fn sample_window_pair(seq: &FeatureSequence, w: usize, rng: &mut SeededRng) -> Result<WindowPair> {
    if w == 0 || w > seq.len() {
        return Err(Error::contract(format!("window length {w} not in 1..={}", seq.len())));
    }
    let positions = seq.len() - w + 1;
    let first_start = rng.below(positions);
    let second_start = rng.below(positions);
    let window = |s: usize| seq.0.select_rows(&(s..s + w).collect::<Vec<_>>());
    Ok(WindowPair {
        first: window(first_start),
        second: window(second_start),
        first_start,
        second_start,
    })
}

/// Column-standardized copy (population variance) and per-column standard deviations.
fn standardize(x: &Matrix) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let (n, f) = x.shape();
    let mut cols = vec![vec![0.0f64; n]; f];
    let mut stds = Vec::with_capacity(f);
    for (j, col) in cols.iter_mut().enumerate() {
        let mean = (0..n).map(|i| x.get(i, j) as f64).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x.get(i, j) as f64 - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if !(std > 1e-12 * (1.0 + mean.abs())) {
            return Err(Error::degenerate(format!("feature {j} has zero variance across the batch")));
        }
        for (i, c) in col.iter_mut().enumerate() {
            *c = (x.get(i, j) as f64 - mean) / std;
        }
        stds.push(std);
    }
    Ok((cols, stds))
}

fn check_pair(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "barlow_twins_loss",
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    if a.rows() < 2 {
        return Err(Error::contract("barlow_twins_loss needs at least 2 rows"));
    }
    Ok(())
}

/// Cross-correlation `C = âᵀ b̂ / n` of the standardized batches.
fn correlation(ha: &[Vec<f64>], hb: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    ha.iter()
        .map(|ca| hb.iter().map(|cb| ca.iter().zip(cb).map(|(x, y)| x * y).sum::<f64>() / n as f64).collect())
        .collect()
}

fn loss_of(c: &[Vec<f64>], lambda: f64) -> f64 {
    let mut l = 0.0;
    for (i, row) in c.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            l += if i == j { (1.0 - v).powi(2) } else { lambda * v * v };
        }
    }
    l
}

/// `Σ_i (1 − C_ii)² + λ Σ_{i≠j} C_ij²` with `C` the cross-correlation of the
/// per-dimension standardized batches.
pub fn barlow_twins_loss(a: &Matrix, b: &Matrix, lambda: f64) -> Result<f64> {
    check_pair(a, b)?;
    let (ha, _) = standardize(a)?;
    let (hb, _) = standardize(b)?;
    Ok(loss_of(&correlation(&ha, &hb, a.rows()), lambda))
}

/// Loss together with its gradients with respect to `a` and `b`.
pub fn barlow_twins_loss_grad(a: &Matrix, b: &Matrix, lambda: f64) -> Result<(f64, Matrix, Matrix)> {
    check_pair(a, b)?;
    let n = a.rows();
    let (ha, sa) = standardize(a)?;
    let (hb, sb) = standardize(b)?;
    let c = correlation(&ha, &hb, n);
    let loss = loss_of(&c, lambda);
    let f = c.len();
    // dL/dC
    let g: Vec<Vec<f64>> = (0..f)
        .map(|i| {
            (0..f)
                .map(|j| if i == j { -2.0 * (1.0 - c[i][j]) } else { 2.0 * lambda * c[i][j] })
                .collect()
        })
        .collect();
    // dL/dâ_{ri} = Σ_j G_ij b̂_{rj} / n ;  dL/db̂_{rj} = Σ_i G_ij â_{ri} / n
    let ga: Vec<Vec<f64>> = (0..f)
        .map(|i| (0..n).map(|r| (0..f).map(|j| g[i][j] * hb[j][r]).sum::<f64>() / n as f64).collect())
        .collect();
    let gb: Vec<Vec<f64>> = (0..f)
        .map(|j| (0..n).map(|r| (0..f).map(|i| g[i][j] * ha[i][r]).sum::<f64>() / n as f64).collect())
        .collect();
    Ok((loss, unstandardize(&ga, &ha, &sa), unstandardize(&gb, &hb, &sb)))
}

/// Pulls column gradients back through `x̂ = (x − μ)/σ`:
/// `dx = (g − mean(g) − x̂ · mean(g ⊙ x̂)) / σ`.
fn unstandardize(g: &[Vec<f64>], hat: &[Vec<f64>], std: &[f64]) -> Matrix {
    let n = hat[0].len();
    let f = hat.len();
    let mut out = Matrix::zeros(n, f);
    for j in 0..f {
        let mg = g[j].iter().sum::<f64>() / n as f64;
        let mgx = g[j].iter().zip(&hat[j]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        for r in 0..n {
            out.set(r, j, ((g[j][r] - mg - hat[j][r] * mgx) / std[j]) as f32);
        }
    }
    out
}

/// `Σ |a_i − b_i|`.
pub fn l1_pair_distance(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("l1_pair_distance", a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).abs()).sum())
}
