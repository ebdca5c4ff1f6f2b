//! Exact discrete optimal transport between equal-size batches under the
//! scaled quadratic cost `‖x_i − y_j‖² / (2K)`.
//!
//! With uniform weights the transport problem is a linear assignment problem.
//! It is solved by shortest augmenting paths with row/column potentials
//! (Jonker-Volgenant family, O(n³)); the final potentials are the discrete
//! Kantorovich duals used as critic regression targets.

use crate::error::{Error, Result};
use crate::ndmath::Matrix;

/// Dense `n × n` cost matrix, rows indexing the real batch and columns the
/// generated batch. Entries are kept in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::shape("CostMatrix", format!("{} entries", n * n), data.len()));
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::shape("CostMatrix::from_rows", n, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// `c_ij = ‖x_i − y_j‖² / (2k)` for equally sized batches.
pub fn cost_matrix(x: &Matrix, y: &Matrix, k: f64) -> Result<CostMatrix> {
    if x.rows() != y.rows() {
        return Err(Error::contract(format!(
            "batches must have equal size, got {} real and {} generated",
            x.rows(),
            y.rows()
        )));
    }
    if x.cols() != y.cols() {
        return Err(Error::shape("cost_matrix", x.cols(), y.cols()));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::contract(format!("cost scale K must be positive, got {k}")));
    }
    let n = x.rows();
    let denom = 2.0 * k;
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        let xi = x.row(i);
        for j in 0..n {
            let d2: f64 = xi
                .iter()
                .zip(y.row(j))
                .map(|(&a, &b)| {
                    let d = a as f64 - b as f64;
                    d * d
                })
                .sum();
            data.push(d2 / denom);
        }
    }
    Ok(CostMatrix { n, data })
}

/// Optimal matching with certifying dual potentials.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    /// `assignment[i]` is the generated sample matched to real sample `i`.
    pub assignment: Vec<usize>,
    /// Potentials on the real side; gauge fixed so that `min u = 0`.
    pub u: Vec<f64>,
    /// Potentials on the generated side.
    pub v: Vec<f64>,
    /// Mean matched cost `(1/n) Σ_i c_{i,σ(i)}`.
    pub cost: f64,
}

impl TransportPlan {
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn total_cost(&self) -> f64 {
        self.cost * self.n() as f64
    }

    /// Largest violation of `u_i + v_j ≤ c_ij` (0 when feasible).
    pub fn max_feasibility_violation(&self, c: &CostMatrix) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..c.n() {
            for j in 0..c.n() {
                worst = worst.max(self.u[i] + self.v[j] - c.get(i, j));
            }
        }
        worst
    }

    /// Largest `|u_i + v_σ(i) − c_{i,σ(i)}|`.
    pub fn max_slackness_gap(&self, c: &CostMatrix) -> f64 {
        self.assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| (self.u[i] + self.v[j] - c.get(i, j)).abs())
            .fold(0.0, f64::max)
    }

    /// `|Σu + Σv − Σ c_{i,σ(i)}|`.
    pub fn duality_gap(&self, c: &CostMatrix) -> f64 {
        let dual: f64 = self.u.iter().sum::<f64>() + self.v.iter().sum::<f64>();
        let primal: f64 = self
            .assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| c.get(i, j))
            .sum();
        (dual - primal).abs()
    }
}

/// Minimum-cost perfect matching on `c`.
///
/// Rows are inserted in increasing index order; among equally short
/// augmenting paths the lowest column index wins, which fixes tie-breaking.
pub fn solve_assignment(c: &CostMatrix) -> Result<TransportPlan> {
    let n = c.n();
    if n == 0 {
        return Err(Error::contract("assignment needs at least one row"));
    }
    if let Some(pos) = c.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::contract(format!(
            "non-finite cost at ({}, {})",
            pos / n,
            pos % n
        )));
    }

    // 1-based with a virtual column 0, following the classic formulation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);

        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let ui0 = u[i0];
            let crow = c.row(i0 - 1);
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = crow[j - 1] - ui0 - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }

        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }

    let mut u: Vec<f64> = u[1..].to_vec();
    let mut v: Vec<f64> = v[1..].to_vec();
    let shift = u.iter().cloned().fold(f64::INFINITY, f64::min);
    u.iter_mut().for_each(|x| *x -= shift);
    v.iter_mut().for_each(|x| *x += shift);

    let total: f64 = assignment.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum();
    Ok(TransportPlan {
        assignment,
        u,
        v,
        cost: total / n as f64,
    })
}

/// Critic regression targets: `u_i` on real samples and `−v_j` on generated ones.
pub fn critic_targets(plan: &TransportPlan) -> (Vec<f32>, Vec<f32>) {
    (
        plan.u.iter().map(|&x| x as f32).collect(),
        plan.v.iter().map(|&x| -x as f32).collect(),
    )
}

/// Mean matched cost between two equally sized samples.
pub fn transport_distance(x: &Matrix, y: &Matrix, k: f64) -> Result<f64> {
    Ok(solve_assignment(&cost_matrix(x, y, k)?)?.cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndmath::SeededRng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn brute_force(c: &CostMatrix) -> f64 {
        permutations(c.n())
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn single_entry() {
        let c = CostMatrix::from_rows(&[vec![2.5]]).unwrap();
        let plan = solve_assignment(&c).unwrap();
        assert_eq!(plan.assignment, vec![0]);
        assert_eq!(plan.cost, 2.5);
        assert!((plan.u[0] + plan.v[0] - 2.5).abs() < 1e-12);
        assert_eq!(plan.u[0], 0.0);
    }

    #[test]
    fn three_by_three_reference() {
        let c = CostMatrix::from_rows(&[
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ])
        .unwrap();
        assert_eq!(brute_force(&c), 5.0);
        let plan = solve_assignment(&c).unwrap();
        assert_eq!(plan.assignment, vec![1, 0, 2]);
        assert_eq!(plan.total_cost(), 5.0);
        assert!((plan.cost - 5.0 / 3.0).abs() < 1e-15);
        assert!(plan.max_feasibility_violation(&c) <= 1e-12);
        assert!(plan.duality_gap(&c) < 1e-12);
    }

    #[test]
    fn matches_brute_force_up_to_seven() {
        let mut rng = SeededRng::new(21);
        for n in 1..=7 {
            for _ in 0..30 {
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..n).map(|_| rng.below(20) as f64).collect())
                    .collect();
                let c = CostMatrix::from_rows(&rows).unwrap();
                let plan = solve_assignment(&c).unwrap();
                assert_eq!(plan.total_cost(), brute_force(&c));
                assert!(plan.max_feasibility_violation(&c) <= 1e-9);
                assert!(plan.max_slackness_gap(&c) <= 1e-9);
            }
        }
    }

    #[test]
    fn hand_cost_matrix() {
        let mut x = Matrix::zeros(3, 64);
        let mut y = Matrix::zeros(3, 64);
        for i in 0..3 {
            x.set(i, 0, i as f32);
            y.set(i, 0, i as f32);
        }
        let c = cost_matrix(&x, &y, 1.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let d = i as f64 - j as f64;
                assert_eq!(c.get(i, j), d * d / 2.0);
            }
        }
    }

    #[test]
    fn scaling_is_quadratic() {
        let mut rng = SeededRng::new(2);
        let x = rng.normal_matrix(4, 8);
        let y = rng.normal_matrix(4, 8);
        let c1 = cost_matrix(&x, &y, 64.0).unwrap();
        // Power-of-two scaling is exact in f32, so the identity holds bit for bit.
        let c2 = cost_matrix(&x.scale(2.0), &y.scale(2.0), 64.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(c2.get(i, j), 4.0 * c1.get(i, j));
            }
        }
    }

    #[test]
    fn identical_batches_cost_zero() {
        let x = SeededRng::new(5).normal_matrix(16, 64);
        let c = cost_matrix(&x, &x, 64.0).unwrap();
        let plan = solve_assignment(&c).unwrap();
        assert_eq!(plan.cost, 0.0);
        let (tr, tf) = critic_targets(&plan);
        assert!(tr.iter().chain(&tf).all(|t| t.abs() < 1e-6));
    }

    #[test]
    fn rejects_bad_input() {
        let c = CostMatrix::from_rows(&[vec![1.0, f64::NAN], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(solve_assignment(&c), Err(Error::Contract(_))));
        let x = Matrix::zeros(2, 4);
        let y = Matrix::zeros(3, 4);
        assert!(matches!(cost_matrix(&x, &y, 1.0), Err(Error::Contract(_))));
    }
}
