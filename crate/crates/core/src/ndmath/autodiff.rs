//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! Operations are appended in evaluation order, so the tape is already a
//! topological order and `backward` is a single reverse sweep.

use crate::error::{Error, Result};

use super::Matrix;

/// Negative slope of the leaky rectifier used throughout the networks.
pub const LEAKY_SLOPE: f32 = 0.2;

/// Handle to a value recorded on a [`GradientRecord`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    /// Differentiable input (a parameter).
    Param,
    /// Input held fixed; no gradient flows into it.
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    LeakyRelu(Var, f32),
    MeanSquare(Var, Matrix),
    Mean(Var),
    Sum(Var),
    Scale(Var, f32),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Matrix,
    needs_grad: bool,
}

/// Ordered record of primitive operations and their outputs.
#[derive(Clone, Debug, Default)]
pub struct GradientRecord {
    nodes: Vec<Node>,
}

impl GradientRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(Op::Param, value, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Constant, value, false)
    }

    fn push(&mut self, op: Op, value: Matrix, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul(a, b), value, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), value, ng))
    }

    /// Adds the `1 × c` row `bias` to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let value = self.value(x).add_row(self.value(bias))?;
        let ng = self.needs(x) || self.needs(bias);
        Ok(self.push(Op::AddRow(x, bias), value, ng))
    }

    pub fn leaky_relu(&mut self, x: Var) -> Var {
        let value = leaky_relu(self.value(x), LEAKY_SLOPE);
        let ng = self.needs(x);
        self.push(Op::LeakyRelu(x, LEAKY_SLOPE), value, ng)
    }

    /// `mean((x - target)²)` as a `1 × 1` value.
    pub fn mean_square(&mut self, x: Var, target: &Matrix) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != target.shape() {
            return Err(Error::shape(
                "mean_square",
                format!("{:?}", xv.shape()),
                format!("{:?}", target.shape()),
            ));
        }
        let value = Matrix::from_raw(1, 1, vec![mean_square(xv, target) as f32]);
        let ng = self.needs(x);
        Ok(self.push(Op::MeanSquare(x, target.clone()), value, ng))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let value = Matrix::from_raw(1, 1, vec![self.value(x).mean() as f32]);
        let ng = self.needs(x);
        self.push(Op::Mean(x), value, ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::from_raw(1, 1, vec![self.value(x).sum() as f32]);
        let ng = self.needs(x);
        self.push(Op::Sum(x), value, ng)
    }

    pub fn scale(&mut self, x: Var, s: f32) -> Var {
        let value = self.value(x).scale(s);
        let ng = self.needs(x);
        self.push(Op::Scale(x, s), value, ng)
    }

    /// Recomputes every recorded value from the inputs and returns them in
    /// tape order.
    pub fn replay(&self) -> Vec<Matrix> {
        let mut values: Vec<Matrix> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Param | Op::Constant => node.value.clone(),
                Op::MatMul(a, b) => values[a.0].matmul_unchecked(&values[b.0]),
                Op::Add(a, b) => values[a.0].zip_map(&values[b.0], |x, y| x + y),
                Op::AddRow(x, b) => values[x.0]
                    .add_row(&values[b.0])
                    .expect("recorded shapes agree"),
                Op::LeakyRelu(x, s) => leaky_relu(&values[x.0], *s),
                Op::MeanSquare(x, t) => {
                    Matrix::from_raw(1, 1, vec![mean_square(&values[x.0], t) as f32])
                }
                Op::Mean(x) => Matrix::from_raw(1, 1, vec![values[x.0].mean() as f32]),
                Op::Sum(x) => Matrix::from_raw(1, 1, vec![values[x.0].sum() as f32]),
                Op::Scale(x, s) => values[x.0].scale(*s),
            };
            values.push(v);
        }
        values
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Param | Op::Constant => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let ga = g.matmul_unchecked(&self.value(*b).transpose());
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let gb = self.value(*a).transpose().matmul_unchecked(&g);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::AddRow(x, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.column_sums());
                    }
                    if self.needs(*x) {
                        accumulate(&mut grads, *x, g);
                    }
                }
                Op::LeakyRelu(x, s) => {
                    let s = *s;
                    let gx = g.zip_map(self.value(*x), |gv, xv| if xv > 0.0 { gv } else { gv * s });
                    accumulate(&mut grads, *x, gx);
                }
                Op::MeanSquare(x, t) => {
                    let xv = self.value(*x);
                    let coef = 2.0 * g.get(0, 0) as f64 / xv.len() as f64;
                    let gx = xv.zip_map(t, |a, b| (coef * (a as f64 - b as f64)) as f32);
                    accumulate(&mut grads, *x, gx);
                }
                Op::Mean(x) => {
                    let xv = self.value(*x);
                    let v = g.get(0, 0) / xv.len() as f32;
                    accumulate(&mut grads, *x, Matrix::filled(xv.rows(), xv.cols(), v));
                }
                Op::Sum(x) => {
                    let xv = self.value(*x);
                    accumulate(&mut grads, *x, Matrix::filled(xv.rows(), xv.cols(), g.get(0, 0)));
                }
                Op::Scale(x, s) => {
                    accumulate(&mut grads, *x, g.scale(*s));
                }
            }
        }

        // Only differentiable inputs keep their gradients.
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !matches!(node.op, Op::Param) {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign_unchecked(&g),
        slot @ None => *slot = Some(g),
    }
}

fn leaky_relu(x: &Matrix, slope: f32) -> Matrix {
    x.map(|v| if v > 0.0 { v } else { v * slope })
}

fn mean_square(x: &Matrix, t: &Matrix) -> f64 {
    let s: f64 = x
        .as_slice()
        .iter()
        .zip(t.as_slice())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    s / x.len() as f64
}

/// Gradients of a loss with respect to each [`GradientRecord::param`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for `v`; `None` when `v` is not a parameter or does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Takes the gradient for parameter `v`, substituting zeros of `shape`
    /// when the loss does not depend on it.
    pub fn take_or_zeros(&mut self, v: Var, shape: (usize, usize)) -> Matrix {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndmath::SeededRng;

    #[test]
    fn linear_sum_gradient_is_broadcast_input() {
        let mut rec = GradientRecord::new();
        let x = Matrix::from_vec(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        let xv = rec.constant(x.clone());
        let w = rec.param(Matrix::from_vec(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap());
        let y = rec.matmul(xv, w).unwrap();
        let l = rec.sum(y);
        let g = rec.backward(l).unwrap();
        let gw = g.get(w).unwrap();
        for r in 0..3 {
            for c in 0..2 {
                assert_eq!(gw.get(r, c), x.get(0, r));
            }
        }
        assert!(g.get(xv).is_none());
    }

    #[test]
    fn mean_square_gradient_matches_formula() {
        let mut rng = SeededRng::new(3);
        let xm = rng.normal_matrix(4, 3);
        let wm = rng.normal_matrix(3, 2);
        let t = rng.normal_matrix(4, 2);
        let mut rec = GradientRecord::new();
        let x = rec.constant(xm.clone());
        let w = rec.param(wm.clone());
        let y = rec.matmul(x, w).unwrap();
        let l = rec.mean_square(y, &t).unwrap();
        let g = rec.backward(l).unwrap();
        // 2/n · xᵀ(xW − t)
        let resid = xm.matmul(&wm).unwrap().sub(&t).unwrap();
        let expect = xm.transpose().matmul(&resid).unwrap().scale(2.0 / 8.0);
        for (a, b) in g.get(w).unwrap().as_slice().iter().zip(expect.as_slice()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut rec = GradientRecord::new();
        let w = rec.param(Matrix::zeros(2, 2));
        assert!(matches!(rec.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn replay_is_bit_exact() {
        let mut rng = SeededRng::new(9);
        let mut rec = GradientRecord::new();
        let x = rec.constant(rng.normal_matrix(5, 4));
        let w = rec.param(rng.normal_matrix(4, 3));
        let b = rec.param(rng.normal_matrix(1, 3));
        let h = rec.matmul(x, w).unwrap();
        let h = rec.add_row(h, b).unwrap();
        let h = rec.leaky_relu(h);
        let h2 = rec.scale(h, 0.5);
        let h = rec.add(h, h2).unwrap();
        let m = rec.mean(h);
        let replayed = rec.replay();
        assert_eq!(replayed.len(), rec.len());
        for (i, v) in replayed.iter().enumerate() {
            assert_eq!(v, rec.value(Var(i)));
        }
        assert_eq!(replayed[m.index()].get(0, 0).to_bits(), rec.value(m).get(0, 0).to_bits());
    }
}
