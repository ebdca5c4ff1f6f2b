//! Tape gradients against central differences of an independent f64 forward pass.

use speakgen::gan::ResMlp;
use speakgen::ndmath::{GradientRecord, Matrix, SeededRng, LEAKY_SLOPE};

type M64 = Vec<Vec<f64>>;

fn to64(m: &Matrix) -> M64 {
    (0..m.rows()).map(|r| m.row(r).iter().map(|&v| v as f64).collect()).collect()
}

fn affine(x: &M64, w: &M64, b: &M64) -> M64 {
    x.iter()
        .map(|row| {
            (0..w[0].len())
                .map(|j| b[0][j] + row.iter().enumerate().map(|(i, v)| v * w[i][j]).sum::<f64>())
                .collect()
        })
        .collect()
}

fn lrelu(x: &M64) -> M64 {
    let s = LEAKY_SLOPE as f64;
    x.iter().map(|r| r.iter().map(|&v| if v > 0.0 { v } else { s * v }).collect()).collect()
}

/// Oracle forward pass; `p` in input, blocks, output order.
fn forward(p: &[M64], x: &M64) -> M64 {
    let mut h = lrelu(&affine(x, &p[0], &p[1]));
    let blocks = (p.len() - 4) / 4;
    for k in 0..blocks {
        let o = 2 + 4 * k;
        let t = affine(&lrelu(&affine(&h, &p[o], &p[o + 1])), &p[o + 2], &p[o + 3]);
        for (hr, tr) in h.iter_mut().zip(&t) {
            hr.iter_mut().zip(tr).for_each(|(a, b)| *a += b);
        }
    }
    affine(&h, &p[p.len() - 2], &p[p.len() - 1])
}

fn mse(y: &M64, t: &M64) -> f64 {
    let n = (y.len() * y[0].len()) as f64;
    y.iter().flatten().zip(t.iter().flatten()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n
}

fn random_net(rng: &mut SeededRng, in_dim: usize, hidden: usize, blocks: usize, out: usize) -> ResMlp {
    let mut net = ResMlp::init(in_dim, hidden, blocks, out, rng);
    // Non-zero biases so that every bias gradient path is exercised.
    for m in net.params_mut() {
        if m.rows() == 1 {
            for v in m.as_mut_slice() {
                *v = (rng.normal() * 0.3) as f32;
            }
        }
    }
    net
}

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 2e-3 * numeric.abs().max(analytic.abs()) + 2e-4
}

/// Checks every parameter entry of `net` under `loss(params)`.
fn check(net: &ResMlp, tape: &[Matrix], loss: impl Fn(&[M64]) -> f64) {
    let base: Vec<M64> = net.params().into_iter().map(to64).collect();
    let eps = 1e-5;
    let mut checked = 0;
    for (pi, g) in tape.iter().enumerate() {
        for r in 0..g.rows() {
            for c in 0..g.cols() {
                let mut plus = base.clone();
                plus[pi][r][c] += eps;
                let mut minus = base.clone();
                minus[pi][r][c] -= eps;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                let analytic = g.get(r, c) as f64;
                assert!(
                    close(analytic, numeric),
                    "param {pi} entry ({r},{c}): tape {analytic}, finite difference {numeric}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn regression_loss_gradient_matches_finite_differences() {
    let mut rng = SeededRng::new(21);
    let net = random_net(&mut rng, 5, 7, 2, 3);
    let x = rng.normal_matrix(6, 5);
    let t = rng.normal_matrix(6, 3);

    let mut rec = GradientRecord::new();
    let xv = rec.constant(x.clone());
    let (y, vars) = net.record(&mut rec, xv, true).unwrap();
    let l = rec.mean_square(y, &t).unwrap();
    let mut grads = rec.backward(l).unwrap();
    let tape: Vec<Matrix> = vars
        .iter()
        .zip(net.shapes())
        .map(|(&v, s)| grads.take_or_zeros(v, s))
        .collect();

    let (x64, t64) = (to64(&x), to64(&t));
    check(&net, &tape, |p| mse(&forward(p, &x64), &t64));
}

#[test]
fn two_pass_critic_loss_gradient_matches_finite_differences() {
    // mean (D(x) − u)² + mean (D(y) + v)²: the two passes share parameters,
    // so their tape gradients must add.
    let mut rng = SeededRng::new(4);
    let net = random_net(&mut rng, 4, 6, 1, 1);
    let x = rng.normal_matrix(5, 4);
    let y = rng.normal_matrix(5, 4);
    let u = rng.normal_matrix(5, 1);
    let neg_v = rng.normal_matrix(5, 1);

    let mut rec = GradientRecord::new();
    let xv = rec.constant(x.clone());
    let yv = rec.constant(y.clone());
    let (dx, vars_x) = net.record(&mut rec, xv, true).unwrap();
    let (dy, vars_y) = net.record(&mut rec, yv, true).unwrap();
    let lx = rec.mean_square(dx, &u).unwrap();
    let ly = rec.mean_square(dy, &neg_v).unwrap();
    let l = rec.add(lx, ly).unwrap();
    let mut grads = rec.backward(l).unwrap();
    let tape: Vec<Matrix> = vars_x
        .iter()
        .zip(&vars_y)
        .zip(net.shapes())
        .map(|((&a, &b), s)| grads.take_or_zeros(a, s).add(&grads.take_or_zeros(b, s)).unwrap())
        .collect();

    let (x64, y64, u64_, v64) = (to64(&x), to64(&y), to64(&u), to64(&neg_v));
    check(&net, &tape, |p| mse(&forward(p, &x64), &u64_) + mse(&forward(p, &y64), &v64));
}

#[test]
fn oracle_forward_agrees_with_network() {
    let mut rng = SeededRng::new(9);
    let net = random_net(&mut rng, 3, 5, 3, 2);
    let x = rng.normal_matrix(4, 3);
    let ours = to64(&net.forward(&x).unwrap());
    let p: Vec<M64> = net.params().into_iter().map(to64).collect();
    let oracle = forward(&p, &to64(&x));
    for (a, b) in ours.iter().flatten().zip(oracle.iter().flatten()) {
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }
}
