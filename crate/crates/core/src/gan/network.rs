use serde::{Deserialize, Serialize};

use crate::binio::{ByteWriter, Digest};
use crate::error::{Error, Result};
use crate::ndmath::{GradientRecord, Matrix, SeededRng, Var, LEAKY_SLOPE};

/// Affine layer `x W + b`, with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    fn init(fan_in: usize, fan_out: usize, gain: f64, rng: &mut SeededRng) -> Self {
        let std = gain / (fan_in as f64).sqrt();
        let w: Vec<f32> = (0..fan_in * fan_out).map(|_| (rng.normal() * std) as f32).collect();
        Self {
            weight: Matrix::from_raw(fan_in, fan_out, w),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        x.matmul_unchecked(&self.weight)
            .add_row(&self.bias)
            .expect("layer shapes validated at construction")
    }

    fn record(&self, rec: &mut GradientRecord, x: Var, trainable: bool, vars: &mut Vec<Var>) -> Result<Var> {
        let (w, b) = if trainable {
            (rec.param(self.weight.clone()), rec.param(self.bias.clone()))
        } else {
            (rec.constant(self.weight.clone()), rec.constant(self.bias.clone()))
        };
        vars.push(w);
        vars.push(b);
        let y = rec.matmul(x, w)?;
        rec.add_row(y, b)
    }
}

/// Two `h → h` affine layers with a leaky rectifier between them and an
/// identity skip: `x + L2(lrelu(L1(x)))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock {
    pub first: Dense,
    pub second: Dense,
}

impl ResidualBlock {
    pub fn forward(&self, x: &Matrix) -> Matrix {
        let h = leaky(&self.first.forward(x));
        let mut out = self.second.forward(&h);
        out.add_assign_unchecked(x);
        out
    }
}

fn leaky(x: &Matrix) -> Matrix {
    x.map(|v| if v > 0.0 { v } else { v * LEAKY_SLOPE })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub blocks: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            hidden: 256,
            blocks: 3,
        }
    }
}

/// Residual MLP: leaky-rectified input layer, residual blocks, linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct ResMlp {
    pub input: Dense,
    pub blocks: Vec<ResidualBlock>,
    pub output: Dense,
}

impl ResMlp {
    pub fn init(in_dim: usize, hidden: usize, blocks: usize, out_dim: usize, rng: &mut SeededRng) -> Self {
        let input = Dense::init(in_dim, hidden, 2f64.sqrt(), rng);
        let blocks = (0..blocks)
            .map(|_| ResidualBlock {
                first: Dense::init(hidden, hidden, 2f64.sqrt(), rng),
                // Small second layer keeps each block close to the identity at start.
                second: Dense::init(hidden, hidden, 0.1, rng),
            })
            .collect();
        let output = Dense::init(hidden, out_dim, 1.0, rng);
        Self { input, blocks, output }
    }

    pub fn zeros(in_dim: usize, hidden: usize, blocks: usize, out_dim: usize) -> Self {
        Self {
            input: Dense::zeros(in_dim, hidden),
            blocks: (0..blocks)
                .map(|_| ResidualBlock {
                    first: Dense::zeros(hidden, hidden),
                    second: Dense::zeros(hidden, hidden),
                })
                .collect(),
            output: Dense::zeros(hidden, out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.input.weight.rows()
    }

    pub fn hidden(&self) -> usize {
        self.input.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.output.weight.cols()
    }

    /// Post-activation output of the input layer.
    pub fn first_layer(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        Ok(leaky(&self.input.forward(x)))
    }

    /// Everything after the input layer.
    pub fn from_first_layer(&self, a: &Matrix) -> Result<Matrix> {
        if a.cols() != self.hidden() {
            return Err(Error::shape("from_first_layer", self.hidden(), a.cols()));
        }
        let mut h = a.clone();
        for b in &self.blocks {
            h = b.forward(&h);
        }
        Ok(self.output.forward(&h))
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let a = self.first_layer(x)?;
        self.from_first_layer(&a)
    }

    /// Records the forward pass; parameter handles are returned in
    /// [`ResMlp::params`] order.
    pub fn record(&self, rec: &mut GradientRecord, x: Var, trainable: bool) -> Result<(Var, Vec<Var>)> {
        let mut vars = Vec::with_capacity(self.param_count());
        let h = self.input.record(rec, x, trainable, &mut vars)?;
        let mut h = rec.leaky_relu(h);
        for b in &self.blocks {
            let t = b.first.record(rec, h, trainable, &mut vars)?;
            let t = rec.leaky_relu(t);
            let t = b.second.record(rec, t, trainable, &mut vars)?;
            h = rec.add(h, t)?;
        }
        let out = self.output.record(rec, h, trainable, &mut vars)?;
        Ok((out, vars))
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape("network input", self.in_dim(), x.cols()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        4 + 4 * self.blocks.len()
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.input.weight, &self.input.bias];
        for b in &self.blocks {
            out.extend([&b.first.weight, &b.first.bias, &b.second.weight, &b.second.bias]);
        }
        out.extend([&self.output.weight, &self.output.bias]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.input.weight, &mut self.input.bias];
        for b in &mut self.blocks {
            out.extend([
                &mut b.first.weight,
                &mut b.first.bias,
                &mut b.second.weight,
                &mut b.second.bias,
            ]);
        }
        out.extend([&mut self.output.weight, &mut self.output.bias]);
        out
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.params().iter().map(|m| m.shape()).collect()
    }

    /// Rebuilds a network from matrices in [`ResMlp::params`] order, checking
    /// that the layer shapes chain.
    pub fn from_params(mut mats: Vec<Matrix>) -> Result<Self> {
        if mats.len() < 4 || !mats.len().is_multiple_of(4) {
            return Err(Error::contract(format!("{} parameter matrices do not form a residual MLP", mats.len())));
        }
        let blocks = (mats.len() - 4) / 4;
        let mut it = mats.drain(..);
        let mut dense = || Dense {
            weight: it.next().unwrap(),
            bias: it.next().unwrap(),
        };
        let input = dense();
        let blocks: Vec<ResidualBlock> = (0..blocks)
            .map(|_| ResidualBlock {
                first: dense(),
                second: dense(),
            })
            .collect();
        let output = dense();
        let net = Self { input, blocks, output };
        let h = net.hidden();
        let mut expect = vec![(net.in_dim(), h), (1, h)];
        for _ in &net.blocks {
            expect.extend([(h, h), (1, h), (h, h), (1, h)]);
        }
        expect.extend([(h, net.out_dim()), (1, net.out_dim())]);
        if net.shapes() != expect {
            return Err(Error::contract("parameter shapes do not chain"));
        }
        Ok(net)
    }

    pub(crate) fn encode(&self, w: &mut ByteWriter) {
        w.u32(self.param_count() as u32);
        for m in self.params() {
            w.matrix(m);
        }
    }

    pub fn fingerprint(&self) -> Digest {
        let mut w = ByteWriter::new();
        self.encode(&mut w);
        Digest::of(w.body())
    }
}

/// Maps latents (`d_z`) to embeddings (64).
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams(pub ResMlp);

/// Maps embeddings (64) to a scalar potential.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticParams(pub ResMlp);

impl GeneratorParams {
    pub fn init(arch: &ArchConfig, rng: &mut SeededRng) -> Self {
        Self(ResMlp::init(arch.latent_dim, arch.hidden, arch.blocks, crate::EMBED_DIM, rng))
    }

    pub fn latent_dim(&self) -> usize {
        self.0.in_dim()
    }

    pub fn hidden(&self) -> usize {
        self.0.hidden()
    }

    pub fn fingerprint(&self) -> Digest {
        self.0.fingerprint()
    }

    /// Batched generation: rows of `z` are latents.
    pub fn generate_batch(&self, z: &Matrix) -> Result<Matrix> {
        self.0.forward(z)
    }
}

impl CriticParams {
    pub fn init(arch: &ArchConfig, rng: &mut SeededRng) -> Self {
        Self(ResMlp::init(crate::EMBED_DIM, arch.hidden, arch.blocks, 1, rng))
    }

    pub fn score_batch(&self, e: &Matrix) -> Result<Matrix> {
        self.0.forward(e)
    }
}
