//! The `EGAN` checkpoint file:
//!
//! ```text
//! "EGAN" | version u32 | config (u16-prefixed JSON) | step u64
//! | corpus digest (32 bytes) | generator | critic | generator Adam | critic Adam
//! | SHA-256 of all preceding bytes
//! ```
//!
//! A network is a u32 matrix count followed by matrices (`rows u32 | cols u32
//! | rows·cols f32`). An Adam state is `lr, beta1, beta2, eps` as f32, step
//! u64, then first and second moments as matrix lists.

use std::fs;
use std::path::Path;

use crate::binio::{ByteReader, ByteWriter, Digest};
use crate::error::{Error, Result};
use crate::ndmath::{AdamConfig, AdamState, Matrix};

use super::{CriticParams, GeneratorParams, ResMlp, TrainConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EGAN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub generator: GeneratorParams,
    pub critic: CriticParams,
    pub config: TrainConfig,
    pub generator_adam: AdamState,
    pub critic_adam: AdamState,
    pub step: u64,
    /// Content hash of the training corpus.
    pub corpus_fingerprint: Digest,
}

fn write_matrices<'a>(w: &mut ByteWriter, ms: impl ExactSizeIterator<Item = &'a Matrix>) {
    w.u32(ms.len() as u32);
    for m in ms {
        w.matrix(m);
    }
}

fn read_matrices(r: &mut ByteReader, what: &str) -> Result<Vec<Matrix>> {
    let n = r.u32(what)? as usize;
    (0..n).map(|_| r.matrix(what)).collect()
}

fn write_adam(w: &mut ByteWriter, s: &AdamState) {
    w.f32(s.config.lr);
    w.f32(s.config.beta1);
    w.f32(s.config.beta2);
    w.f32(s.config.eps);
    w.u64(s.step);
    write_matrices(w, s.first_moment.iter());
    write_matrices(w, s.second_moment.iter());
}

fn read_adam(r: &mut ByteReader, shapes: &[(usize, usize)], what: &str) -> Result<AdamState> {
    let at = r.pos();
    let config = AdamConfig {
        lr: r.f32(what)?,
        beta1: r.f32(what)?,
        beta2: r.f32(what)?,
        eps: r.f32(what)?,
    };
    let step = r.u64(what)?;
    let first_moment = read_matrices(r, what)?;
    let second_moment = read_matrices(r, what)?;
    let state = AdamState {
        config,
        step,
        first_moment,
        second_moment,
    };
    let second: Vec<_> = state.second_moment.iter().map(Matrix::shape).collect();
    if state.shapes() != shapes || second != shapes {
        return Err(Error::format(at, format!("{what}: moment shapes do not match the network")));
    }
    Ok(state)
}

fn read_net(r: &mut ByteReader, what: &str) -> Result<ResMlp> {
    let at = r.pos();
    let mats = read_matrices(r, what)?;
    ResMlp::from_params(mats).map_err(|e| Error::format(at, format!("{what}: {e}")))
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.str(&serde_json::to_string(&self.config).expect("config serializes"));
        w.u64(self.step);
        w.bytes(&self.corpus_fingerprint.0);
        self.generator.0.encode(&mut w);
        self.critic.0.encode(&mut w);
        write_adam(&mut w, &self.generator_adam);
        write_adam(&mut w, &self.critic_adam);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::open(bytes, CHECKPOINT_MAGIC)?;
        r.expect_version(CHECKPOINT_VERSION)?;
        let at = r.pos();
        let config: TrainConfig = serde_json::from_str(&r.str("config")?)
            .map_err(|e| Error::format(at, format!("config: {e}")))?;
        let step = r.u64("step")?;
        let corpus_fingerprint = r.digest("corpus fingerprint")?;
        let at = r.pos();
        let generator = read_net(&mut r, "generator")?;
        let critic = read_net(&mut r, "critic")?;
        if generator.out_dim() != crate::EMBED_DIM || critic.in_dim() != crate::EMBED_DIM || critic.out_dim() != 1 {
            return Err(Error::format(at, "network dimensions do not fit the embedding space"));
        }
        let generator_adam = read_adam(&mut r, &generator.shapes(), "generator optimizer")?;
        let critic_adam = read_adam(&mut r, &critic.shapes(), "critic optimizer")?;
        r.finish()?;
        Ok(Self {
            generator: GeneratorParams(generator),
            critic: CriticParams(critic),
            config,
            generator_adam,
            critic_adam,
            step,
            corpus_fingerprint,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::{ArchConfig, TrainState};

    fn sample() -> Checkpoint {
        let cfg = TrainConfig {
            arch: ArchConfig {
                latent_dim: 3,
                hidden: 5,
                blocks: 2,
            },
            ..TrainConfig::default()
        };
        let mut st = TrainState::init(&cfg);
        st.step = 17;
        st.generator_adam.step = 17;
        st.critic_adam.first_moment[0].set(0, 0, -0.25);
        st.into_checkpoint(cfg, Digest::of(b"corpus"))
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn every_single_byte_flip_is_rejected() {
        let bytes = sample().encode();
        for i in (0..bytes.len()).step_by(7) {
            let mut bad = bytes.clone();
            bad[i] ^= 0x10;
            assert!(Checkpoint::decode(&bad).is_err(), "flip at {i} accepted");
        }
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let mut bytes = sample().encode();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bytes), Err(Error::Format { offset: 0, .. })));
    }
}
