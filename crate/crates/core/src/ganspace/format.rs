//! The `EDIR` basis file:
//!
//! ```text
//! "EDIR" | version u32 | h u32 | p u32 | d_z u32 | N u64
//! | μ (h f32) | V (h × p matrix) | variances (p f32) | U (d_z × p matrix)
//! | generator fingerprint (32 bytes) | SHA-256 of all preceding bytes
//! ```
//!
//! Matrices are `rows u32 | cols u32 | rows·cols f32`, row-major.

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

use super::DirectionBasis;

pub const BASIS_MAGIC: &[u8; 4] = b"EDIR";
pub const BASIS_VERSION: u32 = 1;

impl DirectionBasis {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(BASIS_MAGIC);
        w.u32(BASIS_VERSION);
        w.u32(self.hidden() as u32);
        w.u32(self.directions() as u32);
        w.u32(self.latent_dim() as u32);
        w.u64(self.sample_count);
        w.f32s(&self.mean);
        w.matrix(&self.components);
        w.f32s(&self.variances);
        w.matrix(&self.latent);
        w.bytes(&self.generator_fingerprint.0);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::open(bytes, BASIS_MAGIC)?;
        r.expect_version(BASIS_VERSION)?;
        let at = r.pos();
        let h = r.u32("h")? as usize;
        let p = r.u32("p")? as usize;
        let d_z = r.u32("d_z")? as usize;
        if h == 0 || p == 0 || d_z == 0 || p > h {
            return Err(Error::format(at, format!("invalid basis dimensions h={h} p={p} d_z={d_z}")));
        }
        let sample_count = r.u64("sample count")?;
        let mean = r.f32s(h, "mean")?;
        let components = r.matrix_shaped((h, p), "components")?;
        let at = r.pos();
        let variances = r.f32s(p, "variances")?;
        if variances.windows(2).any(|w| w[0] < w[1]) || variances.iter().any(|&v| v < 0.0) {
            return Err(Error::format(at, "variances must be non-negative and descending"));
        }
        let latent = r.matrix_shaped((d_z, p), "latent directions")?;
        let generator_fingerprint = r.digest("generator fingerprint")?;
        r.finish()?;
        Ok(Self {
            mean,
            components,
            variances,
            latent,
            sample_count,
            generator_fingerprint,
        })
    }
}

#[cfg(test)]
mod tests {
    use crate::gan::{ArchConfig, GeneratorParams};
    use crate::ganspace::{fit_generator_directions, DirectionBasis};
    use crate::ndmath::SeededRng;

    fn basis() -> DirectionBasis {
        let g = GeneratorParams::init(
            &ArchConfig {
                latent_dim: 3,
                hidden: 6,
                blocks: 0,
            },
            &mut SeededRng::new(1),
        );
        fit_generator_directions(&g, 50, 2, &mut SeededRng::new(2)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let b = basis();
        let bytes = b.encode();
        assert_eq!(DirectionBasis::decode(&bytes).unwrap(), b);
    }

    #[test]
    fn every_single_byte_flip_is_rejected() {
        let bytes = basis().encode();
        for i in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] = bad[i].wrapping_add(1);
            assert!(DirectionBasis::decode(&bad).is_err(), "flip at {i} accepted");
        }
    }
}
