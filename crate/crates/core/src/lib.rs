//! Controllable artificial speaker embeddings.
//!
//! A Wasserstein GAN with quadratic transport cost learns the distribution of
//! 64-dimensional speaker embeddings. Principal directions of the generator's
//! first-layer activations, mapped back to latent space by least squares,
//! act as sliders over generated embeddings. Embedding-level probes measure
//! how well those sliders control attributes and whether generated
//! embeddings stay clear of the training speakers.

pub mod binio;
pub mod corpus;
pub mod error;
pub mod gan;
pub mod ganspace;
pub mod ndmath;
pub mod probes;
pub mod transport;
pub mod twins;

pub use binio::Digest;
pub use error::{Error, Result};

/// Dimension of every speaker embedding.
pub const EMBED_DIM: usize = 64;
