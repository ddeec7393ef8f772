//! Hyperbolic latent diffusion for graph generation.
//!
//! Graphs are embedded into the Poincaré ball by a graph-convolutional
//! autoencoder, clustered with hyperbolic k-means, projected onto their
//! cluster tangent planes and diffused there under a radial-growth term and
//! direction-constrained noise. A trained denoiser inverts the process and
//! a Fermi-Dirac decoder turns generated embeddings back into graphs.

pub mod autoencoder;
pub mod checkpoint;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod graph;
pub mod graphgen;
pub mod hkmeans;
pub mod manifold;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod sampler;
pub mod tape;

pub use error::{Error, Result};
