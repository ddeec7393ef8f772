//! Reverse process and decoding of generated embeddings into graphs.

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{decode_edges, EncoderParams};
use crate::denoiser::{predict_with_adjacency, DenoiserParams};
use crate::diffusion::{angular_noise, node_signs, white_noise, DiffusionSchedule, NoiseMode};
use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, normalized_adjacency_from_pairs, GraphData, GraphSet};
use crate::hkmeans::ClusterModel;

/// Empirical distribution of node counts, as `(n, count)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCounts(pub Vec<(usize, usize)>);

impl NodeCounts {
    pub fn from_graphs(graphs: &[GraphData]) -> Self {
        let mut map = std::collections::BTreeMap::new();
        for g in graphs {
            *map.entry(g.n).or_insert(0usize) += 1;
        }
        Self(map.into_iter().collect())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<usize> {
        let w = WeightedIndex::new(self.0.iter().map(|p| p.1))
            .map_err(|e| Error::InvalidParameter(format!("node-count histogram: {e}")))?;
        Ok(self.0[w.sample(rng)].0)
    }
}

/// How the denoiser is conditioned on structure while sampling.
#[derive(Debug, Clone, PartialEq)]
pub enum Conditioning {
    /// k-nearest-neighbour graph of the current coordinates, rebuilt every
    /// `rebuild_every` steps.
    Unconditional { knn: usize, rebuild_every: usize },
    /// A fixed caller-supplied graph; fixes the node count as well.
    Scaffold(GraphData),
}

impl Default for Conditioning {
    fn default() -> Self {
        Conditioning::Unconditional { knn: 4, rebuild_every: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerOptions {
    pub conditioning: Conditioning,
    pub noise: NoiseMode,
    pub threshold: f64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self { conditioning: Conditioning::default(), noise: NoiseMode::Angular, threshold: 0.5 }
    }
}

/// Draw clusters by the stored proportions and `x_T = signs * |N(0, I)|`
/// (plain `N(0, I)` in white mode).
pub fn sample_prior(
    model: &ClusterModel,
    n_nodes: usize,
    noise: NoiseMode,
    rng: &mut impl Rng,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let d = model.config.dim;
    if n_nodes == 0 {
        return Ok((Array2::zeros((0, d)), Vec::new()));
    }
    let w = WeightedIndex::new(&model.proportions)
        .map_err(|e| Error::InvalidParameter(format!("cluster proportions: {e}")))?;
    let clusters: Vec<usize> = (0..n_nodes).map(|_| w.sample(rng)).collect();
    let x = match noise {
        NoiseMode::Angular => angular_noise(&node_signs(model, &clusters), rng),
        NoiseMode::White => white_noise(n_nodes, d, rng),
    };
    Ok((x, clusters))
}

/// `(x_t - (sqrt(abar_t) + radial(t)) x0_hat) / sqrt(1 - abar_t)`; zeros when `abar_t = 1`.
pub fn predicted_noise(x_t: &Array2<f64>, x0_hat: &Array2<f64>, t: usize, s: &DiffusionSchedule) -> Array2<f64> {
    let denom = s.noise_coeff(t);
    if denom == 0.0 {
        return Array2::zeros(x_t.raw_dim());
    }
    (x_t - &(x0_hat * s.signal_coeff(t))) / denom
}

/// `x_{t-1} = (sqrt(abar_{t-1}) + radial(t-1)) x0_hat + sqrt(1 - abar_{t-1}) z_hat`.
pub fn denoise_step(x_t: &Array2<f64>, x0_hat: &Array2<f64>, t: usize, s: &DiffusionSchedule) -> Array2<f64> {
    let z = predicted_noise(x_t, x0_hat, t, s);
    x0_hat * s.signal_coeff(t - 1) + z * s.noise_coeff(t - 1)
}

/// Symmetrized k-nearest-neighbour graph of the rows of `x`.
pub fn knn_graph(x: &Array2<f64>, k: usize) -> Vec<(usize, usize)> {
    let n = x.nrows();
    let mut edges = Vec::new();
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let diff = &x.row(i) - &x.row(j);
                (diff.dot(&diff), j)
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in d.iter().take(k) {
            edges.push((i.min(j), i.max(j)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Everything generation needs besides the RNG.
pub struct Generator<'a> {
    pub denoiser: &'a DenoiserParams,
    pub encoder: &'a EncoderParams,
    pub clusters: &'a ClusterModel,
    pub schedule: &'a DiffusionSchedule,
    pub node_counts: &'a NodeCounts,
    /// Multiplies generated coordinates before they leave the tangent space.
    pub latent_scale: f64,
    pub options: SamplerOptions,
}

impl Generator<'_> {
    /// Run the reverse chain from `x_T` and return the tangent coordinates `x_0`.
    pub fn reverse_chain(&self, x_t: Array2<f64>, fixed: Option<&GraphData>) -> Result<Array2<f64>> {
        let s = self.schedule;
        let mut x = x_t;
        let mut adj = fixed.map(normalized_adjacency);
        for t in (1..=s.steps).rev() {
            if let Conditioning::Unconditional { knn, rebuild_every } = self.options.conditioning {
                if adj.is_none() || (s.steps - t).is_multiple_of(rebuild_every.max(1)) {
                    adj = Some(normalized_adjacency_from_pairs(x.nrows(), &knn_graph(&x, knn)));
                }
            }
            let x0_hat = predict_with_adjacency(self.denoiser, &x, adj.as_ref().unwrap(), t)?;
            x = denoise_step(&x, &x0_hat, t, s);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reverse chain"));
        }
        Ok(x)
    }

    /// Ball coordinates of tangent rows `x0` around their cluster centroids.
    pub fn to_ball(&self, x0: &Array2<f64>, clusters: &[usize]) -> Vec<Vec<f64>> {
        x0.rows()
            .into_iter()
            .zip(clusters)
            .map(|(row, &k)| {
                let v: Vec<f64> = row.iter().map(|x| x * self.latent_scale).collect();
                self.clusters.from_tangent(&v, k)
            })
            .collect()
    }

    pub fn generate_one(&self, rng: &mut impl Rng) -> Result<GraphData> {
        let scaffold = match &self.options.conditioning {
            Conditioning::Scaffold(g) => Some(g),
            Conditioning::Unconditional { .. } => None,
        };
        let n = match scaffold {
            Some(g) => g.n,
            None => self.node_counts.sample(rng)?,
        };
        let (x_t, clusters) = sample_prior(self.clusters, n, self.options.noise, rng)?;
        let x0 = self.reverse_chain(x_t, scaffold)?;
        let z = self.to_ball(&x0, &clusters);
        GraphData::from_edges(n, decode_edges(self.encoder, &z, self.options.threshold))
    }

    /// `n_graphs` graphs; graph `i` uses ChaCha8 stream `i` of `seed`.
    pub fn generate(&self, n_graphs: usize, seed: u64) -> Result<GraphSet> {
        self.check()?;
        (0..n_graphs)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                self.generate_one(&mut rng)
            })
            .collect()
    }

    fn check(&self) -> Result<()> {
        let d = self.clusters.config.dim;
        if self.denoiser.latent() != d || self.encoder.latent() != d {
            return Err(Error::DimensionMismatch { expected: d, got: self.denoiser.latent() });
        }
        Ok(())
    }
}
