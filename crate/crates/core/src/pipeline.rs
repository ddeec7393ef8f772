//! Two-stage training (autoencoder, then denoiser) and checkpoint conversion.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{
    encode_matrix, encode_matrix_jittered, train_autoencoder, AutoencoderReport, EncoderConfig, EncoderParams,
};
use crate::checkpoint::Checkpoint;
use crate::denoiser::{train_denoiser, Block, DenoiserConfig, DenoiserExample, DenoiserParams, DenoiserReport};
use crate::diffusion::{make_schedule, node_signs, snr_curve, DiffusionSchedule, NoiseMode};
use crate::error::{Error, Result};
use crate::graph::{GraphData, GraphSet};
use crate::hkmeans::{fit_raw, ClusterModel};
use crate::manifold::ManifoldConfig;
use crate::optim::Parameters;
use crate::sampler::{Generator, NodeCounts, SamplerOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub delta: f64,
    pub t0: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { steps: 1000, beta_start: 1e-4, beta_end: 0.02, delta: 0.5, t0: 1000.0 }
    }
}

impl ScheduleConfig {
    pub fn build(&self, c: f64) -> Result<DiffusionSchedule> {
        make_schedule(self.steps, self.beta_start, self.beta_end, self.delta, self.t0, c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub encoder: EncoderConfig,
    pub clusters: usize,
    pub kmeans_iters: usize,
    /// Tangent jitter applied before refinement when embedding training graphs.
    pub jitter: f64,
    /// Target root-mean-square of the diffusion coordinates.
    pub latent_std: f64,
    pub schedule: ScheduleConfig,
    pub denoiser: DenoiserConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            clusters: 2,
            kmeans_iters: 100,
            jitter: 0.1,
            latent_std: 2.0,
            schedule: ScheduleConfig::default(),
            denoiser: DenoiserConfig { epochs: 500, ..Default::default() },
        }
    }
}

/// Output of the first stage: encoder, pooled clustering and node-count histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderStage {
    pub encoder: EncoderParams,
    pub clusters: ClusterModel,
    pub node_counts: NodeCounts,
}

/// Everything needed to sample graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub stage: AutoencoderStage,
    pub schedule_config: ScheduleConfig,
    pub schedule: DiffusionSchedule,
    pub noise: NoiseMode,
    /// Tangent coordinates are divided by this before diffusion.
    pub latent_scale: f64,
    pub denoiser: DenoiserParams,
}

/// Ball embeddings of every graph, computed in parallel. With `jitter > 0`
/// graph `i` draws its jitter from ChaCha8 stream `i` of `seed`.
pub fn encode_all(encoder: &EncoderParams, graphs: &[GraphData], jitter: f64, seed: u64) -> Result<Vec<Array2<f64>>> {
    graphs
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            if jitter > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                encode_matrix_jittered(encoder, g, jitter, &mut rng)
            } else {
                encode_matrix(encoder, g)
            }
            .map(|(z, _)| z)
        })
        .collect()
}

fn embedding_seed(seed: u64) -> u64 {
    seed.wrapping_add(3)
}

/// Seed of the second stage when both stages share one user seed.
pub fn denoiser_seed(seed: u64) -> u64 {
    seed.wrapping_add(100)
}

/// Train the autoencoder, embed all graphs and cluster the pooled nodes.
pub fn fit_autoencoder_stage(
    graphs: &[GraphData],
    config: &PipelineConfig,
    seed: u64,
) -> Result<(AutoencoderStage, AutoencoderReport)> {
    let (encoder, report) = train_autoencoder(graphs, &config.encoder, seed)?;
    let embeddings = encode_all(&encoder, graphs, config.jitter, embedding_seed(seed))?;
    let rows: Vec<&[f64]> =
        embeddings.iter().flat_map(|z| z.rows().into_iter().map(|r| r.to_slice().unwrap())).collect();
    let manifold = ManifoldConfig::new(config.encoder.c, config.encoder.latent)?;
    let k = config.clusters.min(rows.len()).max(1);
    let clusters = fit_raw(&rows, manifold, k, config.kmeans_iters, seed.wrapping_add(2))?;
    let node_counts = NodeCounts::from_graphs(graphs);
    Ok((AutoencoderStage { encoder, clusters, node_counts }, report))
}

impl AutoencoderStage {
    /// Tangent coordinates around each node's nearest centroid, its cluster
    /// index, and the matching sign rows.
    pub fn tangent_data(&self, z: &Array2<f64>) -> (Array2<f64>, Vec<usize>, Array2<f64>) {
        let m = &self.clusters;
        let assign: Vec<usize> = z.rows().into_iter().map(|r| m.assign(r.as_slice().unwrap())).collect();
        let mut x0 = Array2::zeros(z.raw_dim());
        for (i, &a) in assign.iter().enumerate() {
            let v = m.to_tangent(z.row(i).as_slice().unwrap(), a);
            x0.row_mut(i).assign(&ndarray::ArrayView1::from(&v));
        }
        let signs = node_signs(m, &assign);
        (x0, assign, signs)
    }

    pub fn denoiser_examples(&self, graphs: &[GraphData], jitter: f64, seed: u64) -> Result<Vec<DenoiserExample>> {
        let embeddings = encode_all(&self.encoder, graphs, jitter, embedding_seed(seed))?;
        graphs
            .iter()
            .zip(embeddings)
            .map(|(g, z)| {
                let (x0, _, signs) = self.tangent_data(&z);
                DenoiserExample::new(x0, signs, g)
            })
            .collect()
    }

    /// Per-step SNR of angular and white noise averaged over the unjittered
    /// embeddings of `graphs`. Graph `i` uses ChaCha8 stream `i` of `seed`.
    pub fn snr(
        &self,
        graphs: &[GraphData],
        schedule: &DiffusionSchedule,
        trials: usize,
        seed: u64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if graphs.is_empty() {
            return Err(Error::Empty("graph set"));
        }
        let embeddings = encode_all(&self.encoder, graphs, 0.0, seed)?;
        let curves = embeddings
            .par_iter()
            .enumerate()
            .map(|(i, z)| {
                let (x0, _, signs) = self.tangent_data(z);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let a = snr_curve(&x0, schedule, &signs, NoiseMode::Angular, trials, &mut rng)?;
                let w = snr_curve(&x0, schedule, &signs, NoiseMode::White, trials, &mut rng)?;
                Ok((a, w))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut angular = vec![0.0; schedule.steps + 1];
        let mut white = vec![0.0; schedule.steps + 1];
        for (a, w) in &curves {
            for t in 0..=schedule.steps {
                angular[t] += a[t] / curves.len() as f64;
                white[t] += w[t] / curves.len() as f64;
            }
        }
        Ok((angular, white))
    }

    /// Train the denoiser on the tangent coordinates of `graphs`.
    pub fn fit_denoiser(
        self,
        graphs: &[GraphData],
        config: &PipelineConfig,
        seed: u64,
    ) -> Result<(TrainedModel, DenoiserReport)> {
        let schedule = config.schedule.build(self.clusters.config.c)?;
        let mut examples = self.denoiser_examples(graphs, config.jitter, seed)?;
        let latent_scale = latent_std(&examples) / config.latent_std;
        for e in &mut examples {
            e.x0 /= latent_scale;
        }
        let dcfg = DenoiserConfig {
            latent: self.clusters.config.dim,
            sigma_data: Some(config.latent_std),
            ..config.denoiser.clone()
        };
        let (denoiser, report) = train_denoiser(&examples, &schedule, &dcfg, seed)?;
        let model = TrainedModel {
            stage: self,
            schedule_config: config.schedule,
            schedule,
            noise: dcfg.noise,
            latent_scale,
            denoiser,
        };
        Ok((model, report))
    }
}

/// Root-mean-square tangent coordinate over all examples; 1 if there is none.
pub fn latent_std(examples: &[DenoiserExample]) -> f64 {
    let (sum, count) =
        examples.iter().fold((0.0, 0usize), |(s, n), e| (s + e.x0.iter().map(|v| v * v).sum::<f64>(), n + e.x0.len()));
    let rms = (sum / count.max(1) as f64).sqrt();
    if rms > 0.0 && rms.is_finite() {
        rms
    } else {
        1.0
    }
}

/// Train both stages and return the model.
pub fn train_pipeline(graphs: &[GraphData], config: &PipelineConfig, seed: u64) -> Result<TrainedModel> {
    let (stage, _) = fit_autoencoder_stage(graphs, config, seed)?;
    let (model, _) = stage.fit_denoiser(graphs, config, denoiser_seed(seed))?;
    Ok(model)
}

impl TrainedModel {
    /// Sampler options matching how the denoiser was trained.
    pub fn default_options(&self) -> SamplerOptions {
        SamplerOptions { noise: self.noise, ..Default::default() }
    }

    pub fn generator(&self, options: SamplerOptions) -> Generator<'_> {
        Generator {
            denoiser: &self.denoiser,
            encoder: &self.stage.encoder,
            clusters: &self.stage.clusters,
            schedule: &self.schedule,
            node_counts: &self.stage.node_counts,
            latent_scale: self.latent_scale,
            options,
        }
    }

    pub fn generate(&self, n_graphs: usize, options: SamplerOptions, seed: u64) -> Result<GraphSet> {
        self.generator(options).generate(n_graphs, seed)
    }
}

/// Metadata trailer of a checkpoint. Diffusion fields are absent until the
/// second stage has run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub c: f64,
    pub latent: usize,
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub sign_matrix: Vec<Vec<i8>>,
    pub proportions: Vec<f64>,
    pub node_counts: NodeCounts,
    pub refine_steps: usize,
    pub refine_lr: f64,
    pub refine_margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_scale: Option<f64>,
}

const ENC: &str = "enc.";
const DEN: &str = "den.";

fn push_params(ck: &mut Checkpoint, prefix: &str, p: &impl Parameters) {
    for (name, t) in p.named_tensors() {
        ck.push_matrix(format!("{prefix}{name}"), t);
    }
}

fn stage_metadata(stage: &AutoencoderStage) -> Metadata {
    let m = &stage.clusters;
    Metadata {
        c: m.config.c,
        latent: m.config.dim,
        k: m.k(),
        centroids: m.centroids.clone(),
        sign_matrix: m.sign_matrix.clone(),
        proportions: m.proportions.clone(),
        node_counts: stage.node_counts.clone(),
        refine_steps: stage.encoder.refine_steps,
        refine_lr: stage.encoder.refine_lr,
        refine_margin: stage.encoder.refine_margin,
        schedule: None,
        noise: None,
        latent_scale: None,
    }
}

fn read_encoder(ck: &Checkpoint, meta: &Metadata) -> Result<EncoderParams> {
    let get = |n: &str| ck.matrix(&format!("{ENC}{n}"));
    let p = EncoderParams {
        w1: get("w1")?,
        b1: get("b1")?,
        w2: get("w2")?,
        b2: get("b2")?,
        fd: get("fd")?,
        c: meta.c,
        refine_steps: meta.refine_steps,
        refine_lr: meta.refine_lr,
        refine_margin: meta.refine_margin,
    };
    if p.latent() != meta.latent || p.fd.dim() != (1, 2) {
        return Err(Error::Checkpoint("encoder tensors do not match metadata".into()));
    }
    Ok(p)
}

fn read_denoiser(ck: &Checkpoint) -> Result<DenoiserParams> {
    let get = |n: &str| ck.matrix(&format!("{DEN}{n}"));
    let mut blocks = Vec::new();
    while ck.get(&format!("{DEN}block{}.w", blocks.len())).is_some() {
        let i = blocks.len();
        blocks.push(Block {
            w: get(&format!("block{i}.w"))?,
            b: get(&format!("block{i}.b"))?,
            a: get(&format!("block{i}.a"))?,
        });
    }
    Ok(DenoiserParams {
        w_in: get("w_in")?,
        b_in: get("b_in")?,
        w_te: get("w_te")?,
        blocks,
        w_out: get("w_out")?,
        b_out: get("b_out")?,
        precond: get("precond")?,
    })
}

fn read_stage(ck: &Checkpoint) -> Result<(AutoencoderStage, Metadata)> {
    let meta: Metadata = serde_json::from_value(ck.metadata.clone())?;
    let encoder = read_encoder(ck, &meta)?;
    if meta.centroids.len() != meta.k || meta.sign_matrix.len() != meta.k || meta.proportions.len() != meta.k {
        return Err(Error::Checkpoint("cluster metadata has inconsistent sizes".into()));
    }
    let clusters = ClusterModel {
        config: ManifoldConfig::new(meta.c, meta.latent)?,
        centroids: meta.centroids.clone(),
        assignments: Vec::new(),
        sign_matrix: meta.sign_matrix.clone(),
        proportions: meta.proportions.clone(),
        objective_trace: Vec::new(),
    };
    Ok((AutoencoderStage { encoder, clusters, node_counts: meta.node_counts.clone() }, meta))
}

impl AutoencoderStage {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(serde_json::to_value(stage_metadata(self))?);
        push_params(&mut ck, ENC, &self.encoder);
        Ok(ck)
    }

    /// Reads the first stage from either a first-stage or a full checkpoint.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        read_stage(ck).map(|(s, _)| s)
    }
}

impl TrainedModel {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = Metadata {
            schedule: Some(self.schedule_config),
            noise: Some(self.noise),
            latent_scale: Some(self.latent_scale),
            ..stage_metadata(&self.stage)
        };
        let mut ck = Checkpoint::new(serde_json::to_value(meta)?);
        push_params(&mut ck, ENC, &self.stage.encoder);
        push_params(&mut ck, DEN, &self.denoiser);
        ck.push_matrix(format!("{DEN}precond"), &self.denoiser.precond);
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let (stage, meta) = read_stage(ck)?;
        let schedule_config =
            meta.schedule.ok_or_else(|| Error::Checkpoint("no diffusion schedule; run train-diff first".into()))?;
        let noise = meta.noise.ok_or_else(|| Error::Checkpoint("missing noise mode".into()))?;
        let latent_scale = meta.latent_scale.ok_or_else(|| Error::Checkpoint("missing latent scale".into()))?;
        let denoiser = read_denoiser(ck)?;
        if denoiser.latent() != meta.latent {
            return Err(Error::Checkpoint("denoiser latent size does not match metadata".into()));
        }
        let schedule = schedule_config.build(meta.c)?;
        Ok(Self { stage, schedule_config, schedule, noise, latent_scale, denoiser })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::gen_community;

    fn tiny_config() -> PipelineConfig {
        PipelineConfig {
            encoder: EncoderConfig { latent: 4, hidden: 8, epochs: 3, refine_steps: 5, ..Default::default() },
            clusters: 2,
            kmeans_iters: 20,
            jitter: 0.1,
            latent_std: 0.5,
            schedule: ScheduleConfig { steps: 20, ..Default::default() },
            denoiser: DenoiserConfig { widths: vec![8, 8], time_dim: 8, epochs: 2, ..Default::default() },
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_model() {
        let graphs = gen_community(6, 12..=14, 0.3, 0.05, 3).unwrap();
        let cfg = tiny_config();
        let (stage, _) = fit_autoencoder_stage(&graphs, &cfg, 1).unwrap();
        let sck = stage.to_checkpoint().unwrap();
        let back = AutoencoderStage::from_checkpoint(&sck).unwrap();
        assert_eq!(back.encoder, stage.encoder);
        assert_eq!(back.clusters.centroids, stage.clusters.centroids);
        assert!(TrainedModel::from_checkpoint(&sck).is_err());

        let (model, _) = stage.fit_denoiser(&graphs, &cfg, 2).unwrap();
        let ck = model.to_checkpoint().unwrap();
        let bytes = ck.to_bytes().unwrap();
        let loaded = TrainedModel::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(loaded.denoiser, model.denoiser);
        assert_eq!(loaded.schedule, model.schedule);
        assert_eq!(loaded.to_checkpoint().unwrap().to_bytes().unwrap(), bytes);
        let a = model.generate(3, model.default_options(), 9).unwrap();
        let b = loaded.generate(3, loaded.default_options(), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generated_graphs_are_simple_and_deterministic() {
        let graphs = gen_community(6, 12..=14, 0.3, 0.05, 4).unwrap();
        let model = train_pipeline(&graphs, &tiny_config(), 5).unwrap();
        let a = model.generate(4, model.default_options(), 1).unwrap();
        assert_eq!(a, model.generate(4, model.default_options(), 1).unwrap());
        for g in &a {
            g.validate().unwrap();
            assert!((12..=14).contains(&g.n));
        }
        assert!(model.generate(0, model.default_options(), 1).unwrap().is_empty());
        let scaffold = SamplerOptions {
            conditioning: crate::sampler::Conditioning::Scaffold(graphs[0].clone()),
            ..model.default_options()
        };
        assert!(model.generate(2, scaffold, 1).unwrap().iter().all(|g| g.n == graphs[0].n));
    }
}
