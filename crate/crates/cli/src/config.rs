//! Flat `key = value` configuration. Later sources override earlier ones.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use hyperdiff::diffusion::NoiseMode;
use hyperdiff::metrics::MetricsConfig;
use hyperdiff::pipeline::PipelineConfig;
use hyperdiff::sampler::{Conditioning, SamplerOptions};

pub const KEYS: &[&str] = &[
    // data
    "kind",
    "count",
    "n_min",
    "n_max",
    "p",
    "inter_frac",
    "nodes",
    "blocks",
    "q",
    "m_min",
    "m_max",
    "rows",
    "cols",
    "depth",
    "radius",
    // autoencoder
    "c",
    "latent",
    "hidden",
    "ae_epochs",
    "ae_lr",
    "fd_r",
    "fd_tau",
    "edge_dropout",
    "refine_steps",
    "refine_lr",
    "refine_margin",
    "clusters",
    "kmeans_iters",
    "jitter",
    // diffusion
    "latent_std",
    "steps",
    "beta_start",
    "beta_end",
    "delta",
    "t0",
    "noise",
    "den_epochs",
    "den_lr",
    "widths",
    "time_dim",
    // sampling and evaluation
    "knn",
    "rebuild_every",
    "threshold",
    "trials",
    "k_nn",
    "clustering_bins",
    "spectrum_bins",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').with_context(|| format!("line {}: expected key = value", i + 1))?;
            s.set(k.trim(), v.trim()).with_context(|| format!("line {}", i + 1))?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            bail!("unknown config key `{key}`");
        }
        self.0.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Apply `key=value` overrides.
    pub fn apply(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o.split_once('=').with_context(|| format!("override `{o}` is not key=value"))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| anyhow::anyhow!("config `{key}` = `{v}`: {e}")),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        self.0
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| x.trim().parse().with_context(|| format!("config `{key}` = `{v}`")))
                    .collect::<Result<Vec<usize>>>()
            })
            .transpose()
    }

    fn noise(&self) -> Result<Option<NoiseMode>> {
        match self.0.get("noise").map(String::as_str) {
            None => Ok(None),
            Some("angular") => Ok(Some(NoiseMode::Angular)),
            Some("white") => Ok(Some(NoiseMode::White)),
            Some(v) => bail!("config `noise` = `{v}`: expected angular or white"),
        }
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        let e = &mut cfg.encoder;
        e.c = self.get_or("c", e.c)?;
        e.latent = self.get_or("latent", e.latent)?;
        e.hidden = self.get_or("hidden", e.hidden)?;
        e.epochs = self.get_or("ae_epochs", e.epochs)?;
        e.adam.lr = self.get_or("ae_lr", e.adam.lr)?;
        e.fd_r = self.get_or("fd_r", e.fd_r)?;
        e.fd_tau = self.get_or("fd_tau", e.fd_tau)?;
        e.edge_dropout = self.get_or("edge_dropout", e.edge_dropout)?;
        e.refine_steps = self.get_or("refine_steps", e.refine_steps)?;
        e.refine_lr = self.get_or("refine_lr", e.refine_lr)?;
        e.refine_margin = self.get_or("refine_margin", e.refine_margin)?;
        cfg.clusters = self.get_or("clusters", cfg.clusters)?;
        cfg.kmeans_iters = self.get_or("kmeans_iters", cfg.kmeans_iters)?;
        cfg.jitter = self.get_or("jitter", cfg.jitter)?;
        cfg.latent_std = self.get_or("latent_std", cfg.latent_std)?;
        let s = &mut cfg.schedule;
        s.steps = self.get_or("steps", s.steps)?;
        s.beta_start = self.get_or("beta_start", s.beta_start)?;
        s.beta_end = self.get_or("beta_end", s.beta_end)?;
        s.delta = self.get_or("delta", s.delta)?;
        s.t0 = self.get_or("t0", s.t0)?;
        let d = &mut cfg.denoiser;
        d.epochs = self.get_or("den_epochs", d.epochs)?;
        d.adam.lr = self.get_or("den_lr", d.adam.lr)?;
        d.time_dim = self.get_or("time_dim", d.time_dim)?;
        if let Some(w) = self.list("widths")? {
            d.widths = w;
        }
        if let Some(n) = self.noise()? {
            d.noise = n;
        }
        Ok(cfg)
    }

    pub fn sampler(&self, base: SamplerOptions) -> Result<SamplerOptions> {
        let mut o = base;
        if let Conditioning::Unconditional { knn, rebuild_every } = &mut o.conditioning {
            *knn = self.get_or("knn", *knn)?;
            *rebuild_every = self.get_or("rebuild_every", *rebuild_every)?;
        }
        o.threshold = self.get_or("threshold", o.threshold)?;
        Ok(o)
    }

    pub fn metrics(&self) -> Result<MetricsConfig> {
        let d = MetricsConfig::default();
        Ok(MetricsConfig {
            k_nn: self.get_or("k_nn", d.k_nn)?,
            clustering_bins: self.get_or("clustering_bins", d.clustering_bins)?,
            spectrum_bins: self.get_or("spectrum_bins", d.spectrum_bins)?,
        })
    }
}
