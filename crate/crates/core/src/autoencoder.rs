//! Hyperbolic graph autoencoder.
//!
//! Two graph-convolution layers operate in the origin tangent space and hand
//! their outputs to the Poincaré ball through `expmap_o`:
//!
//! ```text
//! H1  = exp_o(X W1 + b1)
//! H1' = exp_o(tanh(A log_o(H1)))
//! Z   = exp_o(A log_o(H1') W2 + b2)
//! ```
//!
//! with `A = D^{-1/2}(A+I)D^{-1/2}`. Edges are decoded with the Fermi-Dirac
//! probability of the hyperbolic distance.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency_from_pairs, GraphData};
use crate::manifold::{ball, poincare_distance, ManifoldConfig, PoincarePoint};
use crate::optim::{Adam, AdamConfig, Parameters};
use crate::tape::{EdgeTargets, Tape, Var};

/// Degrees above this share the last one-hot slot.
pub const DEGREE_CAP: usize = 32;

/// Width of the default one-hot degree features.
pub const DEGREE_FEATURES: usize = DEGREE_CAP + 1;

const MIN_TAU: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub in_dim: usize,
    pub hidden: usize,
    pub latent: usize,
    pub c: f64,
    pub fd_r: f64,
    pub fd_tau: f64,
    pub epochs: usize,
    pub edge_dropout: f64,
    /// Adam steps that refine each graph's embedding against its own
    /// adjacency after the convolution layers; 0 disables refinement.
    pub refine_steps: usize,
    pub refine_lr: f64,
    /// Margin around `fd_r` that refinement aims for; see [`EdgeTargets::margin`].
    pub refine_margin: f64,
    pub adam: AdamConfig,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            in_dim: DEGREE_FEATURES,
            hidden: 32,
            latent: 16,
            c: 1.0,
            fd_r: 2.0,
            fd_tau: 1.0,
            epochs: 200,
            edge_dropout: 0.02,
            refine_steps: 500,
            refine_lr: 0.01,
            refine_margin: 0.0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
    /// `[fd_r, fd_tau]` as a `1 x 2` row.
    pub fd: Array2<f64>,
    pub c: f64,
    pub refine_steps: usize,
    pub refine_lr: f64,
    pub refine_margin: f64,
}

impl Parameters for EncoderParams {
    fn named_tensors(&self) -> Vec<(String, &Array2<f64>)> {
        vec![
            ("w1".into(), &self.w1),
            ("b1".into(), &self.b1),
            ("w2".into(), &self.w2),
            ("b2".into(), &self.b2),
            ("fd".into(), &self.fd),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.fd]
    }
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a))
}

impl EncoderParams {
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        ManifoldConfig::new(config.c, config.latent)?;
        if !(config.fd_tau > 0.0 && config.fd_tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("fd_tau = {}", config.fd_tau)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            w1: glorot(config.in_dim, config.hidden, &mut rng),
            b1: Array2::zeros((1, config.hidden)),
            w2: glorot(config.hidden, config.latent, &mut rng),
            b2: Array2::zeros((1, config.latent)),
            fd: Array2::from_shape_vec((1, 2), vec![config.fd_r, config.fd_tau]).unwrap(),
            c: config.c,
            refine_steps: config.refine_steps,
            refine_lr: config.refine_lr,
            refine_margin: config.refine_margin,
        })
    }

    /// All-zero weights with the given shapes; every node encodes to the origin.
    pub fn zeros(in_dim: usize, hidden: usize, latent: usize, c: f64) -> Self {
        Self {
            w1: Array2::zeros((in_dim, hidden)),
            b1: Array2::zeros((1, hidden)),
            w2: Array2::zeros((hidden, latent)),
            b2: Array2::zeros((1, latent)),
            fd: Array2::from_shape_vec((1, 2), vec![2.0, 1.0]).unwrap(),
            c,
            refine_steps: 0,
            refine_lr: 0.01,
            refine_margin: 0.0,
        }
    }

    pub fn fd_r(&self) -> f64 {
        self.fd[[0, 0]]
    }

    pub fn fd_tau(&self) -> f64 {
        self.fd[[0, 1]]
    }

    pub fn in_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn latent(&self) -> usize {
        self.w2.ncols()
    }

    pub fn manifold(&self) -> ManifoldConfig {
        ManifoldConfig { c: self.c, dim: self.latent() }
    }
}

/// Node features: the stored matrix, or one-hot degree capped at [`DEGREE_CAP`].
pub fn node_features(g: &GraphData, in_dim: usize) -> Result<Array2<f64>> {
    match &g.features {
        Some(rows) => {
            let mut x = Array2::zeros((g.n, in_dim));
            for (i, row) in rows.iter().enumerate() {
                if row.len() != in_dim {
                    return Err(Error::DimensionMismatch { expected: in_dim, got: row.len() });
                }
                for (j, v) in row.iter().enumerate() {
                    x[[i, j]] = *v;
                }
            }
            Ok(x)
        }
        None => {
            if in_dim != DEGREE_FEATURES {
                return Err(Error::DimensionMismatch { expected: in_dim, got: DEGREE_FEATURES });
            }
            let mut x = Array2::zeros((g.n, in_dim));
            for (i, d) in g.degrees().into_iter().enumerate() {
                x[[i, d.min(DEGREE_CAP)]] = 1.0;
            }
            Ok(x)
        }
    }
}

/// Handles of the encoder parameters on a tape.
struct EncoderVars {
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
    fd: Var,
}

fn record(tape: &mut Tape, p: &EncoderParams, trainable: bool) -> EncoderVars {
    let mut put = |a: &Array2<f64>| if trainable { tape.param(a.clone()) } else { tape.constant(a.clone()) };
    EncoderVars { w1: put(&p.w1), b1: put(&p.b1), w2: put(&p.w2), b2: put(&p.b2), fd: put(&p.fd) }
}

fn forward(tape: &mut Tape, v: &EncoderVars, c: f64, x: Array2<f64>, adj: Array2<f64>) -> Var {
    let x = tape.constant(x);
    let adj = tape.constant(adj);
    let z1 = tape.matmul(x, v.w1);
    let z1 = tape.add_row(z1, v.b1);
    let h1 = tape.expmap0(z1, c);
    let u1 = tape.logmap0(h1, c);
    let m1 = tape.matmul_sorted(adj, u1);
    let t1 = tape.tanh(m1);
    let h1 = tape.expmap0(t1, c);
    let u2 = tape.logmap0(h1, c);
    let z2 = tape.matmul(u2, v.w2);
    let m2 = tape.matmul_sorted(adj, z2);
    let m2 = tape.add_row(m2, v.b2);
    tape.expmap0(m2, c)
}

/// Every node pair of `g`, labelled by adjacency.
pub fn all_pair_targets(g: &GraphData, c: f64) -> EdgeTargets {
    let mut pairs = Vec::with_capacity(g.n * g.n.saturating_sub(1) / 2);
    let mut labels = Vec::with_capacity(pairs.capacity());
    let mut edges = g.edges.iter().peekable();
    for i in 0..g.n {
        for j in i + 1..g.n {
            let hit = edges.peek() == Some(&&(i, j));
            if hit {
                edges.next();
            }
            pairs.push((i, j));
            labels.push(if hit { 1.0 } else { 0.0 });
        }
    }
    EdgeTargets { pairs, labels, c, margin: 0.0 }
}

fn to_origin_tangent(z: &Array2<f64>, c: f64) -> Array2<f64> {
    let mut u = z.clone();
    for mut row in u.rows_mut() {
        let t = ball::logmap0(row.as_slice().unwrap(), c);
        row.iter_mut().zip(t).for_each(|(a, b)| *a = b);
    }
    u
}

/// Adam on the origin-tangent coordinates `u` against the full-pair
/// reconstruction loss of `g`, with the decoder held fixed. Returns ball
/// coordinates.
fn refine_tangent(params: &EncoderParams, g: &GraphData, mut u: Array2<f64>) -> (Array2<f64>, usize) {
    let c = params.c;
    let targets = EdgeTargets { margin: params.refine_margin, ..all_pair_targets(g, c) };
    let adam = AdamConfig { lr: params.refine_lr, weight_decay: 0.0, ..AdamConfig::default() };
    let mut opt = Adam::new(adam, &[&u]);
    let mut clamps = 0;
    for _ in 0..params.refine_steps {
        let mut tape = Tape::new();
        let uv = tape.param(u.clone());
        let fd = tape.constant(params.fd.clone());
        let h = tape.expmap0(uv, c);
        let loss = tape.fermi_dirac_bce(h, fd, targets.clone());
        clamps += tape.clamp_count();
        let gu = tape.backward(loss).take_or_zeros(uv, &u);
        opt.step(&mut [&mut u], &[gu]);
    }
    for mut row in u.rows_mut() {
        let mut h = ball::expmap0(row.as_slice().unwrap(), c);
        if ball::project(&mut h, c) {
            clamps += 1;
        }
        row.iter_mut().zip(h).for_each(|(a, b)| *a = b);
    }
    (u, clamps)
}

/// Refine ball embedding `z` of `g`; see [`EncoderConfig::refine_steps`].
pub fn refine_embedding(params: &EncoderParams, g: &GraphData, z: &Array2<f64>) -> Result<(Array2<f64>, usize)> {
    if g.n < 2 || params.refine_steps == 0 {
        return Ok((z.clone(), 0));
    }
    Ok(refine_tangent(params, g, to_origin_tangent(z, params.c)))
}

fn convolve(params: &EncoderParams, g: &GraphData) -> Result<(Array2<f64>, usize)> {
    let x = node_features(g, params.in_dim())?;
    let adj = normalized_adjacency_from_pairs(g.n, &g.edges);
    let mut tape = Tape::new();
    let vars = record(&mut tape, params, false);
    let out = forward(&mut tape, &vars, params.c, x, adj);
    Ok((tape.value(out).clone(), tape.clamp_count()))
}

fn check_encoded(z: Array2<f64>, clamps: usize) -> Result<(Array2<f64>, usize)> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encoder activations"));
    }
    Ok((z, clamps))
}

/// Ball coordinates of every node as an `n x d` matrix, plus the number of
/// rows that had to be clamped back inside the ball.
pub fn encode_matrix(params: &EncoderParams, g: &GraphData) -> Result<(Array2<f64>, usize)> {
    let (z, c1) = convolve(params, g)?;
    let (z, c2) = refine_embedding(params, g, &z)?;
    check_encoded(z, c1 + c2)
}

/// Like [`encode_matrix`], but adds uniform noise of width `jitter` to the
/// tangent coordinates before refinement.
///
/// Nodes the convolution cannot tell apart start at the same point and
/// gradient steps never separate them, so their decoded pair is always an
/// edge. The noise lets refinement place them independently; the result is
/// equivariant in distribution only.
pub fn encode_matrix_jittered(
    params: &EncoderParams,
    g: &GraphData,
    jitter: f64,
    rng: &mut impl Rng,
) -> Result<(Array2<f64>, usize)> {
    let (z, c1) = convolve(params, g)?;
    if g.n < 2 || params.refine_steps == 0 {
        return check_encoded(z, c1);
    }
    let mut u = to_origin_tangent(&z, params.c);
    u.mapv_inplace(|v| v + jitter * (rng.random::<f64>() - 0.5));
    let (z, c2) = refine_tangent(params, g, u);
    check_encoded(z, c1 + c2)
}

pub fn encode(params: &EncoderParams, g: &GraphData) -> Result<Vec<PoincarePoint>> {
    let (z, _) = encode_matrix(params, g)?;
    let config = params.manifold();
    z.rows().into_iter().map(|row| PoincarePoint::new(row.to_vec(), config)).collect()
}

/// `1 / (exp((d - r)/tau) + 1)` for a distance `d`.
pub fn fermi_dirac(d: f64, r: f64, tau: f64) -> f64 {
    let s = (d - r) / tau;
    if s > 0.0 {
        let e = (-s).exp();
        e / (1.0 + e)
    } else {
        1.0 / (s.exp() + 1.0)
    }
}

pub fn fermi_dirac_prob(params: &EncoderParams, x: &PoincarePoint, y: &PoincarePoint) -> Result<f64> {
    Ok(fermi_dirac(poincare_distance(x, y)?, params.fd_r(), params.fd_tau()))
}

/// Edges whose decoded probability exceeds `threshold`, for rows of `z` in the ball.
pub fn decode_edges(params: &EncoderParams, z: &[Vec<f64>], threshold: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            let d = ball::distance_arccosh(&z[i], &z[j], params.c);
            if fermi_dirac(d, params.fd_r(), params.fd_tau()) > threshold {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// All edges as positives plus an equal number of distinct non-edges drawn
/// uniformly. When the graph has no more non-edges than edges, every
/// non-edge is used.
pub fn sample_targets(g: &GraphData, c: f64, rng: &mut impl Rng) -> EdgeTargets {
    let n = g.n;
    let m = g.edges.len();
    let total = n * n.saturating_sub(1) / 2;
    let non_edges = total - m;
    let mut pairs = g.edges.clone();
    let mut labels = vec![1.0; m];
    let is_edge = |i: usize, j: usize| g.edges.binary_search(&(i.min(j), i.max(j))).is_ok();
    if non_edges <= m {
        for i in 0..n {
            for j in i + 1..n {
                if !is_edge(i, j) {
                    pairs.push((i, j));
                    labels.push(0.0);
                }
            }
        }
    } else {
        let mut chosen = std::collections::BTreeSet::new();
        while chosen.len() < m {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j && !is_edge(i, j) {
                chosen.insert((i.min(j), i.max(j)));
            }
        }
        for p in chosen {
            pairs.push(p);
            labels.push(0.0);
        }
    }
    EdgeTargets { pairs, labels, c, margin: 0.0 }
}

/// Reconstruction loss and its gradient for one graph with fixed targets
/// and message-passing edges.
pub fn reconstruction_loss(
    params: &EncoderParams,
    g: &GraphData,
    message_edges: &[(usize, usize)],
    targets: &EdgeTargets,
) -> Result<(f64, Vec<Array2<f64>>, usize)> {
    let x = node_features(g, params.in_dim())?;
    let adj = normalized_adjacency_from_pairs(g.n, message_edges);
    let mut tape = Tape::new();
    let vars = record(&mut tape, params, true);
    let z = forward(&mut tape, &vars, params.c, x, adj);
    let loss = tape.fermi_dirac_bce(z, vars.fd, targets.clone());
    let value = tape.value(loss)[[0, 0]];
    let mut grads = tape.backward(loss);
    let out = [vars.w1, vars.b1, vars.w2, vars.b2, vars.fd]
        .iter()
        .zip(params.tensors())
        .map(|(v, like)| grads.take_or_zeros(*v, like))
        .collect();
    Ok((value, out, tape.clamp_count()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderReport {
    /// Mean reconstruction loss per epoch.
    pub loss_trace: Vec<f64>,
    /// Ball projections triggered during training.
    pub clamp_count: usize,
}

/// Train on a set of graphs, one Adam step per graph per epoch.
pub fn train_autoencoder(
    graphs: &[GraphData],
    config: &EncoderConfig,
    seed: u64,
) -> Result<(EncoderParams, AutoencoderReport)> {
    let mut params = EncoderParams::init(config, seed)?;
    let mut opt = Adam::for_params(config.adam, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut report = AutoencoderReport { loss_trace: Vec::with_capacity(config.epochs), clamp_count: 0 };
    let usable: Vec<&GraphData> = graphs.iter().filter(|g| g.n >= 2 && !g.edges.is_empty()).collect();
    if config.epochs > 0 && usable.is_empty() {
        return Err(Error::Empty("no graph with edges to train on"));
    }
    let mut order: Vec<usize> = (0..usable.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &gi in &order {
            let g = usable[gi];
            let targets = sample_targets(g, config.c, &mut rng);
            let kept: Vec<(usize, usize)> = if config.edge_dropout > 0.0 {
                g.edges.iter().copied().filter(|_| !rng.random_bool(config.edge_dropout)).collect()
            } else {
                g.edges.clone()
            };
            let (loss, grads, clamps) = reconstruction_loss(&params, g, &kept, &targets)?;
            if !loss.is_finite() || grads.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged { epoch, detail: format!("autoencoder loss {loss}") });
            }
            report.clamp_count += clamps;
            total += loss;
            opt.step(&mut params.tensors_mut(), &grads);
            params.fd[[0, 1]] = params.fd[[0, 1]].max(MIN_TAU);
        }
        let mean = total / usable.len() as f64;
        log::debug!("autoencoder epoch {epoch}: loss {mean:.5}");
        report.loss_trace.push(mean);
    }
    if report.clamp_count > 0 {
        log::warn!("encoder clamped {} rows onto the ball boundary", report.clamp_count);
    }
    Ok((params, report))
}
