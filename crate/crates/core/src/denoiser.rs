//! The denoising network `f(x_t, A, t) -> x_0`.
//!
//! A node-wise MLP whose blocks mix each node with its neighbours:
//!
//! ```text
//! h_0 = x_t W_in + b_in + emb(t) W_te
//! h_l = silu((h_{l-1} + a_l A h_{l-1}) W_l + b_l)
//! out = h_L W_out + b_out
//! ```
//!
//! With a preconditioning table the network `F` above sees `c_in x_t` and the
//! prediction is `c_skip x_t + c_out F`, with coefficients chosen so that
//! input and regression target have unit scale at every step.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{diffuse_with_noise, sample_noise, DiffusionSchedule, NoiseMode};
use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, GraphData};
use crate::optim::{Adam, AdamConfig, Parameters};
use crate::tape::{Tape, Var};

pub const DEFAULT_WIDTHS: [usize; 4] = [32, 64, 64, 32];

/// Width profile of the full-scale network.
pub const FULL_WIDTHS: [usize; 6] = [64, 128, 256, 128, 256, 128];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub latent: usize,
    pub widths: Vec<usize>,
    pub time_dim: usize,
    pub epochs: usize,
    pub noise: NoiseMode,
    /// Data scale for preconditioning; `None` trains the bare network.
    pub sigma_data: Option<f64>,
    pub adam: AdamConfig,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            latent: 16,
            widths: DEFAULT_WIDTHS.to_vec(),
            time_dim: 32,
            epochs: 100,
            noise: NoiseMode::Angular,
            sigma_data: None,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
    /// `1 x 1` adjacency mixing weight.
    pub a: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    pub w_in: Array2<f64>,
    pub b_in: Array2<f64>,
    pub w_te: Array2<f64>,
    pub blocks: Vec<Block>,
    pub w_out: Array2<f64>,
    pub b_out: Array2<f64>,
    /// Row `t` holds `[c_in, c_skip, c_out]`; an empty table means none.
    /// Fixed during training.
    pub precond: Array2<f64>,
}

impl Parameters for DenoiserParams {
    fn named_tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out =
            vec![("w_in".to_string(), &self.w_in), ("b_in".to_string(), &self.b_in), ("w_te".to_string(), &self.w_te)];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.w"), &b.w));
            out.push((format!("block{i}.b"), &b.b));
            out.push((format!("block{i}.a"), &b.a));
        }
        out.push(("w_out".to_string(), &self.w_out));
        out.push(("b_out".to_string(), &self.b_out));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = vec![&mut self.w_in, &mut self.b_in, &mut self.w_te];
        for b in &mut self.blocks {
            out.push(&mut b.w);
            out.push(&mut b.b);
            out.push(&mut b.a);
        }
        out.push(&mut self.w_out);
        out.push(&mut self.b_out);
        out
    }
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a))
}

impl DenoiserParams {
    pub fn init(config: &DenoiserConfig, seed: u64) -> Result<Self> {
        Self::build(config, Some(&mut ChaCha8Rng::seed_from_u64(seed)))
    }

    /// Every tensor zero; the network then outputs zeros.
    pub fn zeros(config: &DenoiserConfig) -> Result<Self> {
        Self::build(config, None)
    }

    fn build(config: &DenoiserConfig, mut rng: Option<&mut ChaCha8Rng>) -> Result<Self> {
        let widths = &config.widths;
        if widths.is_empty() || widths.contains(&0) || config.latent == 0 || config.time_dim == 0 {
            return Err(Error::InvalidParameter(format!(
                "denoiser widths {widths:?}, latent {}, time dim {}",
                config.latent, config.time_dim
            )));
        }
        let mut mat = |r: usize, c: usize| match rng.as_deref_mut() {
            Some(g) => glorot(r, c, g),
            None => Array2::zeros((r, c)),
        };
        let w_in = mat(config.latent, widths[0]);
        let w_te = mat(config.time_dim, widths[0]);
        let mut blocks = Vec::with_capacity(widths.len() - 1);
        for pair in widths.windows(2) {
            blocks.push(Block { w: mat(pair[0], pair[1]), b: Array2::zeros((1, pair[1])), a: Array2::zeros((1, 1)) });
        }
        let w_out = mat(*widths.last().unwrap(), config.latent);
        if rng.is_some() {
            for b in &mut blocks {
                b.a[[0, 0]] = 0.5;
            }
        }
        Ok(Self {
            w_in,
            b_in: Array2::zeros((1, widths[0])),
            w_te,
            blocks,
            w_out,
            b_out: Array2::zeros((1, config.latent)),
            precond: Array2::zeros((0, 3)),
        })
    }

    pub fn latent(&self) -> usize {
        self.w_in.nrows()
    }

    pub fn time_dim(&self) -> usize {
        self.w_te.nrows()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.w_in.ncols()];
        w.extend(self.blocks.iter().map(|b| b.w.ncols()));
        w
    }
}

/// Preconditioning table for `x_t = s_t x_0 + n_t z` with `E[z^2] = 1` and
/// data of root-mean-square `sigma_data`:
/// `c_in = 1/v`, `c_skip = s sigma^2 / v^2`, `c_out = n sigma / v`, where
/// `v = sqrt(s^2 sigma^2 + n^2)`.
pub fn preconditioning(schedule: &DiffusionSchedule, sigma_data: f64) -> Result<Array2<f64>> {
    if !(sigma_data > 0.0 && sigma_data.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma_data {sigma_data}")));
    }
    let sd2 = sigma_data * sigma_data;
    Ok(Array2::from_shape_fn((schedule.steps + 1, 3), |(t, k)| {
        let s = schedule.signal_coeff(t);
        let n = schedule.noise_coeff(t);
        let v2 = s * s * sd2 + n * n;
        match k {
            0 => 1.0 / v2.sqrt(),
            1 => s * sd2 / v2,
            _ => n * sigma_data / v2.sqrt(),
        }
    }))
}

/// Sinusoidal features `(sin(t f_0), cos(t f_0), sin(t f_1), ...)` with
/// `f_i = 10000^(-i / (dim/2))`.
pub fn time_embedding(t: f64, dim: usize) -> Vec<f64> {
    let half = dim.div_ceil(2).max(1);
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim {
        let i = k / 2;
        let f = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        out.push(if k % 2 == 0 { (t * f).sin() } else { (t * f).cos() });
    }
    out
}

struct Vars {
    w_in: Var,
    b_in: Var,
    w_te: Var,
    blocks: Vec<(Var, Var, Var)>,
    w_out: Var,
    b_out: Var,
}

impl Vars {
    fn all(&self) -> Vec<Var> {
        let mut v = vec![self.w_in, self.b_in, self.w_te];
        for &(w, b, a) in &self.blocks {
            v.extend([w, b, a]);
        }
        v.extend([self.w_out, self.b_out]);
        v
    }
}

fn record(tape: &mut Tape, p: &DenoiserParams, trainable: bool) -> Vars {
    let mut put = |a: &Array2<f64>| if trainable { tape.param(a.clone()) } else { tape.constant(a.clone()) };
    Vars {
        w_in: put(&p.w_in),
        b_in: put(&p.b_in),
        w_te: put(&p.w_te),
        blocks: p.blocks.iter().map(|b| (put(&b.w), put(&b.b), put(&b.a))).collect(),
        w_out: put(&p.w_out),
        b_out: put(&p.b_out),
    }
}

fn forward(tape: &mut Tape, v: &Vars, x_t: &Array2<f64>, adj: &Array2<f64>, t: usize, params: &DenoiserParams) -> Var {
    let coeffs = (t < params.precond.nrows()).then(|| params.precond.row(t).to_vec());
    let time_dim = params.time_dim();
    let x = match &coeffs {
        Some(c) => tape.constant(x_t * c[0]),
        None => tape.constant(x_t.clone()),
    };
    let adj = tape.constant(adj.clone());
    let emb = Array2::from_shape_vec((1, time_dim), time_embedding(t as f64, time_dim)).unwrap();
    let emb = tape.constant(emb);
    let te = tape.matmul(emb, v.w_te);
    let h = tape.matmul(x, v.w_in);
    let h = tape.add_row(h, v.b_in);
    let mut h = tape.add_row(h, te);
    for &(w, b, a) in &v.blocks {
        let agg = tape.matmul(adj, h);
        let mix = tape.mul_scalar(agg, a);
        let z = tape.add(h, mix);
        let z = tape.matmul(z, w);
        let z = tape.add_row(z, b);
        h = tape.silu(z);
    }
    let out = tape.matmul(h, v.w_out);
    let out = tape.add_row(out, v.b_out);
    match coeffs {
        Some(c) => {
            let c_out = tape.constant(Array2::from_elem((1, 1), c[2]));
            let out = tape.mul_scalar(out, c_out);
            let skip = tape.constant(x_t * c[1]);
            tape.add(out, skip)
        }
        None => out,
    }
}

fn check_input(params: &DenoiserParams, x_t: &Array2<f64>, adj: &Array2<f64>) -> Result<()> {
    if x_t.ncols() != params.latent() {
        return Err(Error::DimensionMismatch { expected: params.latent(), got: x_t.ncols() });
    }
    if adj.dim() != (x_t.nrows(), x_t.nrows()) {
        return Err(Error::Shape(format!("adjacency {:?} for {} nodes", adj.dim(), x_t.nrows())));
    }
    Ok(())
}

/// Prediction of `x_0` with an explicit propagation matrix.
pub fn predict_with_adjacency(
    params: &DenoiserParams,
    x_t: &Array2<f64>,
    adj: &Array2<f64>,
    t: usize,
) -> Result<Array2<f64>> {
    check_input(params, x_t, adj)?;
    let mut tape = Tape::new();
    let vars = record(&mut tape, params, false);
    let out = forward(&mut tape, &vars, x_t, adj, t, params);
    Ok(tape.value(out).clone())
}

/// Prediction of `x_0` conditioned on the normalized adjacency of `g`.
pub fn denoise_predict(params: &DenoiserParams, x_t: &Array2<f64>, g: &GraphData, t: usize) -> Result<Array2<f64>> {
    if g.n != x_t.nrows() {
        return Err(Error::Shape(format!("{} rows for a {}-node graph", x_t.nrows(), g.n)));
    }
    predict_with_adjacency(params, x_t, &normalized_adjacency(g), t)
}

/// MSE between the prediction for `x_t` and `x0`, with gradients in
/// [`Parameters::tensors`] order.
pub fn denoiser_loss(
    params: &DenoiserParams,
    x_t: &Array2<f64>,
    adj: &Array2<f64>,
    t: usize,
    x0: &Array2<f64>,
) -> Result<(f64, Vec<Array2<f64>>)> {
    check_input(params, x_t, adj)?;
    if x0.dim() != x_t.dim() {
        return Err(Error::Shape(format!("x0 {:?} vs x_t {:?}", x0.dim(), x_t.dim())));
    }
    let mut tape = Tape::new();
    let vars = record(&mut tape, params, true);
    let out = forward(&mut tape, &vars, x_t, adj, t, params);
    let target = tape.constant(x0.clone());
    let loss = tape.mse(out, target);
    let value = tape.value(loss)[[0, 0]];
    let mut grads = tape.backward(loss);
    let g = vars.all().into_iter().zip(params.tensors()).map(|(v, like)| grads.take_or_zeros(v, like)).collect();
    Ok((value, g))
}

/// One training graph: tangent coordinates, per-node sign rows and the
/// propagation matrix of its true adjacency.
#[derive(Debug, Clone)]
pub struct DenoiserExample {
    pub x0: Array2<f64>,
    pub signs: Array2<f64>,
    pub adj: Array2<f64>,
}

impl DenoiserExample {
    pub fn new(x0: Array2<f64>, signs: Array2<f64>, g: &GraphData) -> Result<Self> {
        if x0.dim() != signs.dim() || x0.nrows() != g.n {
            return Err(Error::Shape(format!("x0 {:?}, signs {:?}, {} nodes", x0.dim(), signs.dim(), g.n)));
        }
        Ok(Self { x0, signs, adj: normalized_adjacency(g) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserReport {
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
    /// Epoch at which a non-finite loss stopped training; the returned
    /// parameters are the last finite ones.
    pub diverged_at: Option<usize>,
}

/// One Adam step per graph per epoch; `t` is drawn uniformly per graph.
pub fn train_denoiser(
    examples: &[DenoiserExample],
    schedule: &DiffusionSchedule,
    config: &DenoiserConfig,
    seed: u64,
) -> Result<(DenoiserParams, DenoiserReport)> {
    let mut params = DenoiserParams::init(config, seed)?;
    if let Some(sd) = config.sigma_data {
        params.precond = preconditioning(schedule, sd)?;
    }
    let mut opt = Adam::for_params(config.adam, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut report = DenoiserReport { loss_trace: Vec::with_capacity(config.epochs), diverged_at: None };
    let usable: Vec<&DenoiserExample> = examples.iter().filter(|e| e.x0.nrows() > 0).collect();
    if config.epochs > 0 && usable.is_empty() {
        return Err(Error::Empty("no training examples"));
    }
    let mut order: Vec<usize> = (0..usable.len()).collect();
    'epochs: for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let ex = usable[i];
            let t = rng.random_range(1..=schedule.steps);
            let signs = match config.noise {
                NoiseMode::Angular => Some(&ex.signs),
                NoiseMode::White => None,
            };
            let z = sample_noise(ex.x0.dim(), signs, &mut rng)?;
            let x_t = diffuse_with_noise(&ex.x0, &z, t, schedule)?;
            let (loss, grads) = denoiser_loss(&params, &x_t, &ex.adj, t, &ex.x0)?;
            if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                log::error!("denoiser loss became {loss} in epoch {epoch}; keeping last finite parameters");
                report.diverged_at = Some(epoch);
                break 'epochs;
            }
            total += loss;
            opt.step(&mut params.tensors_mut(), &grads);
        }
        let mean = total / usable.len() as f64;
        log::debug!("denoiser epoch {epoch}: loss {mean:.5}");
        report.loss_trace.push(mean);
    }
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::gen_community;

    fn small_config() -> DenoiserConfig {
        DenoiserConfig { latent: 4, widths: vec![8, 12, 8], time_dim: 6, ..Default::default() }
    }

    #[test]
    fn time_embedding_properties() {
        let e0 = time_embedding(0.0, 32);
        for (k, v) in e0.iter().enumerate() {
            assert_eq!(*v, if k % 2 == 0 { 0.0 } else { 1.0 });
        }
        assert_eq!(time_embedding(17.0, 32), time_embedding(17.0, 32));
        let all: Vec<Vec<f64>> = (1..=1000).map(|t| time_embedding(t as f64, 32)).collect();
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                let d: f64 = all[i].iter().zip(&all[j]).map(|(a, b)| (a - b).powi(2)).sum();
                assert!(d > 1e-12, "t={} and t={} collide", i + 1, j + 1);
            }
            assert!(all[i].iter().map(|v| v * v).sum::<f64>() <= 16.0 + 1e-9);
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let p = DenoiserParams::zeros(&DenoiserConfig::default()).unwrap();
        let g = gen_community(1, 12..=12, 0.3, 0.05, 0).unwrap().remove(0);
        let x = Array2::from_elem((12, 16), 0.3);
        let out = denoise_predict(&p, &x, &g, 500).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prediction_is_permutation_equivariant() {
        let p = DenoiserParams::init(&DenoiserConfig::default(), 3).unwrap();
        let g = gen_community(1, 15..=15, 0.4, 0.05, 1).unwrap().remove(0);
        let x = Array2::from_shape_fn((15, 16), |(i, j)| ((i * 16 + j) as f64 * 0.7).sin());
        let perm: Vec<usize> = (0..15).map(|i| (i * 4 + 7) % 15).collect();
        let mut xp = Array2::zeros(x.raw_dim());
        for i in 0..15 {
            xp.row_mut(perm[i]).assign(&x.row(i));
        }
        let a = denoise_predict(&p, &x, &g, 321).unwrap();
        let b = denoise_predict(&p, &xp, &g.permute(&perm), 321).unwrap();
        for i in 0..15 {
            for k in 0..16 {
                assert!((a[[i, k]] - b[[perm[i], k]]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn extreme_inputs_stay_finite() {
        let p = DenoiserParams::init(&DenoiserConfig::default(), 4).unwrap();
        let g = gen_community(1, 20..=20, 0.3, 0.05, 2).unwrap().remove(0);
        let mut x = Array2::from_shape_fn((20, 16), |(i, j)| if (i + j) % 2 == 0 { 1.0f64 } else { -1.0 });
        for mut row in x.rows_mut() {
            let n = row.dot(&row).sqrt();
            row.mapv_inplace(|v| v * 1e3 / n);
        }
        assert!(denoise_predict(&p, &x, &g, 1000).unwrap().iter().all(|v| v.is_finite()));
    }

    fn check_gradients(p: &DenoiserParams) {
        let g = gen_community(1, 6..=6, 0.6, 0.2, 3).unwrap().remove(0);
        let adj = normalized_adjacency(&g);
        let x_t = Array2::from_shape_fn((6, 4), |(i, j)| ((i * 4 + j) as f64 * 1.3).cos());
        let x0 = Array2::from_shape_fn((6, 4), |(i, j)| ((i + j) as f64 * 0.4).sin() * 0.5);
        let (_, grads) = denoiser_loss(p, &x_t, &adj, 77, &x0).unwrap();
        let h = 1e-5;
        for k in 0..grads.len() {
            for idx in 0..grads[k].len() {
                let mut plus = p.clone();
                let mut minus = p.clone();
                let (r, c) = (idx / grads[k].ncols(), idx % grads[k].ncols());
                plus.tensors_mut()[k][[r, c]] += h;
                minus.tensors_mut()[k][[r, c]] -= h;
                let fp = denoiser_loss(&plus, &x_t, &adj, 77, &x0).unwrap().0;
                let fm = denoiser_loss(&minus, &x_t, &adj, 77, &x0).unwrap().0;
                let fd = (fp - fm) / (2.0 * h);
                let an = grads[k][[r, c]];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-7);
                assert!(err < 1e-4, "tensor {k} [{r},{c}]: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = small_config();
        let mut p = DenoiserParams::init(&cfg, 5).unwrap();
        check_gradients(&p);
        p.precond = preconditioning(&DiffusionSchedule::standard(), 0.7).unwrap();
        check_gradients(&p);
    }

    #[test]
    fn preconditioned_output() {
        let s = DiffusionSchedule::standard();
        let table = preconditioning(&s, 0.5).unwrap();
        assert_eq!(table.dim(), (s.steps + 1, 3));
        assert!(preconditioning(&s, 0.0).is_err());
        let row = table.row(0);
        assert!((row[0] - 2.0).abs() < 1e-12 && (row[1] - 1.0).abs() < 1e-12 && row[2].abs() < 1e-12);
        // Input scaling gives unit variance for x_t at every t.
        for t in [1, 250, 1000] {
            let (sc, n) = (s.signal_coeff(t), s.noise_coeff(t));
            let var = sc * sc * 0.25 + n * n;
            assert!((table[[t, 0]] * table[[t, 0]] * var - 1.0).abs() < 1e-12);
        }

        let bare = DenoiserParams::init(&small_config(), 8).unwrap();
        let mut pre = bare.clone();
        pre.precond = table.clone();
        let g = gen_community(1, 7..=7, 0.5, 0.2, 6).unwrap().remove(0);
        let x = Array2::from_shape_fn((7, 4), |(i, j)| ((i * 4 + j) as f64 * 0.9).sin());
        assert_eq!(denoise_predict(&pre, &x, &g, 0).unwrap(), x);
        let t = 400;
        let c = table.row(t);
        let f = denoise_predict(&bare, &(&x * c[0]), &g, t).unwrap();
        let want = &x * c[1] + &f * c[2];
        let got = denoise_predict(&pre, &x, &g, t).unwrap();
        assert!(got.iter().zip(want.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    fn examples(count: usize, d: usize, seed: u64) -> Vec<DenoiserExample> {
        gen_community(count, 12..=12, 0.3, 0.05, seed)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(gi, g)| {
                let x0 = Array2::from_shape_fn((g.n, d), |(i, j)| ((i * d + j + gi) as f64 * 0.61).sin() * 0.4);
                let signs = x0.mapv(|v| if v < 0.0 { -1.0 } else { 1.0 });
                DenoiserExample::new(x0, signs, g).unwrap()
            })
            .collect()
    }

    #[test]
    fn zero_epochs_and_determinism() {
        let cfg = DenoiserConfig { epochs: 0, ..small_config() };
        let s = DiffusionSchedule::standard();
        let ex = examples(3, 4, 0);
        let (p, _) = train_denoiser(&ex, &s, &cfg, 9).unwrap();
        assert_eq!(p, DenoiserParams::init(&cfg, 9).unwrap());
        let cfg = DenoiserConfig { epochs: 3, ..small_config() };
        let a = train_denoiser(&ex, &s, &cfg, 9).unwrap();
        let b = train_denoiser(&ex, &s, &cfg, 9).unwrap();
        assert_eq!(a.1.loss_trace, b.1.loss_trace);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn loss_is_invariant_to_relabeling() {
        let p = DenoiserParams::init(&DenoiserConfig::default(), 6).unwrap();
        let g = gen_community(1, 14..=14, 0.3, 0.05, 4).unwrap().remove(0);
        let x0 = Array2::from_shape_fn((14, 16), |(i, j)| ((i * 3 + j) as f64 * 0.2).cos());
        let x_t = Array2::from_shape_fn((14, 16), |(i, j)| ((i * 5 + j) as f64 * 0.3).sin());
        let perm: Vec<usize> = (0..14).rev().collect();
        let mv = |m: &Array2<f64>| {
            let mut out = Array2::zeros(m.raw_dim());
            for i in 0..14 {
                out.row_mut(perm[i]).assign(&m.row(i));
            }
            out
        };
        let a = denoiser_loss(&p, &x_t, &normalized_adjacency(&g), 40, &x0).unwrap().0;
        let b = denoiser_loss(&p, &mv(&x_t), &normalized_adjacency(&g.permute(&perm)), 40, &mv(&x0)).unwrap().0;
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn overfits_a_single_graph() {
        let cfg = DenoiserConfig { epochs: 5000, ..Default::default() };
        let s = DiffusionSchedule::standard();
        let ex = examples(1, 16, 7);
        let (_, report) = train_denoiser(&ex, &s, &cfg, 1).unwrap();
        let tail: f64 = report.loss_trace[4900..].iter().sum::<f64>() / 100.0;
        assert!(tail < 0.05, "final loss {tail}");
    }
}
