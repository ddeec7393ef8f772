//! Forward geometric diffusion on cluster tangent coordinates.
//!
//! ```text
//! x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) z + delta tanh(sqrt(c) lambda_o t / T0) x_0
//! ```
//!
//! where `z = s * |eps|` takes its coordinate signs `s` from the node's
//! cluster row of the direction matrix and `lambda_o = 2`.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hkmeans::ClusterModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    /// Number of steps `T`.
    pub steps: usize,
    /// `betas[t - 1]` is `beta_t`.
    pub betas: Vec<f64>,
    /// `alpha_bars[t - 1]` is `abar_t`.
    pub alpha_bars: Vec<f64>,
    pub delta: f64,
    pub t0: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseMode {
    /// Sign-constrained folded noise.
    Angular,
    /// Isotropic Gaussian noise.
    White,
}

pub fn make_schedule(
    steps: usize,
    beta_start: f64,
    beta_end: f64,
    delta: f64,
    t0: f64,
    c: f64,
) -> Result<DiffusionSchedule> {
    if steps == 0 {
        return Err(Error::InvalidParameter("schedule needs at least one step".into()));
    }
    if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::InvalidParameter(format!("beta range [{beta_start}, {beta_end}]")));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta = {delta}")));
    }
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(Error::InvalidParameter(format!("T0 = {t0}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidCurvature(c));
    }
    let betas: Vec<f64> =
        (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
    let alpha_bars = betas
        .iter()
        .scan(1.0, |acc, b| {
            *acc *= 1.0 - b;
            Some(*acc)
        })
        .collect();
    Ok(DiffusionSchedule { steps, betas, alpha_bars, delta, t0, c })
}

impl DiffusionSchedule {
    /// Linear 1e-4..0.02 over 1000 steps, `delta = 0.5`, `T0 = 1000`, `c = 1`.
    pub fn standard() -> Self {
        make_schedule(1000, 1e-4, 0.02, 0.5, 1000.0, 1.0).expect("valid constants")
    }

    /// `abar_t` with `abar_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// `delta tanh(sqrt(c) * 2 * t / T0)`.
    pub fn radial_coeff(&self, t: f64) -> f64 {
        self.delta * (self.c.sqrt() * 2.0 * t / self.t0).tanh()
    }

    /// Coefficient of `x_0` in `x_t`.
    pub fn signal_coeff(&self, t: usize) -> f64 {
        self.alpha_bar(t).sqrt() + self.radial_coeff(t as f64)
    }

    /// Coefficient of the noise in `x_t`.
    pub fn noise_coeff(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar(t)).sqrt()
    }
}

pub fn radial_coeff(s: &DiffusionSchedule, t: f64) -> f64 {
    s.radial_coeff(t)
}

/// `n x d` matrix whose row `i` is the sign row of node `i`'s cluster.
pub fn node_signs(model: &ClusterModel, clusters: &[usize]) -> Array2<f64> {
    let d = model.config.dim;
    let mut out = Array2::zeros((clusters.len(), d));
    for (mut row, &k) in out.rows_mut().into_iter().zip(clusters) {
        for (o, &s) in row.iter_mut().zip(&model.sign_matrix[k]) {
            *o = f64::from(s);
        }
    }
    out
}

/// `signs * |eps|` with `eps ~ N(0, I)`.
pub fn angular_noise(signs: &Array2<f64>, rng: &mut impl Rng) -> Array2<f64> {
    signs.mapv(|s| {
        let e: f64 = rng.sample(StandardNormal);
        s * e.abs()
    })
}

pub fn white_noise(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Noise for one corruption: angular when `signs` is given, white otherwise.
pub fn sample_noise(shape: (usize, usize), signs: Option<&Array2<f64>>, rng: &mut impl Rng) -> Result<Array2<f64>> {
    match signs {
        Some(s) => {
            if s.dim() != shape {
                return Err(Error::Shape(format!("signs {:?} vs data {:?}", s.dim(), shape)));
            }
            Ok(angular_noise(s, rng))
        }
        None => Ok(white_noise(shape.0, shape.1, rng)),
    }
}

/// `x_t` for a given noise draw `z`.
pub fn diffuse_with_noise(x0: &Array2<f64>, z: &Array2<f64>, t: usize, s: &DiffusionSchedule) -> Result<Array2<f64>> {
    if x0.dim() != z.dim() {
        return Err(Error::Shape(format!("x0 {:?} vs noise {:?}", x0.dim(), z.dim())));
    }
    if t > s.steps {
        return Err(Error::InvalidParameter(format!("t = {t} beyond T = {}", s.steps)));
    }
    Ok(x0 * s.signal_coeff(t) + z * s.noise_coeff(t))
}

/// Corrupt `x0` to step `t` in `[1, T]`. With `signs = None` the noise is white.
pub fn forward_diffuse(
    x0: &Array2<f64>,
    t: usize,
    s: &DiffusionSchedule,
    signs: Option<&Array2<f64>>,
    rng: &mut impl Rng,
) -> Result<Array2<f64>> {
    if t == 0 || t > s.steps {
        return Err(Error::InvalidParameter(format!("t = {t} outside [1, {}]", s.steps)));
    }
    let z = sample_noise(x0.dim(), signs, rng)?;
    diffuse_with_noise(x0, &z, t, s)
}

/// Mean squared error over all entries.
pub fn diffusion_loss(predicted: &Array2<f64>, truth: &Array2<f64>) -> Result<f64> {
    if predicted.dim() != truth.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", predicted.dim(), truth.dim())));
    }
    if predicted.is_empty() {
        return Ok(0.0);
    }
    Ok((predicted - truth).mapv(|v| v * v).mean().unwrap())
}

/// Signal-to-noise ratio per step, `result[t]` for `t = 0..=T`:
///
/// ```text
/// SNR(t) = |(sqrt(abar_t) + radial(t)) x_0|^2 / E|sqrt(1 - abar_t) (z - E z)|^2
/// ```
///
/// The noise power counts only the fluctuating part of `z`; the mean of
/// folded noise is a deterministic shift, not noise. One set of `trials`
/// draws is shared by every step. `result[0]` is `+inf`.
pub fn snr_curve(
    x0: &Array2<f64>,
    s: &DiffusionSchedule,
    signs: &Array2<f64>,
    mode: NoiseMode,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    if signs.dim() != x0.dim() {
        return Err(Error::Shape(format!("signs {:?} vs data {:?}", signs.dim(), x0.dim())));
    }
    let fold_mean = (2.0 / std::f64::consts::PI).sqrt();
    let mut power = 0.0;
    for _ in 0..trials {
        let z = match mode {
            NoiseMode::Angular => angular_noise(signs, rng) - signs * fold_mean,
            NoiseMode::White => white_noise(x0.nrows(), x0.ncols(), rng),
        };
        power += z.mapv(|v| v * v).sum();
    }
    power /= trials as f64;
    let x2 = x0.mapv(|v| v * v).sum();
    let mut out = Vec::with_capacity(s.steps + 1);
    out.push(f64::INFINITY);
    for t in 1..=s.steps {
        let noise = (1.0 - s.alpha_bar(t)) * power;
        let signal = s.signal_coeff(t).powi(2) * x2;
        out.push(if noise > 0.0 { signal / noise } else { f64::INFINITY });
    }
    Ok(out)
}
