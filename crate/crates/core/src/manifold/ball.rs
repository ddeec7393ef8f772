//! Slice-level Poincaré ball kernels.
//!
//! These skip validation and are what the training loops call in their inner
//! loops. The checked API lives in [`super::poincare`].

use super::{dot, norm_sq, BALL_MARGIN};

/// Largest admissible squared norm for curvature `c`.
#[inline]
pub fn max_norm_sq(c: f64) -> f64 {
    (1.0 - BALL_MARGIN) / c
}

/// Clamp `x` back inside the ball. Returns `true` when clamping happened.
pub fn project(x: &mut [f64], c: f64) -> bool {
    let n2 = norm_sq(x);
    let max = max_norm_sq(c);
    if n2 > max || !n2.is_finite() {
        let scale = (max / n2).sqrt();
        for v in x.iter_mut() {
            *v *= scale;
        }
        true
    } else {
        false
    }
}

pub fn mobius_add(x: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let xy = dot(x, y);
    let x2 = norm_sq(x);
    let y2 = norm_sq(y);
    let a = 1.0 + 2.0 * c * xy + c * y2;
    let b = 1.0 - c * x2;
    let denom = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
    x.iter().zip(y).map(|(xi, yi)| (a * xi + b * yi) / denom).collect()
}

#[inline]
pub(crate) fn artanh_clamped(x: f64) -> f64 {
    x.min(1.0 - 1e-16).atanh()
}

/// `d(x, y) = (2/sqrt(c)) artanh(sqrt(c) |(-x) (+) y|)`.
pub fn distance(x: &[f64], y: &[f64], c: f64) -> f64 {
    let neg_x: Vec<f64> = x.iter().map(|v| -v).collect();
    let w = mobius_add(&neg_x, y, c);
    let sc = c.sqrt();
    2.0 / sc * artanh_clamped(sc * norm_sq(&w).sqrt())
}

/// Same distance through `arccosh(1 + e)`; stable for nearly coincident points.
pub fn distance_arccosh(x: &[f64], y: &[f64], c: f64) -> f64 {
    let diff2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let bx = 1.0 - c * norm_sq(x);
    let by = 1.0 - c * norm_sq(y);
    let e = 2.0 * c * diff2 / (bx * by);
    (e + (e * (e + 2.0)).sqrt()).ln_1p() / c.sqrt()
}

#[inline]
pub fn conformal_factor(x: &[f64], c: f64) -> f64 {
    2.0 / (1.0 - c * norm_sq(x))
}

pub fn expmap0(v: &[f64], c: f64) -> Vec<f64> {
    let sc = c.sqrt();
    let n = norm_sq(v).sqrt();
    if n == 0.0 {
        return vec![0.0; v.len()];
    }
    let s = (sc * n).tanh() / (sc * n);
    let mut out: Vec<f64> = v.iter().map(|x| x * s).collect();
    project(&mut out, c);
    out
}

pub fn logmap0(x: &[f64], c: f64) -> Vec<f64> {
    let sc = c.sqrt();
    let n = norm_sq(x).sqrt();
    if n == 0.0 {
        return vec![0.0; x.len()];
    }
    let s = artanh_clamped(sc * n) / (sc * n);
    x.iter().map(|v| v * s).collect()
}

/// `exp_mu(v) = mu (+) tanh(sqrt(c) lambda_mu |v| / 2) v / (sqrt(c)|v|)`.
pub fn expmap(mu: &[f64], v: &[f64], c: f64) -> Vec<f64> {
    let n = norm_sq(v).sqrt();
    if n == 0.0 {
        return mu.to_vec();
    }
    let sc = c.sqrt();
    let lam = conformal_factor(mu, c);
    let s = (sc * lam * n / 2.0).tanh() / (sc * n);
    let step: Vec<f64> = v.iter().map(|x| x * s).collect();
    let mut out = mobius_add(mu, &step, c);
    project(&mut out, c);
    out
}

/// `log_mu(x) = (2 / (sqrt(c) lambda_mu)) artanh(sqrt(c)|w|) w/|w|`, `w = (-mu) (+) x`.
pub fn logmap(mu: &[f64], x: &[f64], c: f64) -> Vec<f64> {
    let neg_mu: Vec<f64> = mu.iter().map(|v| -v).collect();
    let w = mobius_add(&neg_mu, x, c);
    let n = norm_sq(&w).sqrt();
    if n == 0.0 {
        return vec![0.0; mu.len()];
    }
    let sc = c.sqrt();
    let lam = conformal_factor(mu, c);
    let s = 2.0 / (sc * lam) * artanh_clamped(sc * n) / n;
    w.iter().map(|v| v * s).collect()
}
