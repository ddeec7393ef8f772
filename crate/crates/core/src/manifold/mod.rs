//! Hyperbolic geometry in three models.
//!
//! The Poincaré ball is the working chart for embeddings; the Lorentz
//! hyperboloid and the Klein ball back the direction-transport identities
//! used to justify per-cluster tangent-space diffusion.
//!
//! Curvature is always passed as a positive magnitude `c`: the spaces have
//! sectional curvature `-c`, the ball is `{x : c|x|^2 < 1}` and the
//! hyperboloid is `{z : <z,z>_L = -1/c, z_0 > 0}`.

pub mod ball;
pub mod distributions;
pub mod lorentz;
pub mod poincare;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use distributions::{
    abs_normal_logdensity, riemannian_normal_log_normalizer, riemannian_normal_logdensity, sample_wrapped_normal,
    wrapped_normal_logdensity, FoldedNormalParams, WrappedNormalParams,
};
pub use lorentz::{
    klein_projection, klein_to_lorentz, lorentz_expmap, lorentz_inner, lorentz_logmap, lorentz_to_poincare,
    parallel_transport, poincare_to_lorentz, pole_map, LorentzPoint,
};
pub use poincare::{conformal_factor, mobius_add, poincare_distance, poincare_expmap, poincare_logmap, PoincarePoint};

/// Points must satisfy `c|x|^2 <= 1 - BALL_MARGIN`.
pub const BALL_MARGIN: f64 = 1e-12;

/// Tolerance for the hyperboloid and tangency invariants.
pub const LORENTZ_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldConfig {
    pub c: f64,
    pub dim: usize,
}

impl ManifoldConfig {
    pub fn new(c: f64, dim: usize) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidCurvature(c));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dim must be at least 1".into()));
        }
        Ok(Self { c, dim })
    }

    pub(crate) fn check_same(&self, other: &ManifoldConfig) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        if self.c != other.c {
            return Err(Error::CurvatureMismatch(self.c, other.c));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub(crate) fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
