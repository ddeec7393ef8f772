use serde::{Deserialize, Serialize};

use super::{ball, check_finite, norm_sq, ManifoldConfig, BALL_MARGIN};
use crate::error::{Error, Result};

/// A point strictly inside the Poincaré ball of curvature `-c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincarePoint {
    coords: Vec<f64>,
    config: ManifoldConfig,
}

impl PoincarePoint {
    pub fn new(coords: Vec<f64>, config: ManifoldConfig) -> Result<Self> {
        if coords.len() != config.dim {
            return Err(Error::DimensionMismatch { expected: config.dim, got: coords.len() });
        }
        check_finite(&coords, "poincare point")?;
        let r = config.c * norm_sq(&coords);
        if r > 1.0 - BALL_MARGIN {
            return Err(Error::OutsideBall(r));
        }
        Ok(Self { coords, config })
    }

    /// Build from coordinates produced by a kernel that already projects.
    pub(crate) fn from_raw(coords: Vec<f64>, config: ManifoldConfig) -> Self {
        debug_assert_eq!(coords.len(), config.dim);
        Self { coords, config }
    }

    pub fn origin(config: ManifoldConfig) -> Self {
        Self { coords: vec![0.0; config.dim], config }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn config(&self) -> ManifoldConfig {
        self.config
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Möbius negation `(-)x`.
    pub fn neg(&self) -> Self {
        Self { coords: self.coords.iter().map(|v| -v).collect(), config: self.config }
    }
}

pub fn mobius_add(x: &PoincarePoint, y: &PoincarePoint) -> Result<PoincarePoint> {
    x.config.check_same(&y.config)?;
    let mut out = ball::mobius_add(&x.coords, &y.coords, x.config.c);
    ball::project(&mut out, x.config.c);
    Ok(PoincarePoint::from_raw(out, x.config))
}

pub fn poincare_distance(x: &PoincarePoint, y: &PoincarePoint) -> Result<f64> {
    x.config.check_same(&y.config)?;
    if x.coords == y.coords {
        return Ok(0.0);
    }
    Ok(ball::distance(&x.coords, &y.coords, x.config.c))
}

/// `lambda_x = 2 / (1 - c|x|^2)`.
pub fn conformal_factor(x: &PoincarePoint) -> f64 {
    ball::conformal_factor(&x.coords, x.config.c)
}

pub fn poincare_expmap(mu: &PoincarePoint, v: &[f64]) -> Result<PoincarePoint> {
    if v.len() != mu.config.dim {
        return Err(Error::DimensionMismatch { expected: mu.config.dim, got: v.len() });
    }
    check_finite(v, "tangent vector")?;
    Ok(PoincarePoint::from_raw(ball::expmap(&mu.coords, v, mu.config.c), mu.config))
}

pub fn poincare_logmap(mu: &PoincarePoint, x: &PoincarePoint) -> Result<Vec<f64>> {
    mu.config.check_same(&x.config)?;
    Ok(ball::logmap(&mu.coords, &x.coords, mu.config.c))
}
