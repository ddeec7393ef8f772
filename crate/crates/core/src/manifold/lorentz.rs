//! Lorentz hyperboloid and Klein ball.

use serde::{Deserialize, Serialize};

use super::{check_finite, norm_sq, ManifoldConfig, PoincarePoint, LORENTZ_TOL};
use crate::error::{Error, Result};

/// A point on the upper sheet `<z,z>_L = -1/c`, stored with `dim + 1` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzPoint {
    coords: Vec<f64>,
    config: ManifoldConfig,
}

impl LorentzPoint {
    pub fn new(coords: Vec<f64>, config: ManifoldConfig) -> Result<Self> {
        if coords.len() != config.dim + 1 {
            return Err(Error::DimensionMismatch { expected: config.dim + 1, got: coords.len() });
        }
        check_finite(&coords, "lorentz point")?;
        let expected = -1.0 / config.c;
        let got = inner(&coords, &coords);
        let scale = (coords[0] * coords[0] * config.c).max(1.0);
        if coords[0] <= 0.0 || (got - expected).abs() * config.c > LORENTZ_TOL * scale {
            return Err(Error::OffHyperboloid { got, expected });
        }
        Ok(Self { coords, config })
    }

    /// Lift spatial coordinates onto the sheet by solving for `z_0`.
    pub fn from_spatial(spatial: &[f64], config: ManifoldConfig) -> Result<Self> {
        if spatial.len() != config.dim {
            return Err(Error::DimensionMismatch { expected: config.dim, got: spatial.len() });
        }
        check_finite(spatial, "lorentz point")?;
        Ok(Self { coords: lift(spatial, config.c), config })
    }

    /// The apex `(1/sqrt(c), 0, ..., 0)`.
    pub fn origin(config: ManifoldConfig) -> Self {
        let mut coords = vec![0.0; config.dim + 1];
        coords[0] = 1.0 / config.c.sqrt();
        Self { coords, config }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn config(&self) -> ManifoldConfig {
        self.config
    }

    /// Geodesic distance to another point.
    pub fn distance(&self, other: &LorentzPoint) -> Result<f64> {
        self.config.check_same(&other.config)?;
        let e = half_gap(&self.coords, &other.coords, self.config.c);
        Ok(arccosh_1p(e) / self.config.c.sqrt())
    }
}

fn lift(spatial: &[f64], c: f64) -> Vec<f64> {
    let mut coords = Vec::with_capacity(spatial.len() + 1);
    coords.push((1.0 / c + norm_sq(spatial)).sqrt());
    coords.extend_from_slice(spatial);
    coords
}

#[inline]
fn inner(u: &[f64], v: &[f64]) -> f64 {
    -u[0] * v[0] + u[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum::<f64>()
}

/// `(c/2) <z - mu, z - mu>_L = -c<mu,z>_L - 1`, computed from differences.
fn half_gap(mu: &[f64], z: &[f64], c: f64) -> f64 {
    let d: Vec<f64> = z.iter().zip(mu).map(|(a, b)| a - b).collect();
    (0.5 * c * inner(&d, &d)).max(0.0)
}

/// `arccosh(1 + e)` without cancellation near `e = 0`.
fn arccosh_1p(e: f64) -> f64 {
    (e + (e * (e + 2.0)).sqrt()).ln_1p()
}

fn check_tangent(mu: &LorentzPoint, u: &[f64]) -> Result<()> {
    if u.len() != mu.coords.len() {
        return Err(Error::DimensionMismatch { expected: mu.coords.len(), got: u.len() });
    }
    check_finite(u, "tangent vector")?;
    let ip = inner(u, &mu.coords);
    let scale = (norm_sq(u).sqrt() * norm_sq(&mu.coords).sqrt()).max(1.0);
    if ip.abs() > LORENTZ_TOL * scale {
        return Err(Error::NotTangent(ip));
    }
    Ok(())
}

/// `<u,v>_L = -u_0 v_0 + sum_i u_i v_i`.
pub fn lorentz_inner(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() < 2 {
        return Err(Error::InvalidParameter("lorentz vectors need at least two coordinates".into()));
    }
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    Ok(inner(u, v))
}

pub fn lorentz_expmap(mu: &LorentzPoint, u: &[f64]) -> Result<LorentzPoint> {
    check_tangent(mu, u)?;
    let n = inner(u, u).max(0.0).sqrt();
    if n == 0.0 {
        return Ok(mu.clone());
    }
    let c = mu.config.c;
    let sn = c.sqrt() * n;
    let (ch, sh) = (sn.cosh(), sn.sinh() / sn);
    let z: Vec<f64> = mu.coords.iter().zip(u).map(|(m, v)| ch * m + sh * v).collect();
    // re-solve z_0 from the spatial part to stay on the sheet
    Ok(LorentzPoint { coords: lift(&z[1..], c), config: mu.config })
}

pub fn lorentz_logmap(mu: &LorentzPoint, z: &LorentzPoint) -> Result<Vec<f64>> {
    mu.config.check_same(&z.config)?;
    let c = mu.config.c;
    if mu.coords == z.coords {
        return Ok(vec![0.0; mu.coords.len()]);
    }
    let e = half_gap(&mu.coords, &z.coords, c).max(1e-15);
    let scale = arccosh_1p(e) / (e * (e + 2.0)).sqrt();
    // z - alpha mu with alpha = 1 + e
    let mut u: Vec<f64> = z.coords.iter().zip(&mu.coords).map(|(zi, mi)| scale * ((zi - mi) - e * mi)).collect();
    let ip = inner(&u, &mu.coords);
    for (ui, mi) in u.iter_mut().zip(&mu.coords) {
        *ui += c * ip * mi;
    }
    Ok(u)
}

/// Transport `v` from `T_nu` to `T_mu` along the connecting geodesic.
pub fn parallel_transport(nu: &LorentzPoint, mu: &LorentzPoint, v: &[f64]) -> Result<Vec<f64>> {
    nu.config.check_same(&mu.config)?;
    check_tangent(nu, v)?;
    if nu.coords == mu.coords {
        return Ok(v.to_vec());
    }
    let c = nu.config.c;
    let alpha = -c * inner(&nu.coords, &mu.coords);
    let coef = c * inner(&mu.coords, v) / (alpha + 1.0);
    Ok(v.iter().zip(nu.coords.iter().zip(&mu.coords)).map(|(vi, (n, m))| vi + coef * (n + m)).collect())
}

/// `pi_{H->K}(z)_i = z_i / z_0`.
pub fn klein_projection(z: &LorentzPoint) -> Vec<f64> {
    let z0 = z.coords[0];
    z.coords[1..].iter().map(|v| v / z0).collect()
}

/// Inverse of [`klein_projection`]: `(1/sqrt(c)) (1, k) / sqrt(1 - |k|^2)`.
pub fn klein_to_lorentz(k: &[f64], config: ManifoldConfig) -> Result<LorentzPoint> {
    if k.len() != config.dim {
        return Err(Error::DimensionMismatch { expected: config.dim, got: k.len() });
    }
    check_finite(k, "klein point")?;
    let n2 = norm_sq(k);
    if n2 >= 1.0 {
        return Err(Error::OutsideBall(n2));
    }
    let s = 1.0 / (config.c.sqrt() * (1.0 - n2).sqrt());
    let mut coords = Vec::with_capacity(k.len() + 1);
    coords.push(s);
    coords.extend(k.iter().map(|v| v * s));
    Ok(LorentzPoint { coords, config })
}

/// Spherical pole map from the apex tangent space to the Klein ball.
///
/// Takes a full `dim + 1` tangent vector at the apex (time component zero)
/// and returns `tanh(sqrt(c)|x|) x/|x|` on its spatial part, so that
/// `pole_map(lorentz_logmap(origin, h)) == klein_projection(h)`.
pub fn pole_map(x: &[f64], c: f64) -> Result<Vec<f64>> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidCurvature(c));
    }
    if x.len() < 2 {
        return Err(Error::InvalidParameter("apex tangent vectors need at least two coordinates".into()));
    }
    check_finite(x, "apex tangent vector")?;
    let spatial = &x[1..];
    let n = norm_sq(spatial).sqrt();
    if x[0].abs() > LORENTZ_TOL * n.max(1.0) {
        return Err(Error::NotTangent(x[0] / c.sqrt()));
    }
    if n == 0.0 {
        return Ok(vec![0.0; spatial.len()]);
    }
    let s = (c.sqrt() * n).tanh() / n;
    Ok(spatial.iter().map(|v| v * s).collect())
}

pub fn poincare_to_lorentz(p: &PoincarePoint) -> LorentzPoint {
    let config = p.config();
    let c = config.c;
    let sc = c.sqrt();
    let n2 = norm_sq(p.coords());
    let denom = 1.0 - c * n2;
    let spatial: Vec<f64> = p.coords().iter().map(|v| 2.0 * v / denom).collect();
    LorentzPoint {
        coords: {
            let mut z = Vec::with_capacity(config.dim + 1);
            z.push((1.0 + c * n2) / (sc * denom));
            z.extend(spatial);
            z
        },
        config,
    }
}

pub fn lorentz_to_poincare(z: &LorentzPoint) -> PoincarePoint {
    let sc = z.config.c.sqrt();
    let denom = 1.0 + sc * z.coords[0];
    let mut coords: Vec<f64> = z.coords[1..].iter().map(|v| v / denom).collect();
    super::ball::project(&mut coords, z.config.c);
    PoincarePoint::from_raw(coords, z.config)
}
