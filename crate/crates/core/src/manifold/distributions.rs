//! Wrapped normal, Riemannian normal and folded normal laws.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ball, check_finite, conformal_factor, norm_sq, PoincarePoint};
use crate::error::{Error, Result};

/// Wrapped normal on the Poincaré ball with diagonal tangent covariance.
#[derive(Debug, Clone)]
pub struct WrappedNormalParams {
    mu: PoincarePoint,
    sigma: Vec<f64>,
}

impl WrappedNormalParams {
    pub fn new(mu: PoincarePoint, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != mu.config().dim {
            return Err(Error::DimensionMismatch { expected: mu.config().dim, got: sigma.len() });
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidParameter("sigma entries must be positive".into()));
        }
        Ok(Self { mu, sigma })
    }

    pub fn isotropic(mu: PoincarePoint, sigma: f64) -> Result<Self> {
        let d = mu.config().dim;
        Self::new(mu, vec![sigma; d])
    }

    pub fn mu(&self) -> &PoincarePoint {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
}

/// Draw `z = exp_mu(v / lambda_mu)` with `v ~ N(0, diag(sigma^2))`.
pub fn sample_wrapped_normal<R: Rng + ?Sized>(params: &WrappedNormalParams, rng: &mut R) -> PoincarePoint {
    let mu = &params.mu;
    let lam = conformal_factor(mu);
    let v: Vec<f64> = params
        .sigma
        .iter()
        .map(|s| {
            let e: f64 = StandardNormal.sample(rng);
            s * e / lam
        })
        .collect();
    PoincarePoint::from_raw(ball::expmap(mu.coords(), &v, mu.config().c), mu.config())
}

/// `log(sqrt(c) r / sinh(sqrt(c) r))`, the radial volume correction.
fn log_sinh_ratio(sc_r: f64) -> f64 {
    if sc_r < 1e-4 {
        -sc_r * sc_r / 6.0
    } else if sc_r > 30.0 {
        // sinh(x) ~ e^x / 2
        sc_r.ln() - sc_r + std::f64::consts::LN_2
    } else {
        (sc_r / sc_r.sinh()).ln()
    }
}

/// Log density with respect to the Riemannian volume of the ball.
///
/// `N(lambda_mu log_mu(z) | 0, Sigma) * (sqrt(c) d / sinh(sqrt(c) d))^(dim-1)`,
/// where `d = d(mu, z) = lambda_mu |log_mu(z)|`.
pub fn wrapped_normal_logdensity(params: &WrappedNormalParams, z: &PoincarePoint) -> Result<f64> {
    let mu = &params.mu;
    let config = mu.config();
    config.check_same(&z.config())?;
    check_finite(z.coords(), "density argument")?;
    let c = config.c;
    let dim = config.dim as f64;
    let lam = conformal_factor(mu);
    let u: Vec<f64> = ball::logmap(mu.coords(), z.coords(), c).into_iter().map(|x| x * lam).collect();
    let r = norm_sq(&u).sqrt();
    let mut quad = 0.0;
    let mut log_det = 0.0;
    for (ui, s) in u.iter().zip(&params.sigma) {
        quad += (ui / s).powi(2);
        log_det += 2.0 * s.ln();
    }
    let gauss = -0.5 * quad - 0.5 * log_det - 0.5 * dim * (2.0 * PI).ln();
    Ok(gauss + (dim - 1.0) * log_sinh_ratio(c.sqrt() * r))
}

/// `ln Z^R` for the isotropic Riemannian normal `exp(-d^2 / 2 sigma^2) / Z^R`.
///
/// Uses the binomial expansion of `sinh^(dim-1)`; the alternating sum loses
/// digits for large `dim` with small `c sigma^2`, so keep it to low dimensions.
pub fn riemannian_normal_log_normalizer(dim: usize, c: f64, sigma: f64) -> f64 {
    let d = dim as f64;
    let sc = c.sqrt();
    let sphere = 2.0 * PI.powf(d / 2.0) / libm::tgamma(d / 2.0);
    let zeta = sphere * (PI / 2.0).sqrt() * sigma / (2.0 * sc).powi(dim as i32 - 1);
    let mut sum = 0.0;
    let mut binom = 1.0;
    for k in 0..dim {
        let a = (dim - 1) as f64 - 2.0 * k as f64;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let term = (a * a * c * sigma * sigma / 2.0).exp() * (1.0 + libm::erf(a * sc * sigma / 2f64.sqrt()));
        sum += sign * binom * term;
        binom = binom * ((dim - 1 - k) as f64) / ((k + 1) as f64);
    }
    (zeta * sum).ln()
}

/// Isotropic Riemannian normal log density, `-d(mu,z)^2 / (2 sigma^2) - ln Z^R`.
pub fn riemannian_normal_logdensity(mu: &PoincarePoint, sigma: f64, z: &PoincarePoint) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter("sigma must be positive".into()));
    }
    let config = mu.config();
    config.check_same(&z.config())?;
    let d = ball::distance(mu.coords(), z.coords(), config.c);
    Ok(-d * d / (2.0 * sigma * sigma) - riemannian_normal_log_normalizer(config.dim, config.c, sigma))
}

/// Shifted half-normal: each coordinate is `mu_i + sigma |e|`, `e ~ N(0,1)`.
///
/// Density `sqrt(2/(pi sigma^2)) exp(-(x-mu)^2 / (2 sigma^2))` for `x >= mu`, zero below.
#[derive(Debug, Clone)]
pub struct FoldedNormalParams {
    mu: Vec<f64>,
    sigma: f64,
}

impl FoldedNormalParams {
    pub fn new(mu: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        check_finite(&mu, "folded normal mu")?;
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mu
            .iter()
            .map(|m| {
                let e: f64 = StandardNormal.sample(rng);
                m + self.sigma * e.abs()
            })
            .collect()
    }

    /// Joint log density over all coordinates; `-inf` outside the support.
    pub fn logdensity(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.mu.len() {
            return Err(Error::DimensionMismatch { expected: self.mu.len(), got: x.len() });
        }
        let s2 = self.sigma * self.sigma;
        let log_norm = 0.5 * (2.0 / (PI * s2)).ln();
        let mut total = 0.0;
        for (xi, mi) in x.iter().zip(&self.mu) {
            if xi < mi {
                return Ok(f64::NEG_INFINITY);
            }
            total += log_norm - (xi - mi).powi(2) / (2.0 * s2);
        }
        Ok(total)
    }
}

/// Log density of `|Y|`, `Y ~ N(mu, sigma^2)`, in the cosh form
/// `sqrt(2/(pi sigma^2)) exp(-(x^2 + mu^2) / (2 sigma^2)) cosh(mu x / sigma^2)`.
pub fn abs_normal_logdensity(x: f64, mu: f64, sigma: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    let s2 = sigma * sigma;
    let a = (mu * x / s2).abs();
    // ln cosh(a) = a + ln(1 + e^{-2a}) - ln 2
    let ln_cosh = a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2;
    0.5 * (2.0 / (PI * s2)).ln() - (x * x + mu * mu) / (2.0 * s2) + ln_cosh
}
