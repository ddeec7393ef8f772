//! Hyperbolic k-means on the Poincaré ball.
//!
//! Centroids are approximate Fréchet means obtained by averaging log-maps at
//! the current centroid and mapping back. Each cluster also carries a row of
//! the direction matrix: the coordinate signs of its centroid seen from the
//! origin tangent space, which orients the diffusion noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{ball, ManifoldConfig, PoincarePoint};

const REFINE_STEPS: usize = 3;
const MAX_HALVINGS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub config: ManifoldConfig,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub sign_matrix: Vec<Vec<i8>>,
    pub proportions: Vec<f64>,
    /// Sum of squared distances to assigned centroids after each iteration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

/// A node expressed in the tangent space of its cluster centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentCoords {
    pub cluster: usize,
    pub vec: Vec<f64>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroid(&self, i: usize) -> PoincarePoint {
        PoincarePoint::new(self.centroids[i].clone(), self.config).expect("centroids stay inside the ball")
    }

    /// Nearest centroid; ties go to the lowest index.
    pub fn assign(&self, x: &[f64]) -> usize {
        nearest(x, &self.centroids, self.config.c).0
    }

    /// `log_{mu_cluster}(x)`.
    pub fn to_tangent(&self, x: &[f64], cluster: usize) -> Vec<f64> {
        ball::logmap(&self.centroids[cluster], x, self.config.c)
    }

    /// `exp_{mu_cluster}(v)`.
    pub fn from_tangent(&self, v: &[f64], cluster: usize) -> Vec<f64> {
        ball::expmap(&self.centroids[cluster], v, self.config.c)
    }

    /// Sign row of a cluster as `+/-1.0` values.
    pub fn sign_row(&self, cluster: usize) -> Vec<f64> {
        self.sign_matrix[cluster].iter().map(|&s| f64::from(s)).collect()
    }

    /// Rebuild the direction matrix and proportions from centroids and assignments.
    pub fn refresh(&mut self) {
        self.sign_matrix = sign_rows(&self.centroids, self.config.c);
        let k = self.centroids.len();
        let mut counts = vec![0usize; k];
        for &a in &self.assignments {
            counts[a] += 1;
        }
        let n = self.assignments.len().max(1) as f64;
        self.proportions = counts.iter().map(|&c| c as f64 / n).collect();
    }
}

fn nearest(x: &[f64], centroids: &[Vec<f64>], c: f64) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, m) in centroids.iter().enumerate() {
        let d = ball::distance(x, m, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn sq_dist_sum(m: &[f64], members: &[&[f64]], c: f64) -> f64 {
    members.iter().map(|x| ball::distance(m, x, c).powi(2)).sum()
}

/// One tangent-space averaging pass with step halving until the sum of
/// squared distances does not increase.
fn refine_centroid(m: &[f64], members: &[&[f64]], c: f64) -> Vec<f64> {
    if let Some(first) = members.first() {
        if members.iter().all(|x| x == first) {
            return first.to_vec();
        }
    }
    let mut current = m.to_vec();
    let mut f_cur = sq_dist_sum(&current, members, c);
    for _ in 0..REFINE_STEPS {
        let dim = current.len();
        let mut mean = vec![0.0; dim];
        for x in members {
            for (acc, v) in mean.iter_mut().zip(ball::logmap(&current, x, c)) {
                *acc += v;
            }
        }
        let inv = 1.0 / members.len() as f64;
        mean.iter_mut().for_each(|v| *v *= inv);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let v: Vec<f64> = mean.iter().map(|x| x * step).collect();
            let cand = ball::expmap(&current, &v, c);
            let f_cand = sq_dist_sum(&cand, members, c);
            if f_cand <= f_cur {
                current = cand;
                f_cur = f_cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    current
}

fn sign_rows(centroids: &[Vec<f64>], c: f64) -> Vec<Vec<i8>> {
    centroids.iter().map(|m| ball::logmap0(m, c).into_iter().map(|v| if v < 0.0 { -1 } else { 1 }).collect()).collect()
}

fn seed_centroids(points: &[&[f64]], k: usize, c: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|x| ball::distance(x, &centroids[0], c).powi(2)).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let m = points[pick].to_vec();
        for (slot, x) in d2.iter_mut().zip(points) {
            *slot = slot.min(ball::distance(x, &m, c).powi(2));
        }
        centroids.push(m);
    }
    centroids
}

/// Fit `k` clusters. Stops once assignments are stable or after `max_iters`.
pub fn hkmeans_fit(points: &[PoincarePoint], k: usize, max_iters: usize, seed: u64) -> Result<ClusterModel> {
    let first = points.first().ok_or(Error::Empty("no points to cluster"))?;
    let config = first.config();
    for p in points {
        config.check_same(&p.config())?;
    }
    let raw: Vec<&[f64]> = points.iter().map(|p| p.coords()).collect();
    fit_raw(&raw, config, k, max_iters, seed)
}

pub(crate) fn fit_raw(
    points: &[&[f64]],
    config: ManifoldConfig,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<ClusterModel> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Empty("no points to cluster"));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must lie in [1, {n}]")));
    }
    let c = config.c;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, c, &mut rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut trace = Vec::new();

    for iter in 0..max_iters.max(1) {
        let nearest_all: Vec<(usize, f64)> = points.par_iter().map(|x| nearest(x, &centroids, c)).collect();
        let mut next: Vec<usize> = nearest_all.iter().map(|p| p.0).collect();
        let mut dist: Vec<f64> = nearest_all.iter().map(|p| p.1).collect();

        let mut sizes = vec![0usize; k];
        for &a in &next {
            sizes[a] += 1;
        }
        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            // farthest point among clusters that can spare one
            let donor = (0..n).filter(|&i| sizes[next[i]] > 1).fold(None::<usize>, |best, i| match best {
                Some(b) if dist[b] >= dist[i] => Some(b),
                _ => Some(i),
            });
            if let Some(i) = donor {
                sizes[next[i]] -= 1;
                sizes[empty] += 1;
                next[i] = empty;
                dist[i] = 0.0;
                centroids[empty] = points[i].to_vec();
            }
        }

        let changed = next != assignments;
        assignments = next;

        let updated: Vec<Vec<f64>> = (0..k)
            .into_par_iter()
            .map(|j| {
                let members: Vec<&[f64]> =
                    points.iter().zip(&assignments).filter(|(_, &a)| a == j).map(|(x, _)| *x).collect();
                if members.is_empty() {
                    centroids[j].clone()
                } else {
                    refine_centroid(&centroids[j], &members, c)
                }
            })
            .collect();
        centroids = updated;

        let objective: f64 =
            points.iter().zip(&assignments).map(|(x, &a)| ball::distance(x, &centroids[a], c).powi(2)).sum();
        trace.push(objective);
        if !changed && iter > 0 {
            break;
        }
    }

    let mut model = ClusterModel {
        config,
        centroids,
        assignments,
        sign_matrix: Vec::new(),
        proportions: Vec::new(),
        objective_trace: trace,
    };
    model.refresh();
    Ok(model)
}

/// `x_i = log_{mu_{a(i)}}(h_i)` for the points the model was fitted on.
pub fn project_to_tangent(points: &[PoincarePoint], model: &ClusterModel) -> Result<Vec<TangentCoords>> {
    if points.len() != model.assignments.len() {
        return Err(Error::Shape(format!("{} points for a model fitted on {}", points.len(), model.assignments.len())));
    }
    points
        .iter()
        .zip(&model.assignments)
        .map(|(p, &a)| {
            model.config.check_same(&p.config())?;
            Ok(TangentCoords { cluster: a, vec: model.to_tangent(p.coords(), a) })
        })
        .collect()
}

/// The `k x dim` sign matrix `sgn(log_o(mu_i))` with `sgn(0) = +1`.
pub fn direction_matrix(model: &ClusterModel) -> Vec<Vec<i8>> {
    sign_rows(&model.centroids, model.config.c)
}
