//! Distances between graph sets.
//!
//! Each graph is summarized by a degree histogram, a clustering-coefficient
//! histogram and a normalized-Laplacian spectrum histogram. Sets are compared
//! with an RBF-kernel MMD per descriptor and with k-NN based precision/recall
//! and density/coverage on the concatenated descriptors.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphData;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub clustering_bins: usize,
    pub spectrum_bins: usize,
    pub k_nn: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { clustering_bins: 100, spectrum_bins: 200, k_nn: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MMDReport {
    pub degree: f64,
    pub cluster: f64,
    pub spectre: f64,
    pub f1_pr: f64,
    pub f1_dc: f64,
}

fn non_empty(g: &GraphData) -> Result<()> {
    if g.n == 0 {
        Err(Error::Empty("graph without nodes"))
    } else {
        Ok(())
    }
}

fn normalize(mut h: Vec<f64>) -> Vec<f64> {
    let total: f64 = h.iter().sum();
    if total > 0.0 {
        h.iter_mut().for_each(|v| *v /= total);
    }
    h
}

/// Histogram of `value` in `[lo, hi]` with the top edge folded into the last bin.
fn bin(h: &mut [f64], value: f64, lo: f64, hi: f64) {
    let bins = h.len();
    let pos = ((value - lo) / (hi - lo) * bins as f64).floor();
    let idx = (pos.max(0.0) as usize).min(bins - 1);
    h[idx] += 1.0;
}

/// Degree frequencies for degrees `0..=max_deg`; larger degrees count as `max_deg`.
pub fn degree_hist(g: &GraphData, max_deg: usize) -> Result<Vec<f64>> {
    non_empty(g)?;
    let mut h = vec![0.0; max_deg + 1];
    for d in g.degrees() {
        h[d.min(max_deg)] += 1.0;
    }
    Ok(normalize(h))
}

/// Local clustering coefficients; nodes of degree below 2 get 0.
pub fn clustering_coefficients(g: &GraphData) -> Vec<f64> {
    let nbrs = g.neighbors();
    let mut adjacent = vec![vec![false; g.n]; g.n];
    for &(i, j) in &g.edges {
        adjacent[i][j] = true;
        adjacent[j][i] = true;
    }
    nbrs.iter()
        .map(|ns| {
            let k = ns.len();
            if k < 2 {
                return 0.0;
            }
            let mut links = 0usize;
            for a in 0..k {
                for b in a + 1..k {
                    if adjacent[ns[a]][ns[b]] {
                        links += 1;
                    }
                }
            }
            2.0 * links as f64 / (k * (k - 1)) as f64
        })
        .collect()
}

pub fn clustering_hist(g: &GraphData, bins: usize) -> Result<Vec<f64>> {
    non_empty(g)?;
    if bins == 0 {
        return Err(Error::InvalidParameter("zero bins".into()));
    }
    let mut h = vec![0.0; bins];
    for c in clustering_coefficients(g) {
        bin(&mut h, c, 0.0, 1.0);
    }
    Ok(normalize(h))
}

/// `D^{-1/2} (D - A) D^{-1/2}`; rows of isolated nodes are zero.
pub fn normalized_laplacian(g: &GraphData) -> DMatrix<f64> {
    let deg = g.degrees();
    let mut l = DMatrix::zeros(g.n, g.n);
    for (i, &d) in deg.iter().enumerate() {
        if d > 0 {
            l[(i, i)] = 1.0;
        }
    }
    for &(i, j) in &g.edges {
        let w = -1.0 / ((deg[i] * deg[j]) as f64).sqrt();
        l[(i, j)] = w;
        l[(j, i)] = w;
    }
    l
}

/// Sorted eigenvalues of the normalized Laplacian.
pub fn laplacian_spectrum(g: &GraphData) -> Vec<f64> {
    if g.n == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(normalized_laplacian(g)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn laplacian_spectrum_hist(g: &GraphData, bins: usize) -> Result<Vec<f64>> {
    non_empty(g)?;
    if bins == 0 {
        return Err(Error::InvalidParameter("zero bins".into()));
    }
    let mut h = vec![0.0; bins];
    for v in laplacian_spectrum(g) {
        bin(&mut h, v, 0.0, 2.0);
    }
    Ok(normalize(h))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_sets(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<usize> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("descriptor set"));
    }
    let dim = a[0].len();
    if let Some(v) = a.iter().chain(b).find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
    }
    Ok(dim)
}

/// Mean of `exp(-|x - y|^2 / (2 sigma^2))` over all pairs, summed row by row.
fn mean_kernel(a: &[Vec<f64>], b: &[Vec<f64>], sigma: f64) -> f64 {
    let s2 = 2.0 * sigma * sigma;
    let rows: Vec<f64> = a.par_iter().map(|x| b.iter().map(|y| (-sq_dist(x, y) / s2).exp()).sum()).collect();
    rows.iter().sum::<f64>() / (a.len() * b.len()) as f64
}

/// Square root of the biased (V-statistic) MMD^2 estimate, clipped at zero.
pub fn mmd_rbf(a: &[Vec<f64>], b: &[Vec<f64>], sigma: f64) -> Result<f64> {
    check_sets(a, b)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma = {sigma}")));
    }
    let m2 = mean_kernel(a, a, sigma) + mean_kernel(b, b, sigma) - 2.0 * mean_kernel(a, b, sigma);
    Ok(m2.max(0.0).sqrt())
}

/// Median pairwise distance over the pooled sets; 1.0 when that median is zero.
pub fn median_sigma(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let pooled: Vec<&Vec<f64>> = a.iter().chain(b).collect();
    let mut d = Vec::with_capacity(pooled.len() * pooled.len().saturating_sub(1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(sq_dist(pooled[i], pooled[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let m = if d.len() % 2 == 0 { 0.5 * (d[mid - 1] + d[mid]) } else { d[mid] };
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Distance from each point to its `k`-th nearest other point in the same set.
fn knn_radii(set: &[Vec<f64>], k: usize) -> Vec<f64> {
    set.par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut d: Vec<f64> =
                set.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, y)| sq_dist(x, y).sqrt()).collect();
            d.sort_by(f64::total_cmp);
            if k == 0 {
                0.0
            } else {
                d[k - 1]
            }
        })
        .collect()
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

fn check_knn(real: &[Vec<f64>], fake: &[Vec<f64>], k: usize) -> Result<()> {
    check_sets(real, fake)?;
    if real.len() <= k || fake.len() <= k {
        return Err(Error::InvalidParameter(format!(
            "k = {k} needs more than {k} points per set (got {} and {})",
            real.len(),
            fake.len()
        )));
    }
    Ok(())
}

/// Improved precision and recall of `fake` against `real`.
pub fn precision_recall(real: &[Vec<f64>], fake: &[Vec<f64>], k: usize) -> Result<(f64, f64)> {
    check_knn(real, fake, k)?;
    let rr = knn_radii(real, k);
    let fr = knn_radii(fake, k);
    let covered =
        |x: &Vec<f64>, set: &[Vec<f64>], radii: &[f64]| set.iter().zip(radii).any(|(y, &r)| sq_dist(x, y).sqrt() <= r);
    let precision = fake.iter().filter(|x| covered(x, real, &rr)).count() as f64 / fake.len() as f64;
    let recall = real.iter().filter(|x| covered(x, fake, &fr)).count() as f64 / real.len() as f64;
    Ok((precision, recall))
}

/// Density and coverage of `fake` against `real`.
pub fn density_coverage(real: &[Vec<f64>], fake: &[Vec<f64>], k: usize) -> Result<(f64, f64)> {
    check_knn(real, fake, k)?;
    let rr = knn_radii(real, k);
    let mut inside = 0usize;
    let mut covered = vec![false; real.len()];
    for x in fake {
        for (i, (y, &r)) in real.iter().zip(&rr).enumerate() {
            if sq_dist(x, y).sqrt() <= r {
                inside += 1;
                covered[i] = true;
            }
        }
    }
    let density = inside as f64 / (k.max(1) * fake.len()) as f64;
    let coverage = covered.iter().filter(|&&c| c).count() as f64 / real.len() as f64;
    Ok((density, coverage))
}

pub fn f1_pr(real: &[Vec<f64>], fake: &[Vec<f64>], k: usize) -> Result<f64> {
    let (p, r) = precision_recall(real, fake, k)?;
    Ok(harmonic(p, r))
}

pub fn f1_dc(real: &[Vec<f64>], fake: &[Vec<f64>], k: usize) -> Result<f64> {
    let (d, c) = density_coverage(real, fake, k)?;
    Ok(harmonic(d, c))
}

/// Per-graph descriptors of two sets: degree, clustering and spectrum histograms.
pub struct Descriptors {
    pub degree: Vec<Vec<f64>>,
    pub cluster: Vec<Vec<f64>>,
    pub spectrum: Vec<Vec<f64>>,
}

impl Descriptors {
    pub fn concatenated(&self) -> Vec<Vec<f64>> {
        (0..self.degree.len())
            .map(|i| {
                let mut v = self.degree[i].clone();
                v.extend(&self.cluster[i]);
                v.extend(&self.spectrum[i]);
                v
            })
            .collect()
    }
}

pub fn descriptors(graphs: &[GraphData], max_deg: usize, config: &MetricsConfig) -> Result<Descriptors> {
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = graphs
        .par_iter()
        .map(|g| {
            Ok((
                degree_hist(g, max_deg)?,
                clustering_hist(g, config.clustering_bins)?,
                laplacian_spectrum_hist(g, config.spectrum_bins)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut out = Descriptors { degree: Vec::new(), cluster: Vec::new(), spectrum: Vec::new() };
    for (d, c, s) in rows {
        out.degree.push(d);
        out.cluster.push(c);
        out.spectrum.push(s);
    }
    Ok(out)
}

/// Compare `generated` against `reference`. The k-NN size is reduced to fit
/// sets that are too small for `config.k_nn`.
pub fn evaluate(reference: &[GraphData], generated: &[GraphData], config: &MetricsConfig) -> Result<MMDReport> {
    if reference.is_empty() || generated.is_empty() {
        return Err(Error::Empty("graph set"));
    }
    let max_deg = reference.iter().chain(generated).flat_map(|g| g.degrees()).max().unwrap_or(0);
    let a = descriptors(reference, max_deg, config)?;
    let b = descriptors(generated, max_deg, config)?;
    let mmd = |x: &[Vec<f64>], y: &[Vec<f64>]| mmd_rbf(x, y, median_sigma(x, y));
    let k = config.k_nn.min(reference.len().min(generated.len()) - 1);
    let (ca, cb) = (a.concatenated(), b.concatenated());
    Ok(MMDReport {
        degree: mmd(&a.degree, &b.degree)?,
        cluster: mmd(&a.cluster, &b.cluster)?,
        spectre: mmd(&a.spectrum, &b.spectrum)?,
        f1_pr: f1_pr(&ca, &cb, k)?,
        f1_dc: f1_dc(&ca, &cb, k)?,
    })
}
