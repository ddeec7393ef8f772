//! Synthetic graph families: stochastic block model, preferential attachment,
//! two-community graphs, grids, self-similar trees and small ego networks.
//!
//! Every generator is deterministic for a given seed.

use std::ops::RangeInclusive;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{GraphData, GraphSet};

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {p} is not a probability")))
    }
}

/// Stochastic block model over consecutive blocks of the given sizes.
/// Node labels are block indices.
pub fn gen_sbm(n: usize, blocks: &[usize], p_intra: f64, q_inter: f64, seed: u64) -> Result<GraphData> {
    check_prob("p_intra", p_intra)?;
    check_prob("q_inter", q_inter)?;
    if blocks.iter().sum::<usize>() != n || blocks.contains(&0) {
        return Err(Error::InvalidParameter(format!("block sizes {blocks:?} do not partition {n} nodes")));
    }
    let labels: Vec<i64> =
        blocks.iter().enumerate().flat_map(|(b, &size)| std::iter::repeat_n(b as i64, size)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_intra } else { q_inter };
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Ok(GraphData::from_edges(n, edges)?.with_labels(labels))
}

/// Preferential attachment. Nodes 0 and 1 start joined; every later node
/// draws `m` uniformly from `m_range` (capped by the current node count) and
/// attaches to `m` distinct existing nodes with probability proportional to
/// degree.
pub fn gen_ba(n: usize, m_range: RangeInclusive<usize>, seed: u64) -> Result<GraphData> {
    if n < 2 {
        return Err(Error::InvalidParameter("preferential attachment needs n >= 2".into()));
    }
    if m_range.is_empty() || *m_range.start() == 0 {
        return Err(Error::InvalidParameter(format!("bad attachment range {m_range:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = vec![(0, 1)];
    // each node appears once per incident edge
    let mut stubs = vec![0usize, 1];
    let mut chosen = Vec::new();
    for v in 2..n {
        let m = rng.random_range(m_range.clone()).min(v);
        chosen.clear();
        while chosen.len() < m {
            let t = stubs[rng.random_range(0..stubs.len())];
            if !chosen.contains(&t) {
                chosen.push(t);
            }
        }
        for &t in &chosen {
            edges.push((t, v));
            stubs.push(t);
            stubs.push(v);
        }
    }
    GraphData::from_edges(n, edges)
}

/// Two-community graphs: halves are Erdős-Rényi with probability `p` and
/// `ceil(inter_frac * |V|)` distinct cross pairs are added uniformly.
pub fn gen_community(
    count: usize,
    n_range: RangeInclusive<usize>,
    p: f64,
    inter_frac: f64,
    seed: u64,
) -> Result<GraphSet> {
    check_prob("p", p)?;
    if !(inter_frac >= 0.0 && inter_frac.is_finite()) {
        return Err(Error::InvalidParameter(format!("inter_frac = {inter_frac}")));
    }
    if n_range.is_empty() || *n_range.start() < 2 {
        return Err(Error::InvalidParameter(format!("bad size range {n_range:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let n = rng.random_range(n_range.clone());
        let half = n / 2;
        let labels: Vec<i64> = (0..n).map(|i| i64::from(i >= half)).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if labels[i] == labels[j] && rng.random_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        let cross_total = half * (n - half);
        let want = ((inter_frac * n as f64) - 1e-9).ceil().max(0.0) as usize;
        for k in sample(&mut rng, cross_total, want.min(cross_total)).into_iter() {
            edges.push((k / (n - half), half + k % (n - half)));
        }
        out.push(GraphData::from_edges(n, edges)?.with_labels(labels));
    }
    Ok(out)
}

/// `rows x cols` lattice with 4-neighbour connectivity.
pub fn gen_grid(rows: usize, cols: usize) -> Result<GraphData> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter("grid sides must be positive".into()));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    GraphData::from_edges(rows * cols, edges)
}

/// Self-similar tree in which every internal node has exactly three edges:
/// the root has three children and every other internal node two.
pub fn gen_fractal(depth: usize) -> Result<GraphData> {
    let mut edges = Vec::new();
    let mut frontier = vec![0usize];
    let mut next_id = 1;
    for level in 0..depth {
        let children = if level == 0 { 3 } else { 2 };
        let mut next = Vec::with_capacity(frontier.len() * children);
        for &parent in &frontier {
            for _ in 0..children {
                edges.push((parent, next_id));
                next.push(next_id);
                next_id += 1;
            }
        }
        frontier = next;
    }
    GraphData::from_edges(next_id, edges)
}

/// Largest ego network returned by [`gen_ego`].
pub const EGO_MAX_NODES: usize = 20;

/// Synthetic stand-in for citation ego networks: the `radius`-hop ball around
/// a random node of an `n`-node preferential-attachment graph, truncated to
/// the first [`EGO_MAX_NODES`] nodes in breadth-first order.
pub fn gen_ego(n: usize, radius: usize, seed: u64) -> Result<GraphData> {
    let host = gen_ba(n.max(2), 1..=2, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let center = rng.random_range(0..host.n);
    let mut nodes = host.ball(center, radius);
    nodes.truncate(EGO_MAX_NODES);
    Ok(host.induced(&nodes))
}
