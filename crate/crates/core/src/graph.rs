//! Simple undirected graphs, graph-set JSONL files and edge-list import.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An undirected simple graph: edges are stored once as `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphData {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<i64>>,
}

pub type GraphSet = Vec<GraphData>;

impl GraphData {
    /// Build a graph from arbitrary pairs: orientation is normalized, self-loops
    /// and duplicates are dropped and the edge list is sorted.
    pub fn from_edges(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        Ok(Self { n, edges: set.into_iter().collect(), features: None, labels: None })
    }

    pub fn empty(n: usize) -> Self {
        Self { n, edges: Vec::new(), features: None, labels: None }
    }

    pub fn with_labels(mut self, labels: Vec<i64>) -> Self {
        self.labels = Some(labels);
        self
    }

    /// Check the invariants of a graph that did not come through [`GraphData::from_edges`].
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &(i, j) in &self.edges {
            if i >= j || j >= self.n {
                return Err(Error::InvalidParameter(format!("edge ({i}, {j}) must satisfy i < j < n = {}", self.n)));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidParameter(format!("duplicate edge ({i}, {j})")));
            }
        }
        if let Some(f) = &self.features {
            if f.len() != self.n {
                return Err(Error::Shape(format!("{} feature rows for {} nodes", f.len(), self.n)));
            }
            let width = f.first().map_or(0, Vec::len);
            if f.iter().any(|row| row.len() != width) {
                return Err(Error::Shape("ragged feature matrix".into()));
            }
        }
        if let Some(l) = &self.labels {
            if l.len() != self.n {
                return Err(Error::Shape(format!("{} labels for {} nodes", l.len(), self.n)));
            }
        }
        Ok(())
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn adjacency(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for &(i, j) in &self.edges {
            a[[i, j]] = 1.0;
            a[[j, i]] = 1.0;
        }
        a
    }

    /// Relabel node `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n);
        let mut out = Self::from_edges(self.n, self.edges.iter().map(|&(i, j)| (perm[i], perm[j])))
            .expect("permutation keeps indices in range");
        let mut inv = vec![0; self.n];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        out.features = self.features.as_ref().map(|f| inv.iter().map(|&i| f[i].clone()).collect());
        out.labels = self.labels.as_ref().map(|l| inv.iter().map(|&i| l[i]).collect());
        out
    }

    /// Nodes within `radius` hops of `center`, in BFS order.
    pub fn ball(&self, center: usize, radius: usize) -> Vec<usize> {
        let adj = self.neighbors();
        let mut dist = vec![usize::MAX; self.n];
        let mut order = Vec::new();
        let mut queue = VecDeque::new();
        dist[center] = 0;
        queue.push_back(center);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            if dist[v] == radius {
                continue;
            }
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        order
    }

    /// Induced subgraph on `nodes`, relabelled in the given order.
    pub fn induced(&self, nodes: &[usize]) -> Self {
        let mut index = vec![usize::MAX; self.n];
        for (k, &v) in nodes.iter().enumerate() {
            index[v] = k;
        }
        let pairs = self
            .edges
            .iter()
            .filter(|&&(i, j)| index[i] != usize::MAX && index[j] != usize::MAX)
            .map(|&(i, j)| (index[i], index[j]));
        Self::from_edges(nodes.len(), pairs).expect("indices remapped in range")
    }
}

/// `D^{-1/2} (A + I) D^{-1/2}` over explicit pairs (self-loops added here).
pub fn normalized_adjacency_from_pairs(n: usize, edges: &[(usize, usize)]) -> Array2<f64> {
    let mut a = Array2::<f64>::eye(n);
    for &(i, j) in edges {
        a[[i, j]] = 1.0;
        a[[j, i]] = 1.0;
    }
    let inv_sqrt: Vec<f64> = a.rows().into_iter().map(|r| 1.0 / r.sum().sqrt()).collect();
    for ((i, j), v) in a.indexed_iter_mut() {
        *v *= inv_sqrt[i] * inv_sqrt[j];
    }
    a
}

pub fn normalized_adjacency(g: &GraphData) -> Array2<f64> {
    normalized_adjacency_from_pairs(g.n, &g.edges)
}

/// Parse a graph set: one JSON object per non-empty line.
pub fn read_graph_set_from<R: Read>(reader: R) -> Result<GraphSet> {
    let mut out = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let g: GraphData = serde_json::from_str(&line).map_err(|e| Error::Parse { line: k + 1, msg: e.to_string() })?;
        g.validate().map_err(|e| Error::Parse { line: k + 1, msg: e.to_string() })?;
        out.push(g);
    }
    Ok(out)
}

pub fn read_graph_set(path: impl AsRef<Path>) -> Result<GraphSet> {
    read_graph_set_from(std::fs::File::open(path)?)
}

pub fn write_graph_set_to<W: Write>(writer: W, graphs: &[GraphData]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for g in graphs {
        serde_json::to_writer(&mut w, g)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_graph_set(path: impl AsRef<Path>, graphs: &[GraphData]) -> Result<()> {
    write_graph_set_to(std::fs::File::create(path)?, graphs)
}

/// What [`parse_edge_list`] dropped while building a simple graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ImportStats {
    pub duplicates: usize,
    pub self_loops: usize,
}

/// Whitespace-separated integer pairs, one per line. Blank lines and `#`
/// comments are skipped; a `# nodes N` comment fixes the node count, which
/// otherwise is one past the largest index.
pub fn parse_edge_list(text: &str) -> Result<(GraphData, ImportStats)> {
    let mut stats = ImportStats::default();
    let mut declared_n = None;
    let mut seen = BTreeSet::new();
    let mut max_index = None;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut parts = comment.split_whitespace();
            if parts.next() == Some("nodes") {
                let n = parts
                    .next()
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or(Error::Parse { line: k + 1, msg: "malformed node-count header".into() })?;
                declared_n = Some(n);
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let mut field = || -> Result<usize> {
            let tok = parts.next().ok_or(Error::Parse { line: k + 1, msg: "expected two node indices".into() })?;
            tok.parse::<usize>().map_err(|e| Error::Parse { line: k + 1, msg: format!("bad node index {tok:?}: {e}") })
        };
        let a = field()?;
        let b = field()?;
        if parts.next().is_some() {
            return Err(Error::Parse { line: k + 1, msg: "more than two fields".into() });
        }
        max_index = Some(max_index.map_or(a.max(b), |m: usize| m.max(a).max(b)));
        if a == b {
            stats.self_loops += 1;
        } else if !seen.insert((a.min(b), a.max(b))) {
            stats.duplicates += 1;
        }
    }
    let inferred = max_index.map(|m| m + 1);
    let n = match (declared_n, inferred) {
        (Some(d), Some(i)) if i > d => {
            return Err(Error::InvalidParameter(format!("edge index {} exceeds declared node count {d}", i - 1)))
        }
        (Some(d), _) => d,
        (None, Some(i)) => i,
        (None, None) => 0,
    };
    if n == 0 {
        return Err(Error::Empty("edge list describes a graph with no nodes"));
    }
    Ok((GraphData { n, edges: seen.into_iter().collect(), features: None, labels: None }, stats))
}

pub fn import_edge_list(path: impl AsRef<Path>) -> Result<(GraphData, ImportStats)> {
    let text = std::fs::read_to_string(path)?;
    let (g, stats) = parse_edge_list(&text)?;
    if stats.duplicates > 0 || stats.self_loops > 0 {
        log::warn!("edge list: dropped {} duplicate edges and {} self-loops", stats.duplicates, stats.self_loops);
    }
    Ok((g, stats))
}

pub fn format_edge_list(g: &GraphData) -> String {
    let mut s = format!("# nodes {}\n", g.n);
    for &(i, j) in &g.edges {
        let _ = writeln!(s, "{i} {j}");
    }
    s
}

pub fn export_edge_list(path: impl AsRef<Path>, g: &GraphData) -> Result<()> {
    std::fs::write(path, format_edge_list(g))?;
    Ok(())
}
