//! Metric graphs: validated edge lists with lengths, plus the deterministic
//! DGM family and a seeded Barabási–Albert generator.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Validation and I/O failures for graph construction.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph has no edges")]
    Empty,
    #[error("edge {edge} is a loop at vertex {vertex}")]
    Loop { edge: usize, vertex: usize },
    #[error("edge {edge} duplicates edge {first} between vertices {a} and {b}")]
    DuplicateEdge {
        edge: usize,
        first: usize,
        a: usize,
        b: usize,
    },
    #[error("edge {edge} has nonpositive or non-finite length {length}")]
    BadLength { edge: usize, length: f64 },
    #[error("edge {edge} references vertex {vertex} but the graph has {n} vertices")]
    VertexOutOfRange {
        edge: usize,
        vertex: usize,
        n: usize,
    },
    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("vertex {vertex} is isolated")]
    IsolatedVertex { vertex: usize },
    #[error("invalid generator parameters: {0}")]
    InvalidParameters(String),
    #[error("graph file I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph file format: {0}")]
    Format(#[from] serde_json::Error),
}

/// One oriented edge `origin -> terminal` of length `length`.
///
/// The local coordinate runs from 0 at the origin to `length` at the terminal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    #[serde(rename = "from")]
    pub origin: usize,
    #[serde(rename = "to")]
    pub terminal: usize,
    pub length: f64,
}

impl Edge {
    pub fn new(origin: usize, terminal: usize, length: f64) -> Self {
        Self {
            origin,
            terminal,
            length,
        }
    }
}

/// A connected simple directed graph with positive edge lengths.
///
/// Immutable after construction; every instance has passed [`MetricGraph::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    n_vertices: usize,
    edges: Vec<Edge>,
    degree: Vec<usize>,
    incident: Vec<Vec<usize>>,
    meta: Option<serde_json::Value>,
}

impl MetricGraph {
    /// Validates an edge list. Vertex ids must be `0..n_vertices`.
    pub fn new(n_vertices: usize, edges: Vec<Edge>) -> Result<Self, GraphError> {
        if edges.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut degree = vec![0usize; n_vertices];
        let mut incident = vec![Vec::new(); n_vertices];
        for (k, e) in edges.iter().enumerate() {
            for v in [e.origin, e.terminal] {
                if v >= n_vertices {
                    return Err(GraphError::VertexOutOfRange {
                        edge: k,
                        vertex: v,
                        n: n_vertices,
                    });
                }
            }
            if e.origin == e.terminal {
                return Err(GraphError::Loop {
                    edge: k,
                    vertex: e.origin,
                });
            }
            if !(e.length.is_finite() && e.length > 0.0) {
                return Err(GraphError::BadLength {
                    edge: k,
                    length: e.length,
                });
            }
            let key = (e.origin.min(e.terminal), e.origin.max(e.terminal));
            if let Some(&first) = seen.get(&key) {
                return Err(GraphError::DuplicateEdge {
                    edge: k,
                    first,
                    a: key.0,
                    b: key.1,
                });
            }
            seen.insert(key, k);
            degree[e.origin] += 1;
            degree[e.terminal] += 1;
            incident[e.origin].push(k);
            incident[e.terminal].push(k);
        }
        if let Some(v) = degree.iter().position(|&d| d == 0) {
            return Err(GraphError::IsolatedVertex { vertex: v });
        }
        let components = count_components(n_vertices, &edges, 0..edges.len());
        if components != 1 {
            return Err(GraphError::Disconnected { components });
        }
        Ok(Self {
            n_vertices,
            edges,
            degree,
            incident,
            meta: None,
        })
    }

    /// Builds a graph from `(origin, terminal, length)` triples; the vertex
    /// count is one past the largest id mentioned.
    pub fn from_triples(triples: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let n = triples
            .iter()
            .map(|&(a, b, _)| a.max(b) + 1)
            .max()
            .unwrap_or(0);
        Self::new(
            n,
            triples
                .iter()
                .map(|&(a, b, l)| Edge::new(a, b, l))
                .collect(),
        )
    }

    pub fn with_meta(mut self, meta: serde_json::Value) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn meta(&self) -> Option<&serde_json::Value> {
        self.meta.as_ref()
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.degree[v]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degree
    }

    pub fn max_degree(&self) -> usize {
        self.degree.iter().copied().max().unwrap_or(0)
    }

    /// Edge ids incident to `v`, in edge-list order.
    pub fn incident_edges(&self, v: usize) -> &[usize] {
        &self.incident[v]
    }

    /// Replaces every edge length; used to build graphs of the same topology.
    pub fn with_lengths(&self, length: impl Fn(usize) -> f64) -> Result<Self, GraphError> {
        let edges = self
            .edges
            .iter()
            .enumerate()
            .map(|(k, e)| Edge::new(e.origin, e.terminal, length(k)))
            .collect();
        Self::new(self.n_vertices, edges).map(|g| Self {
            meta: self.meta.clone(),
            ..g
        })
    }

    pub fn to_json(&self) -> GraphFile {
        GraphFile {
            vertices: self.n_vertices,
            edges: self.edges.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn read_json(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self, GraphError> {
        let file: GraphFile = serde_json::from_str(text)?;
        file.into_graph()
    }

    pub fn write_json(&self, path: &Path) -> Result<(), GraphError> {
        let text = serde_json::to_string_pretty(&self.to_json())?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// On-disk graph representation:
/// `{"vertices": n, "edges": [{"from": i, "to": j, "length": x}, ...], "meta": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub vertices: usize,
    pub edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

impl GraphFile {
    pub fn into_graph(self) -> Result<MetricGraph, GraphError> {
        let g = MetricGraph::new(self.vertices, self.edges)?;
        Ok(match self.meta {
            Some(m) => g.with_meta(m),
            None => g,
        })
    }
}

/// Number of connected components spanned by `edge_ids`, counting only
/// vertices touched by those edges (plus every vertex when all edges are given).
pub(crate) fn count_components(
    n_vertices: usize,
    edges: &[Edge],
    edge_ids: impl IntoIterator<Item = usize>,
) -> usize {
    let mut parent: Vec<usize> = (0..n_vertices).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    let mut touched = HashSet::new();
    for k in edge_ids {
        let e = &edges[k];
        touched.insert(e.origin);
        touched.insert(e.terminal);
        let (a, b) = (find(&mut parent, e.origin), find(&mut parent, e.terminal));
        if a != b {
            parent[a] = b;
        }
    }
    let mut roots = HashSet::new();
    for v in touched {
        roots.insert(find(&mut parent, v));
    }
    roots.len()
}

/// Dorogovtsev–Goltsev–Mendes graph of the given generation.
///
/// Generation 0 is the two-vertex path. Each further generation appends, for
/// every existing edge `(a, b)`, a new vertex `w` with edges `(a, w)` and
/// `(w, b)`. All lengths are 1.
pub fn dgm(level: u32) -> MetricGraph {
    let mut n = 2usize;
    let mut edges = vec![(0usize, 1usize)];
    for _ in 0..level {
        let current = edges.len();
        for k in 0..current {
            let (a, b) = edges[k];
            let w = n;
            n += 1;
            edges.push((a, w));
            edges.push((w, b));
        }
    }
    let edges = edges
        .into_iter()
        .map(|(a, b)| Edge::new(a, b, 1.0))
        .collect();
    MetricGraph::new(n, edges)
        .expect("DGM construction yields a valid graph")
        .with_meta(serde_json::json!({"family": "dgm", "level": level}))
}

/// Barabási–Albert preferential attachment graph with unit lengths.
///
/// Seed graph: a star with center 0 and leaves `1..=m_attach`. Every new
/// vertex `v` draws `m_attach` distinct targets; each draw picks a uniformly
/// random entry of the endpoint list (so a vertex is chosen with probability
/// proportional to its degree) and is repeated until it hits a vertex not yet
/// drawn for `v`. Edges are oriented `target -> v` in draw order. The random
/// stream is ChaCha8 seeded with `seed` via `SeedableRng::seed_from_u64`.
pub fn barabasi_albert(n: usize, m_attach: usize, seed: u64) -> Result<MetricGraph, GraphError> {
    if m_attach < 1 {
        return Err(GraphError::InvalidParameters(
            "attachment count must be at least 1".into(),
        ));
    }
    if n <= m_attach {
        return Err(GraphError::InvalidParameters(format!(
            "need n > m_attach, got n = {n}, m_attach = {m_attach}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(m_attach * (n - m_attach));
    let mut endpoints = Vec::with_capacity(2 * m_attach * (n - m_attach));
    for leaf in 1..=m_attach {
        edges.push(Edge::new(0, leaf, 1.0));
        endpoints.push(0);
        endpoints.push(leaf);
    }
    let mut targets = Vec::with_capacity(m_attach);
    for v in (m_attach + 1)..n {
        targets.clear();
        while targets.len() < m_attach {
            let t = endpoints[rng.gen_range(0..endpoints.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            edges.push(Edge::new(t, v, 1.0));
            endpoints.push(t);
            endpoints.push(v);
        }
    }
    Ok(MetricGraph::new(n, edges)?.with_meta(serde_json::json!({
        "family": "ba",
        "n": n,
        "m_attach": m_attach,
        "seed": seed,
        "rng": "chacha8",
    })))
}

/// Star with `leaves` unit edges oriented from the center 0 outward.
pub fn star(leaves: usize, length: f64) -> Result<MetricGraph, GraphError> {
    MetricGraph::new(
        leaves + 1,
        (1..=leaves).map(|v| Edge::new(0, v, length)).collect(),
    )
}

/// Path `0 - 1 - ... - edges` with every edge oriented towards the larger id.
pub fn path(edges: usize, length: f64) -> Result<MetricGraph, GraphError> {
    MetricGraph::new(
        edges + 1,
        (0..edges).map(|v| Edge::new(v, v + 1, length)).collect(),
    )
}
