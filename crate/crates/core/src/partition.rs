//! Edge-disjoint decompositions of a metric graph and their interface.

use thiserror::Error;

use crate::graph::{count_components, MetricGraph};

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("assignment covers {got} edges, graph has {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("edge {edge} is not assigned to any subgraph")]
    UncoveredEdge { edge: usize },
    #[error("edge {edge} is assigned to more than one subgraph")]
    DoublyAssigned { edge: usize },
    #[error("subgraph {subgraph} has no edges")]
    EmptySubgraph { subgraph: usize },
    #[error("subgraph {subgraph} is disconnected")]
    DisconnectedSubgraph { subgraph: usize },
    #[error("interface inconsistent with multiplicities at vertex {vertex}")]
    WrongInterface { vertex: usize },
    #[error("multiplicity of vertex {vertex} is {stored}, expected {expected}")]
    WrongMultiplicity {
        vertex: usize,
        stored: usize,
        expected: usize,
    },
}

/// Decomposition of the edge set into subgraphs `0..n_subgraphs`.
///
/// `interface` lists, in increasing order, the vertices that belong to two
/// or more subgraphs; `multiplicity[v]` counts the subgraphs containing `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub subgraph_of_edge: Vec<usize>,
    pub interface: Vec<usize>,
    pub multiplicity: Vec<usize>,
    n_subgraphs: usize,
}

impl Partition {
    /// Derives the interface and multiplicities from an edge → subgraph map.
    /// Subgraph ids must be `0..N` with every id used.
    pub fn from_assignment(
        g: &MetricGraph,
        subgraph_of_edge: Vec<usize>,
    ) -> Result<Self, PartitionError> {
        if subgraph_of_edge.len() != g.n_edges() {
            return Err(PartitionError::WrongLength {
                expected: g.n_edges(),
                got: subgraph_of_edge.len(),
            });
        }
        let n_subgraphs = subgraph_of_edge.iter().map(|&s| s + 1).max().unwrap_or(0);
        let multiplicity = multiplicities(g, &subgraph_of_edge);
        let interface = (0..g.n_vertices())
            .filter(|&v| multiplicity[v] >= 2)
            .collect();
        let p = Self {
            subgraph_of_edge,
            interface,
            multiplicity,
            n_subgraphs,
        };
        validate_partition(g, &p)?;
        Ok(p)
    }

    /// Builds a partition from explicit edge lists per subgraph, rejecting
    /// uncovered and doubly assigned edges.
    pub fn from_subgraphs(
        g: &MetricGraph,
        subgraphs: &[Vec<usize>],
    ) -> Result<Self, PartitionError> {
        let mut owner: Vec<Option<usize>> = vec![None; g.n_edges()];
        for (i, edges) in subgraphs.iter().enumerate() {
            for &e in edges {
                if owner[e].is_some() {
                    return Err(PartitionError::DoublyAssigned { edge: e });
                }
                owner[e] = Some(i);
            }
        }
        let assignment = owner
            .into_iter()
            .enumerate()
            .map(|(e, o)| o.ok_or(PartitionError::UncoveredEdge { edge: e }))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_assignment(g, assignment)
    }

    pub fn n_subgraphs(&self) -> usize {
        self.n_subgraphs
    }

    /// Edge ids of each subgraph, in increasing order.
    pub fn subgraph_edges(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_subgraphs];
        for (e, &s) in self.subgraph_of_edge.iter().enumerate() {
            out[s].push(e);
        }
        out
    }

    pub fn is_interface(&self, v: usize) -> bool {
        self.multiplicity[v] >= 2
    }
}

fn multiplicities(g: &MetricGraph, subgraph_of_edge: &[usize]) -> Vec<usize> {
    (0..g.n_vertices())
        .map(|v| {
            let mut subs: Vec<usize> = g
                .incident_edges(v)
                .iter()
                .map(|&e| subgraph_of_edge[e])
                .collect();
            subs.sort_unstable();
            subs.dedup();
            subs.len()
        })
        .collect()
}

/// One subgraph per edge; the interface is every vertex of degree ≥ 2.
pub fn partition_by_edges(g: &MetricGraph) -> Partition {
    Partition::from_assignment(g, (0..g.n_edges()).collect())
        .expect("per-edge partition is always valid")
}

/// Checks that `p` is an edge-disjoint cover of `g` by connected subgraphs
/// with interface and multiplicities consistent with the assignment.
pub fn validate_partition(g: &MetricGraph, p: &Partition) -> Result<(), PartitionError> {
    if p.subgraph_of_edge.len() != g.n_edges() {
        return Err(PartitionError::WrongLength {
            expected: g.n_edges(),
            got: p.subgraph_of_edge.len(),
        });
    }
    let groups = p.subgraph_edges();
    for (i, edges) in groups.iter().enumerate() {
        if edges.is_empty() {
            return Err(PartitionError::EmptySubgraph { subgraph: i });
        }
        if count_components(g.n_vertices(), g.edges(), edges.iter().copied()) != 1 {
            return Err(PartitionError::DisconnectedSubgraph { subgraph: i });
        }
    }
    let expected = multiplicities(g, &p.subgraph_of_edge);
    if p.multiplicity.len() != g.n_vertices() {
        return Err(PartitionError::WrongMultiplicity {
            vertex: p.multiplicity.len().min(g.n_vertices()),
            stored: 0,
            expected: 0,
        });
    }
    for (v, (&stored, &expected)) in p.multiplicity.iter().zip(&expected).enumerate() {
        if stored != expected {
            return Err(PartitionError::WrongMultiplicity {
                vertex: v,
                stored,
                expected,
            });
        }
    }
    let mut in_iface = vec![false; g.n_vertices()];
    for w in p.interface.windows(2) {
        if w[0] >= w[1] {
            return Err(PartitionError::WrongInterface { vertex: w[1] });
        }
    }
    for &v in &p.interface {
        if v >= g.n_vertices() {
            return Err(PartitionError::WrongInterface { vertex: v });
        }
        in_iface[v] = true;
    }
    for v in 0..g.n_vertices() {
        if in_iface[v] != (expected[v] >= 2) {
            return Err(PartitionError::WrongInterface { vertex: v });
        }
    }
    Ok(())
}
