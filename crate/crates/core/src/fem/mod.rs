//! Linear finite elements on metric graphs.
//!
//! Every edge is meshed equidistantly. Edge-interior nodes carry the
//! standard hat functions; each vertex carries one hat whose support is the
//! first cell of every incident edge, which enforces continuity. The
//! Neumann–Kirchhoff condition is natural and needs no extra rows.

mod assembly;
mod mesh;
mod norms;
mod problem;
pub(crate) mod quadrature;

use thiserror::Error;

pub use assembly::{assemble, edge_elements, solve_direct, DofMap, EdgeElement, SparseSystem};
pub use mesh::Mesh;
pub use norms::{error_norms, fitted_order, interpolate, ErrorNorms, ExactSolution};
pub use problem::{EdgeFunction, Problem};

use crate::ldl::FactorError;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error(
        "coefficient {name} = {value} on edge {edge} at x = {x} violates positivity/finiteness"
    )]
    Coefficient {
        name: &'static str,
        edge: usize,
        x: f64,
        value: f64,
    },
    #[error("no expression for coefficient {name} on edge {edge}")]
    MissingCoefficient { name: &'static str, edge: usize },
    #[error("coefficient {name} overrides nonexistent edge {edge}")]
    UnknownEdge { name: &'static str, edge: usize },
    #[error("system is not symmetric positive definite: {0}")]
    NotSpd(#[from] FactorError),
}
