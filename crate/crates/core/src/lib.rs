//! Elliptic problems `-(c u')' + p u = f` on metric graphs.
//!
//! The pipeline: build a [`graph::MetricGraph`], mesh it and assemble the
//! finite element system ([`fem`]), split the edges into subgraphs
//! ([`partition`]), reduce to the interface Schur complement
//! ([`substructuring`]), and solve that with a Krylov or Richardson
//! iteration ([`krylov`]) under one of the [`precond`] preconditioners.
//!
//! ```
//! use qgraph::prelude::*;
//!
//! let g = qgraph::graph::dgm(3);
//! let mesh = Mesh::with_level(&g, 4).unwrap();
//! let problem = Problem::unit(g, mesh).unwrap();
//! let part = partition_by_edges(&problem.graph);
//! let schur = SchurOperator::new(&problem, &part).unwrap();
//! let prec = Preconditioner::setup(PrecondKind::NeumannNeumann, &schur).unwrap();
//! let g_rhs = schur.schur_rhs();
//! let (u_gamma, report) = bicgstab(&schur, &prec, &g_rhs, &StoppingRule::default(), None).unwrap();
//! assert!(report.converged);
//! let u = schur.harmonic_extension(&u_gamma, true).unwrap();
//! assert!(u.iter().all(|v| (v - 1.0).abs() < 1e-6));
//! ```

pub mod config;
pub mod expr;
pub mod fem;
pub mod graph;
pub mod krylov;
pub mod ldl;
pub mod operator;
pub mod partition;
pub mod precond;
pub mod sparse;
pub mod substructuring;

pub mod prelude {
    pub use crate::expr::Expr;
    pub use crate::fem::{assemble, solve_direct, EdgeFunction, Mesh, Problem};
    pub use crate::graph::MetricGraph;
    pub use crate::krylov::{bicgstab, pcg, richardson, SolveReport, StoppingRule};
    pub use crate::operator::LinearOperator;
    pub use crate::partition::{partition_by_edges, Partition};
    pub use crate::precond::{PrecondKind, Preconditioner};
    pub use crate::substructuring::SchurOperator;
}
