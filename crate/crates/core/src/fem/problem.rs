use std::collections::BTreeMap;

use crate::expr::Expr;
use crate::graph::MetricGraph;

use super::quadrature::GAUSS2;
use super::{FemError, Mesh};

/// A function given edgewise: a global expression with optional per-edge
/// overrides. Per-edge entries take precedence.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFunction {
    default: Option<Expr>,
    overrides: BTreeMap<usize, Expr>,
}

impl EdgeFunction {
    pub fn global(e: Expr) -> Self {
        Self {
            default: Some(e),
            overrides: BTreeMap::new(),
        }
    }

    pub fn constant(v: f64) -> Self {
        Self::global(Expr::constant(v))
    }

    pub fn parse(src: &str) -> Result<Self, crate::expr::ExprError> {
        Ok(Self::global(Expr::parse(src)?))
    }

    pub fn per_edge(default: Option<Expr>, overrides: BTreeMap<usize, Expr>) -> Self {
        Self { default, overrides }
    }

    pub fn with_override(mut self, edge: usize, e: Expr) -> Self {
        self.overrides.insert(edge, e);
        self
    }

    pub fn for_edge(&self, edge: usize) -> Option<&Expr> {
        self.overrides.get(&edge).or(self.default.as_ref())
    }

    /// Evaluates on `edge` at local coordinate `x`.
    ///
    /// # Panics
    /// If the edge has neither an override nor a default; [`Problem::new`]
    /// rules that out.
    pub fn eval(&self, edge: usize, x: f64) -> f64 {
        self.for_edge(edge)
            .unwrap_or_else(|| panic!("no expression for edge {edge}"))
            .eval(x)
    }

    fn check_defined(&self, name: &'static str, n_edges: usize) -> Result<(), FemError> {
        if let Some(&e) = self.overrides.keys().find(|&&e| e >= n_edges) {
            return Err(FemError::UnknownEdge { name, edge: e });
        }
        match (0..n_edges).find(|&e| self.for_edge(e).is_none()) {
            Some(edge) => Err(FemError::MissingCoefficient { name, edge }),
            None => Ok(()),
        }
    }
}

/// `-(c u')' + p u = f` on every edge with continuity and Neumann–Kirchhoff
/// conditions at the vertices.
#[derive(Debug, Clone)]
pub struct Problem {
    pub graph: MetricGraph,
    pub mesh: Mesh,
    pub c: EdgeFunction,
    pub p: EdgeFunction,
    pub f: EdgeFunction,
    min_p: f64,
}

impl Problem {
    /// Checks `c > 0`, `p > 0` and finite `f` at every quadrature point.
    pub fn new(
        graph: MetricGraph,
        mesh: Mesh,
        c: EdgeFunction,
        p: EdgeFunction,
        f: EdgeFunction,
    ) -> Result<Self, FemError> {
        if mesh.n_edges() != graph.n_edges() {
            return Err(FemError::InvalidMesh(format!(
                "mesh has {} edges, graph has {}",
                mesh.n_edges(),
                graph.n_edges()
            )));
        }
        c.check_defined("c", graph.n_edges())?;
        p.check_defined("p", graph.n_edges())?;
        f.check_defined("f", graph.n_edges())?;
        let mut min_p = f64::INFINITY;
        for e in 0..graph.n_edges() {
            let h = mesh.spacing(e);
            for cell in 0..mesh.cells(e) {
                for &(t, _) in GAUSS2.iter() {
                    let x = (cell as f64 + t) * h;
                    let cv = c.eval(e, x);
                    let pv = p.eval(e, x);
                    let fv = f.eval(e, x);
                    if !(cv > 0.0 && cv.is_finite()) {
                        return Err(FemError::Coefficient {
                            name: "c",
                            edge: e,
                            x,
                            value: cv,
                        });
                    }
                    if !(pv > 0.0 && pv.is_finite()) {
                        return Err(FemError::Coefficient {
                            name: "p",
                            edge: e,
                            x,
                            value: pv,
                        });
                    }
                    if !fv.is_finite() {
                        return Err(FemError::Coefficient {
                            name: "f",
                            edge: e,
                            x,
                            value: fv,
                        });
                    }
                    min_p = min_p.min(pv);
                }
            }
        }
        Ok(Self {
            graph,
            mesh,
            c,
            p,
            f,
            min_p,
        })
    }

    /// `c ≡ 1, p ≡ 1, f ≡ 1`, the default benchmark problem.
    pub fn unit(graph: MetricGraph, mesh: Mesh) -> Result<Self, FemError> {
        Self::new(
            graph,
            mesh,
            EdgeFunction::constant(1.0),
            EdgeFunction::constant(1.0),
            EdgeFunction::constant(1.0),
        )
    }

    /// Smallest sampled value of `p` (the observed p₀).
    pub fn min_potential(&self) -> f64 {
        self.min_p
    }
}
