//! JSON problem configurations.
//!
//! ```json
//! {
//!   "graph": {"family": "star", "leaves": 3},
//!   "target_h": 0.0625,
//!   "c": "1", "p": "1",
//!   "f": {"default": "(pi^2+1)*cos(pi*x)", "edges": {"2": "1"}},
//!   "exact": "cos(pi*x)"
//! }
//! ```
//!
//! `graph` is a path to a graph file (relative to the config file), an
//! inline graph object, or a generator description. The mesh is given by
//! `target_h` or `log2_inv_h`; coefficients default to `1`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::fem::{EdgeFunction, ExactSolution, FemError, Mesh, Problem};
use crate::graph::{self, GraphError, GraphFile, MetricGraph};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expression for `{name}`: {source}")]
    Expr { name: String, source: ExprError },
    #[error("edge key `{0}` is not an edge index")]
    EdgeKey(String),
    #[error("give exactly one of `target_h` and `log2_inv_h`")]
    Mesh,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Fem(#[from] FemError),
}

/// A graph generator description.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum Generator {
    Dgm {
        level: u32,
    },
    Ba {
        n: usize,
        #[serde(default = "default_attach")]
        m: usize,
        #[serde(default)]
        seed: u64,
    },
    Star {
        leaves: usize,
        #[serde(default = "one")]
        length: f64,
    },
    Path {
        edges: usize,
        #[serde(default = "one")]
        length: f64,
    },
}

fn default_attach() -> usize {
    2
}

fn one() -> f64 {
    1.0
}

impl Generator {
    pub fn build(&self) -> Result<MetricGraph, GraphError> {
        match *self {
            Generator::Dgm { level } => Ok(graph::dgm(level)),
            Generator::Ba { n, m, seed } => graph::barabasi_albert(n, m, seed),
            Generator::Star { leaves, length } => graph::star(leaves, length),
            Generator::Path { edges, length } => graph::path(edges, length),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GraphSource {
    File(PathBuf),
    Generator(Generator),
    Inline(GraphFile),
}

/// An expression, either global or with per-edge overrides keyed by the
/// edge index.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FunctionSpec {
    Global(String),
    PerEdge {
        #[serde(default)]
        default: Option<String>,
        #[serde(default)]
        edges: BTreeMap<String, String>,
    },
}

impl FunctionSpec {
    pub fn to_edge_function(&self, name: &str) -> Result<EdgeFunction, ConfigError> {
        let parse = |src: &str| {
            Expr::parse(src).map_err(|source| ConfigError::Expr {
                name: name.to_string(),
                source,
            })
        };
        match self {
            FunctionSpec::Global(s) => Ok(EdgeFunction::global(parse(s)?)),
            FunctionSpec::PerEdge { default, edges } => {
                let default = default.as_deref().map(parse).transpose()?;
                let mut overrides = BTreeMap::new();
                for (k, v) in edges {
                    let e = k
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| ConfigError::EdgeKey(k.clone()))?;
                    overrides.insert(e, parse(v)?);
                }
                Ok(EdgeFunction::per_edge(default, overrides))
            }
        }
    }
}

fn unit() -> FunctionSpec {
    FunctionSpec::Global("1".to_string())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub graph: GraphSource,
    #[serde(default)]
    pub target_h: Option<f64>,
    #[serde(default)]
    pub log2_inv_h: Option<u32>,
    #[serde(default = "unit")]
    pub c: FunctionSpec,
    #[serde(default = "unit")]
    pub p: FunctionSpec,
    #[serde(default = "unit")]
    pub f: FunctionSpec,
    #[serde(default)]
    pub exact: Option<FunctionSpec>,
    /// Optional derivative of `exact`; otherwise error norms differentiate
    /// numerically.
    #[serde(default)]
    pub exact_derivative: Option<FunctionSpec>,
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

impl ProblemConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config; relative graph paths resolve against its directory.
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn graph(&self) -> Result<MetricGraph, ConfigError> {
        Ok(match &self.graph {
            GraphSource::File(p) => {
                let full = match &self.base_dir {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p.clone(),
                };
                MetricGraph::read_json(&full)?
            }
            GraphSource::Generator(g) => g.build()?,
            GraphSource::Inline(file) => file.clone().into_graph()?,
        })
    }

    pub fn mesh(&self, g: &MetricGraph) -> Result<Mesh, ConfigError> {
        match (self.target_h, self.log2_inv_h) {
            (Some(h), None) => Ok(Mesh::uniform(g, h)?),
            (None, Some(l)) => Ok(Mesh::with_level(g, l)?),
            _ => Err(ConfigError::Mesh),
        }
    }

    /// The problem on the configured mesh.
    pub fn problem(&self) -> Result<Problem, ConfigError> {
        let g = self.graph()?;
        let mesh = self.mesh(&g)?;
        self.problem_on(g, mesh)
    }

    /// The configured coefficients on a caller-chosen graph and mesh.
    pub fn problem_on(&self, g: MetricGraph, mesh: Mesh) -> Result<Problem, ConfigError> {
        Ok(Problem::new(
            g,
            mesh,
            self.c.to_edge_function("c")?,
            self.p.to_edge_function("p")?,
            self.f.to_edge_function("f")?,
        )?)
    }

    pub fn exact(&self) -> Result<Option<ExactSolution>, ConfigError> {
        let Some(value) = &self.exact else {
            return Ok(None);
        };
        let mut exact = ExactSolution::new(value.to_edge_function("exact")?);
        if let Some(d) = &self.exact_derivative {
            exact = exact.with_derivative(d.to_edge_function("exact_derivative")?);
        }
        Ok(Some(exact))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_and_defaults() {
        let cfg = ProblemConfig::from_json_str(
            r#"{"graph": {"family": "star", "leaves": 3}, "log2_inv_h": 3}"#,
        )
        .unwrap();
        let p = cfg.problem().unwrap();
        assert_eq!(p.graph.n_edges(), 3);
        assert_eq!(p.mesh.cells(0), 8);
        assert_eq!(p.c.eval(1, 0.3), 1.0);
        assert!(cfg.exact().unwrap().is_none());
    }

    #[test]
    fn per_edge_functions() {
        let cfg = ProblemConfig::from_json_str(
            r#"{"graph": {"family": "path", "edges": 2}, "target_h": 0.25,
                "f": {"default": "x", "edges": {"1": "2*x"}}}"#,
        )
        .unwrap();
        let p = cfg.problem().unwrap();
        assert_eq!(p.f.eval(0, 0.5), 0.5);
        assert_eq!(p.f.eval(1, 0.5), 1.0);
    }

    #[test]
    fn inline_graph() {
        let cfg = ProblemConfig::from_json_str(
            r#"{"graph": {"vertices": 2, "edges": [{"from": 0, "to": 1, "length": 2.0}]},
                "target_h": 0.5, "exact": "1"}"#,
        )
        .unwrap();
        let p = cfg.problem().unwrap();
        assert_eq!(p.mesh.cells(0), 4);
        assert!(cfg.exact().unwrap().is_some());
    }

    #[test]
    fn errors() {
        let mesh_both =
            r#"{"graph": {"family": "dgm", "level": 1}, "target_h": 0.5, "log2_inv_h": 2}"#;
        assert!(matches!(
            ProblemConfig::from_json_str(mesh_both).unwrap().problem(),
            Err(ConfigError::Mesh)
        ));
        let bad_expr = r#"{"graph": {"family": "dgm", "level": 1}, "log2_inv_h": 2, "p": "1+"}"#;
        assert!(matches!(
            ProblemConfig::from_json_str(bad_expr).unwrap().problem(),
            Err(ConfigError::Expr { .. })
        ));
        let bad_key = r#"{"graph": {"family": "dgm", "level": 1}, "log2_inv_h": 2, "f": {"edges": {"a": "1"}}}"#;
        assert!(matches!(
            ProblemConfig::from_json_str(bad_key).unwrap().problem(),
            Err(ConfigError::EdgeKey(_))
        ));
        let negative_p = r#"{"graph": {"family": "dgm", "level": 1}, "log2_inv_h": 2, "p": "-1"}"#;
        assert!(matches!(
            ProblemConfig::from_json_str(negative_p).unwrap().problem(),
            Err(ConfigError::Fem(FemError::Coefficient { .. }))
        ));
        assert!(ProblemConfig::from_json_str(r#"{"graph": 3}"#).is_err());
    }

    #[test]
    fn relative_graph_path() {
        let dir = std::env::temp_dir().join(format!("qgraph-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        graph::dgm(2).write_json(&dir.join("g.json")).unwrap();
        let cfg_path = dir.join("problem.json");
        std::fs::write(&cfg_path, r#"{"graph": "g.json", "log2_inv_h": 2}"#).unwrap();
        let p = ProblemConfig::read(&cfg_path).unwrap().problem().unwrap();
        assert_eq!(p.graph.n_edges(), 9);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
