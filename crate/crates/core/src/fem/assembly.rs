use rayon::prelude::*;

use crate::graph::MetricGraph;
use crate::ldl::SparseLdl;
use crate::sparse::CsrMatrix;

use super::quadrature::GAUSS2;
use super::{FemError, Mesh, Problem};

/// Global numbering: all edge-interior nodes edge by edge, then one dof
/// per vertex, so `u = [u_E; u_V]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    edge_offset: Vec<usize>,
    endpoints: Vec<(usize, usize)>,
    cells: Vec<usize>,
    n_interior: usize,
    n_vertices: usize,
}

impl DofMap {
    pub fn new(g: &MetricGraph, mesh: &Mesh) -> Self {
        let mut edge_offset = Vec::with_capacity(g.n_edges() + 1);
        let mut total = 0;
        for e in 0..g.n_edges() {
            edge_offset.push(total);
            total += mesh.cells(e) - 1;
        }
        edge_offset.push(total);
        Self {
            edge_offset,
            endpoints: g.edges().iter().map(|e| (e.origin, e.terminal)).collect(),
            cells: (0..g.n_edges()).map(|e| mesh.cells(e)).collect(),
            n_interior: total,
            n_vertices: g.n_vertices(),
        }
    }

    pub fn len(&self) -> usize {
        self.n_interior + self.n_vertices
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the first vertex dof.
    pub fn vertex_block_start(&self) -> usize {
        self.n_interior
    }

    pub fn vertex_dof(&self, v: usize) -> usize {
        self.n_interior + v
    }

    /// Interior node `j ∈ 1..n_e` of edge `e`.
    pub fn interior_dof(&self, e: usize, j: usize) -> usize {
        debug_assert!(j >= 1 && j < self.cells[e]);
        self.edge_offset[e] + j - 1
    }

    pub fn interior_range(&self, e: usize) -> std::ops::Range<usize> {
        self.edge_offset[e]..self.edge_offset[e + 1]
    }

    /// Dof of local node `j ∈ 0..=n_e` on edge `e`; the end nodes are the
    /// origin and terminal vertices.
    pub fn node_dof(&self, e: usize, j: usize) -> usize {
        let n = self.cells[e];
        if j == 0 {
            self.vertex_dof(self.endpoints[e].0)
        } else if j == n {
            self.vertex_dof(self.endpoints[e].1)
        } else {
            self.interior_dof(e, j)
        }
    }
}

/// Contribution of one edge: a tridiagonal `(n_e+1)²` matrix over local
/// nodes `0..=n_e` (ends are the vertex hats) and the matching load vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeElement {
    pub diag: Vec<f64>,
    /// `off[j]` couples nodes `j` and `j + 1`.
    pub off: Vec<f64>,
    pub load: Vec<f64>,
}

impl EdgeElement {
    /// Integrates `c ψ'ψ' + p ψψ` and `f ψ` cell by cell with the 2-point
    /// Gauss rule.
    pub fn assemble(problem: &Problem, e: usize) -> Self {
        let n = problem.mesh.cells(e);
        let h = problem.mesh.spacing(e);
        let mut el = Self {
            diag: vec![0.0; n + 1],
            off: vec![0.0; n],
            load: vec![0.0; n + 1],
        };
        for cell in 0..n {
            let (mut k, mut m00, mut m01, mut m11, mut f0, mut f1) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for &(t, w) in GAUSS2.iter() {
                let x = (cell as f64 + t) * h;
                let wh = w * h;
                let (left, right) = (1.0 - t, t);
                k += wh * problem.c.eval(e, x) / (h * h);
                let pv = problem.p.eval(e, x);
                m00 += wh * pv * left * left;
                m01 += wh * pv * left * right;
                m11 += wh * pv * right * right;
                let fv = problem.f.eval(e, x);
                f0 += wh * fv * left;
                f1 += wh * fv * right;
            }
            el.diag[cell] += k + m00;
            el.diag[cell + 1] += k + m11;
            el.off[cell] += -k + m01;
            el.load[cell] += f0;
            el.load[cell + 1] += f1;
        }
        el
    }

    pub fn n_nodes(&self) -> usize {
        self.diag.len()
    }
}

/// Assembled global system `A u = f` with `A` in compressed-row storage.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dofs: DofMap,
}

impl SparseSystem {
    pub fn vertex_block_start(&self) -> usize {
        self.dofs.vertex_block_start()
    }

    /// Relative residual `‖A u − f‖ / ‖f‖` (absolute when `f = 0`).
    pub fn relative_residual(&self, u: &[f64]) -> f64 {
        let au = self.matrix.mul_vec(u);
        let r: f64 = au
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let nf = crate::sparse::norm2(&self.rhs);
        if nf > 0.0 {
            r / nf
        } else {
            r
        }
    }
}

/// Element contributions of every edge, computed in parallel.
pub fn edge_elements(problem: &Problem) -> Vec<EdgeElement> {
    (0..problem.graph.n_edges())
        .into_par_iter()
        .map(|e| EdgeElement::assemble(problem, e))
        .collect()
}

/// Global stiffness matrix and load vector.
pub fn assemble(problem: &Problem) -> SparseSystem {
    let dofs = DofMap::new(&problem.graph, &problem.mesh);
    let elements = edge_elements(problem);
    let nnz: usize = elements.iter().map(|el| 3 * el.n_nodes()).sum();
    let mut triplets = Vec::with_capacity(nnz);
    let mut rhs = vec![0.0; dofs.len()];
    for (e, el) in elements.iter().enumerate() {
        for j in 0..el.n_nodes() {
            let dj = dofs.node_dof(e, j);
            triplets.push((dj, dj, el.diag[j]));
            rhs[dj] += el.load[j];
            if j + 1 < el.n_nodes() {
                let dk = dofs.node_dof(e, j + 1);
                triplets.push((dj, dk, el.off[j]));
                triplets.push((dk, dj, el.off[j]));
            }
        }
    }
    let n = dofs.len();
    SparseSystem {
        matrix: CsrMatrix::from_triplets(n, n, &triplets),
        rhs,
        dofs,
    }
}

/// Exact solve by sparse LDLᵀ; the reference for every iterative path.
pub fn solve_direct(system: &SparseSystem) -> Result<Vec<f64>, FemError> {
    let factor = SparseLdl::factor(&system.matrix)?;
    Ok(factor.solve(&system.rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::EdgeFunction;
    use crate::graph::{dgm, path, star, MetricGraph};

    fn unit_problem(g: MetricGraph, cells: usize) -> Problem {
        let mesh = Mesh::from_counts(&g, vec![cells; g.n_edges()]).unwrap();
        Problem::unit(g, mesh).unwrap()
    }

    #[test]
    fn single_edge_entries_match_hat_integrals() {
        // h = 1/2: interior diag 2/h + 2h/3, coupling -1/h + h/6, vertex diag 1/h + h/3
        let s = assemble(&unit_problem(dgm(0), 2));
        let a = &s.matrix;
        assert_eq!(a.nrows(), 3);
        assert!((a.get(0, 0) - 13.0 / 3.0).abs() < 1e-14);
        assert!((a.get(0, 1) + 23.0 / 12.0).abs() < 1e-14);
        assert!((a.get(0, 2) + 23.0 / 12.0).abs() < 1e-14);
        assert!((a.get(1, 1) - 13.0 / 6.0).abs() < 1e-14);
        assert_eq!(a.get(1, 2), 0.0);
        assert!((s.rhs[0] - 0.5).abs() < 1e-15);
        assert!((s.rhs[1] - 0.25).abs() < 1e-15);
        assert!((s.rhs[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn dof_ordering() {
        let g = path(2, 1.0).unwrap();
        let mesh = Mesh::from_counts(&g, vec![3, 4]).unwrap();
        let d = DofMap::new(&g, &mesh);
        assert_eq!(d.len(), 2 + 3 + 3);
        assert_eq!(d.vertex_block_start(), 5);
        assert_eq!(d.node_dof(0, 0), 5);
        assert_eq!(d.node_dof(0, 1), 0);
        assert_eq!(d.node_dof(0, 3), 6);
        assert_eq!(d.node_dof(1, 0), 6);
        assert_eq!(d.node_dof(1, 1), 2);
        assert_eq!(d.interior_range(1), 2..5);
        assert_eq!(d.node_dof(1, 4), 7);
    }

    #[test]
    fn symmetric_and_sparse() {
        let g = dgm(3);
        let p = unit_problem(g.clone(), 4);
        let s = assemble(&p);
        assert!(s.matrix.is_symmetric());
        for i in 0..s.vertex_block_start() {
            assert!(s.matrix.row(i).0.len() <= 3);
        }
        for v in 0..g.n_vertices() {
            let row = s.dofs.vertex_dof(v);
            assert!(s.matrix.row(row).0.len() <= 2 * g.degree(v) + 1);
        }
    }

    #[test]
    fn direct_solve_reproduces_constants() {
        for g in [dgm(0), path(2, 1.0).unwrap(), star(3, 1.0).unwrap(), dgm(3)] {
            let s = assemble(&unit_problem(g, 8));
            let u = solve_direct(&s).unwrap();
            assert!(s.relative_residual(&u) <= 1e-12);
            assert!(u.iter().all(|&v| (v - 1.0).abs() < 1e-10));
        }
    }

    #[test]
    fn direct_solve_single_edge_three_by_three() {
        let s = assemble(&unit_problem(dgm(0), 2));
        let u = solve_direct(&s).unwrap();
        let dense = s.matrix.to_dense();
        let oracle = dense.solve(&s.rhs).unwrap();
        for (a, b) in u.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn scaled_constant_reproduction() {
        let g = dgm(2);
        let mesh = Mesh::from_counts(&g, vec![5; g.n_edges()]).unwrap();
        let p = Problem::new(
            g,
            mesh,
            EdgeFunction::parse("2 + x").unwrap(),
            EdgeFunction::constant(3.5),
            EdgeFunction::constant(3.5),
        )
        .unwrap();
        let u = solve_direct(&assemble(&p)).unwrap();
        assert!(u.iter().all(|&v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn coefficient_violations() {
        let g = dgm(0);
        let mesh = Mesh::from_counts(&g, vec![4]).unwrap();
        let bad_c = Problem::new(
            g.clone(),
            mesh.clone(),
            EdgeFunction::parse("x - 0.5").unwrap(),
            EdgeFunction::constant(1.0),
            EdgeFunction::constant(1.0),
        );
        assert!(matches!(
            bad_c,
            Err(FemError::Coefficient { name: "c", .. })
        ));
        let bad_p = Problem::new(
            g.clone(),
            mesh.clone(),
            EdgeFunction::constant(1.0),
            EdgeFunction::constant(0.0),
            EdgeFunction::constant(1.0),
        );
        assert!(matches!(
            bad_p,
            Err(FemError::Coefficient { name: "p", .. })
        ));
        let bad_f = Problem::new(
            g,
            mesh,
            EdgeFunction::constant(1.0),
            EdgeFunction::constant(1.0),
            EdgeFunction::parse("1/(x-x)").unwrap(),
        );
        assert!(matches!(
            bad_f,
            Err(FemError::Coefficient { name: "f", .. })
        ));
    }

    #[test]
    fn per_edge_override_wins() {
        let g = path(2, 1.0).unwrap();
        let mesh = Mesh::from_counts(&g, vec![2, 2]).unwrap();
        let c = EdgeFunction::constant(1.0).with_override(1, crate::expr::Expr::constant(2.0));
        let p = Problem::new(
            g,
            mesh,
            c,
            EdgeFunction::constant(1.0),
            EdgeFunction::constant(1.0),
        )
        .unwrap();
        let s = assemble(&p);
        // interior node of edge 1: 2 c / h + 2h/3 with c = 2
        assert!((s.matrix.get(1, 1) - (8.0 + 1.0 / 3.0)).abs() < 1e-14);
        assert!((s.matrix.get(0, 0) - 13.0 / 3.0).abs() < 1e-14);
    }
}
