//! Nonoverlapping substructuring: per-subgraph Neumann matrices, the
//! matrix-free interface Schur complement, and interior recovery.
//!
//! Subgraph `i` owns the interior nodes of its edges and every vertex of
//! `V_i \ Γ` (including degree-1 vertices, which keep their natural
//! condition); its interface dofs are `V_i ∩ Γ`. Local matrices are
//! assembled from the same edge elements as the global system, so
//! `A_ΓΓ = Σ_i A_ΓΓ^(i)` and `f_Γ = Σ_i f_Γ^(i)` hold up to summation order.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::fem::{edge_elements, DofMap, EdgeElement, Problem};
use crate::ldl::{FactorError, SparseLdl};
use crate::operator::LinearOperator;
use crate::partition::{validate_partition, Partition, PartitionError};
use crate::sparse::{CsrMatrix, DenseMatrix};

#[derive(Debug, Error)]
pub enum SubstructuringError {
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("subgraph {subgraph}: local {which} matrix: {source}")]
    Factor {
        subgraph: usize,
        which: &'static str,
        source: FactorError,
    },
    #[error("vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Neumann problem of one subgraph in the block form `[A_II, A_IΓ; A_ΓI, A_ΓΓ]`.
#[derive(Debug, Clone)]
pub struct LocalSystem {
    pub subgraph: usize,
    pub edges: Vec<usize>,
    /// Global dof of each local interior unknown.
    pub interior_dofs: Vec<usize>,
    /// Vertex id of each local interface unknown (increasing).
    pub interface_vertices: Vec<usize>,
    /// Position of each local interface unknown in the global Γ vector.
    pub interface_slots: Vec<usize>,
    pub a_ii: CsrMatrix,
    pub a_ig: CsrMatrix,
    pub a_gi: CsrMatrix,
    pub a_gg: CsrMatrix,
    /// The whole local matrix, interior unknowns first.
    pub neumann_matrix: CsrMatrix,
    pub f_i: Vec<f64>,
    pub f_g: Vec<f64>,
    dirichlet: SparseLdl,
    neumann: SparseLdl,
}

impl LocalSystem {
    fn build(
        dofs: &DofMap,
        elements: &[EdgeElement],
        problem: &Problem,
        partition: &Partition,
        slot_of_vertex: &HashMap<usize, usize>,
        subgraph: usize,
        edges: Vec<usize>,
    ) -> Result<Self, SubstructuringError> {
        let g = &problem.graph;
        let mut interior_dofs = Vec::new();
        for &e in &edges {
            interior_dofs.extend(dofs.interior_range(e));
        }
        let mut vertices: Vec<usize> = edges
            .iter()
            .flat_map(|&e| [g.edge(e).origin, g.edge(e).terminal])
            .collect();
        vertices.sort_unstable();
        vertices.dedup();
        let (interface_vertices, own_vertices): (Vec<usize>, Vec<usize>) = vertices
            .into_iter()
            .partition(|&v| partition.is_interface(v));
        interior_dofs.extend(own_vertices.iter().map(|&v| dofs.vertex_dof(v)));

        let n_i = interior_dofs.len();
        let n_g = interface_vertices.len();
        let mut local_of_dof: HashMap<usize, usize> = interior_dofs
            .iter()
            .enumerate()
            .map(|(k, &d)| (d, k))
            .collect();
        for (k, &v) in interface_vertices.iter().enumerate() {
            local_of_dof.insert(dofs.vertex_dof(v), n_i + k);
        }

        let mut triplets = Vec::new();
        let mut rhs = vec![0.0; n_i + n_g];
        for &e in &edges {
            let el = &elements[e];
            let local = |j: usize| local_of_dof[&dofs.node_dof(e, j)];
            for j in 0..el.n_nodes() {
                let a = local(j);
                triplets.push((a, a, el.diag[j]));
                rhs[a] += el.load[j];
                if j + 1 < el.n_nodes() {
                    let b = local(j + 1);
                    triplets.push((a, b, el.off[j]));
                    triplets.push((b, a, el.off[j]));
                }
            }
        }
        let neumann_matrix = CsrMatrix::from_triplets(n_i + n_g, n_i + n_g, &triplets);
        let mut blocks: [Vec<(usize, usize, f64)>; 4] = Default::default();
        for (r, c, v) in neumann_matrix.triplets() {
            match (r < n_i, c < n_i) {
                (true, true) => blocks[0].push((r, c, v)),
                (true, false) => blocks[1].push((r, c - n_i, v)),
                (false, true) => blocks[2].push((r - n_i, c, v)),
                (false, false) => blocks[3].push((r - n_i, c - n_i, v)),
            }
        }
        let a_ii = CsrMatrix::from_triplets(n_i, n_i, &blocks[0]);
        let a_ig = CsrMatrix::from_triplets(n_i, n_g, &blocks[1]);
        let a_gi = CsrMatrix::from_triplets(n_g, n_i, &blocks[2]);
        let a_gg = CsrMatrix::from_triplets(n_g, n_g, &blocks[3]);
        let dirichlet = SparseLdl::factor(&a_ii).map_err(|source| SubstructuringError::Factor {
            subgraph,
            which: "Dirichlet",
            source,
        })?;
        let neumann =
            SparseLdl::factor(&neumann_matrix).map_err(|source| SubstructuringError::Factor {
                subgraph,
                which: "Neumann",
                source,
            })?;
        let interface_slots = interface_vertices
            .iter()
            .map(|v| slot_of_vertex[v])
            .collect();
        let f_g = rhs.split_off(n_i);
        Ok(Self {
            subgraph,
            edges,
            interior_dofs,
            interface_vertices,
            interface_slots,
            a_ii,
            a_ig,
            a_gi,
            a_gg,
            neumann_matrix,
            f_i: rhs,
            f_g,
            dirichlet,
            neumann,
        })
    }

    pub fn n_interior(&self) -> usize {
        self.interior_dofs.len()
    }

    pub fn n_interface(&self) -> usize {
        self.interface_vertices.len()
    }

    /// `A_II⁻¹ b`: one discrete Dirichlet solve.
    pub fn dirichlet_solve(&self, b: &[f64]) -> Vec<f64> {
        self.dirichlet.solve(b)
    }

    /// `S^(i) u = A_ΓΓ u − A_ΓI A_II⁻¹ A_IΓ u` for local interface data `u`.
    pub fn schur_apply(&self, u: &[f64]) -> Vec<f64> {
        let t = self.dirichlet_solve(&self.a_ig.mul_vec(u));
        let mut y = self.a_gg.mul_vec(u);
        for (yi, zi) in y.iter_mut().zip(self.a_gi.mul_vec(&t)) {
            *yi -= zi;
        }
        y
    }

    /// `g^(i) = f_Γ^(i) − A_ΓI A_II⁻¹ f_I^(i)`.
    pub fn schur_rhs(&self) -> Vec<f64> {
        let t = self.dirichlet_solve(&self.f_i);
        let mut g = self.f_g.clone();
        for (gi, zi) in g.iter_mut().zip(self.a_gi.mul_vec(&t)) {
            *gi -= zi;
        }
        g
    }

    /// `S^(i)⁻¹ r` via the Neumann problem `A^(i) [w_I; w_Γ] = [0; r]`.
    pub fn neumann_solve(&self, r: &[f64]) -> Vec<f64> {
        let n_i = self.n_interior();
        let mut rhs = vec![0.0; n_i + r.len()];
        rhs[n_i..].copy_from_slice(r);
        self.neumann.solve(&rhs).split_off(n_i)
    }

    /// Interior values `A_II⁻¹ (f_I − A_IΓ u)`; without load, the discrete
    /// harmonic extension of `u`.
    pub fn extend(&self, u: &[f64], with_load: bool) -> Vec<f64> {
        let mut b = self.a_ig.mul_vec(u);
        for (k, bk) in b.iter_mut().enumerate() {
            *bk = if with_load { self.f_i[k] - *bk } else { -*bk };
        }
        self.dirichlet_solve(&b)
    }

    /// Dense `S^(i)`, one Dirichlet solve per local interface unknown.
    pub fn schur_dense(&self) -> DenseMatrix {
        let n = self.n_interface();
        let mut s = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            for (i, v) in self.schur_apply(&e).into_iter().enumerate() {
                s[(i, j)] = v;
            }
            e[j] = 0.0;
        }
        s
    }

    fn restrict(&self, u: &[f64]) -> Vec<f64> {
        self.interface_slots.iter().map(|&s| u[s]).collect()
    }
}

/// The interface operator `S = Σ_i R_iᵀ S^(i) R_i`, applied without forming it.
#[derive(Debug, Clone)]
pub struct SchurOperator {
    locals: Vec<LocalSystem>,
    interface: Vec<usize>,
    multiplicity: Vec<usize>,
    dofs: DofMap,
}

impl SchurOperator {
    pub fn new(problem: &Problem, partition: &Partition) -> Result<Self, SubstructuringError> {
        validate_partition(&problem.graph, partition)?;
        let dofs = DofMap::new(&problem.graph, &problem.mesh);
        let elements = edge_elements(problem);
        let slot_of_vertex: HashMap<usize, usize> = partition
            .interface
            .iter()
            .enumerate()
            .map(|(k, &v)| (v, k))
            .collect();
        let locals = partition
            .subgraph_edges()
            .into_par_iter()
            .enumerate()
            .map(|(i, edges)| {
                LocalSystem::build(
                    &dofs,
                    &elements,
                    problem,
                    partition,
                    &slot_of_vertex,
                    i,
                    edges,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            locals,
            interface: partition.interface.clone(),
            multiplicity: partition
                .interface
                .iter()
                .map(|&v| partition.multiplicity[v])
                .collect(),
            dofs,
        })
    }

    pub fn locals(&self) -> &[LocalSystem] {
        &self.locals
    }

    /// Interface vertex ids in Γ-vector order.
    pub fn interface(&self) -> &[usize] {
        &self.interface
    }

    /// Number of subgraphs containing each interface vertex, in Γ order.
    pub fn interface_multiplicity(&self) -> &[usize] {
        &self.multiplicity
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    fn check_dim(&self, len: usize) -> Result<(), SubstructuringError> {
        if len == self.interface.len() {
            Ok(())
        } else {
            Err(SubstructuringError::DimensionMismatch {
                expected: self.interface.len(),
                got: len,
            })
        }
    }

    /// Sums per-subgraph interface vectors into Γ in subgraph order, so the
    /// result does not depend on thread scheduling.
    fn gather(&self, parts: Vec<Vec<f64>>) -> Vec<f64> {
        let mut out = vec![0.0; self.interface.len()];
        for (ls, part) in self.locals.iter().zip(parts) {
            for (&s, v) in ls.interface_slots.iter().zip(part) {
                out[s] += v;
            }
        }
        out
    }

    /// `S u`, one Dirichlet solve per subgraph.
    pub fn schur_apply(&self, u: &[f64]) -> Result<Vec<f64>, SubstructuringError> {
        self.check_dim(u.len())?;
        let parts = self
            .locals
            .par_iter()
            .map(|ls| ls.schur_apply(&ls.restrict(u)))
            .collect();
        Ok(self.gather(parts))
    }

    /// `g_Γ = Σ_i (f_Γ^(i) − A_ΓI^(i) A_II^(i)⁻¹ f_I^(i))`.
    pub fn schur_rhs(&self) -> Vec<f64> {
        let parts = self.locals.par_iter().map(LocalSystem::schur_rhs).collect();
        self.gather(parts)
    }

    /// `Σ_i R_iᵀ S^(i)⁻¹ R_i r` with optional pre/post scaling by `weights`,
    /// each local inverse applied by one Neumann solve.
    pub fn neumann_sum(&self, r: &[f64], weights: Option<&[f64]>) -> Vec<f64> {
        let scaled: Vec<f64> = match weights {
            Some(w) => r.iter().zip(w).map(|(a, b)| a * b).collect(),
            None => r.to_vec(),
        };
        let parts = self
            .locals
            .par_iter()
            .map(|ls| ls.neumann_solve(&ls.restrict(&scaled)))
            .collect();
        let mut out = self.gather(parts);
        if let Some(w) = weights {
            for (o, wi) in out.iter_mut().zip(w) {
                *o *= wi;
            }
        }
        out
    }

    /// Full dof vector from interface values: interior unknowns of every
    /// subgraph by a Dirichlet solve, with or without the load.
    pub fn harmonic_extension(
        &self,
        u_gamma: &[f64],
        with_load: bool,
    ) -> Result<Vec<f64>, SubstructuringError> {
        self.check_dim(u_gamma.len())?;
        let mut u = vec![0.0; self.dofs.len()];
        for (&v, &val) in self.interface.iter().zip(u_gamma) {
            u[self.dofs.vertex_dof(v)] = val;
        }
        let parts: Vec<Vec<f64>> = self
            .locals
            .par_iter()
            .map(|ls| ls.extend(&ls.restrict(u_gamma), with_load))
            .collect();
        for (ls, part) in self.locals.iter().zip(parts) {
            for (&d, val) in ls.interior_dofs.iter().zip(part) {
                u[d] = val;
            }
        }
        Ok(u)
    }

    /// `Σ_i R_iᵀ S^(i) R_i` assembled densely from the local Schur complements.
    pub fn dense_from_locals(&self) -> DenseMatrix {
        let d = self.interface.len();
        let mut s = DenseMatrix::zeros(d, d);
        for ls in &self.locals {
            let local = ls.schur_dense();
            for (a, &sa) in ls.interface_slots.iter().enumerate() {
                for (b, &sb) in ls.interface_slots.iter().enumerate() {
                    s[(sa, sb)] += local[(a, b)];
                }
            }
        }
        s
    }

    /// `diag(S)` from the diagonals of the local Schur complements.
    pub fn diagonal(&self) -> Vec<f64> {
        let parts = self
            .locals
            .par_iter()
            .map(|ls| ls.schur_dense().diagonal())
            .collect();
        self.gather(parts)
    }

    /// Interface restriction of the per-subgraph right-hand sides, for
    /// checking `g_Γ = Σ_i g_Γ^(i)`.
    pub fn local_rhs(&self) -> Vec<(Vec<usize>, Vec<f64>)> {
        self.locals
            .iter()
            .map(|ls| (ls.interface_slots.clone(), ls.schur_rhs()))
            .collect()
    }
}

impl LinearOperator for SchurOperator {
    fn dim(&self) -> usize {
        self.interface.len()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let v = self
            .schur_apply(x)
            .expect("Schur operator dimension mismatch");
        y.copy_from_slice(&v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, solve_direct, Mesh, Problem};
    use crate::graph::{dgm, path, star, MetricGraph};
    use crate::operator::to_dense;
    use crate::partition::partition_by_edges;

    fn unit(g: MetricGraph, cells: usize) -> Problem {
        let mesh = Mesh::from_counts(&g, vec![cells; g.n_edges()]).unwrap();
        Problem::unit(g, mesh).unwrap()
    }

    // Pendant unit edge, n_e = 2, c = p = 1. The interior node and the
    // degree-1 vertex are both local interior dofs, so
    // A_II = [[13/3, -23/12], [-23/12, 13/6]], A_IΓ = [-23/12, 0]ᵀ and
    // S = 13/6 - (23/12)² (13/6) / det(A_II) = 13/6 - 6877/4938.
    const PENDANT_S: f64 = 13.0 / 6.0 - 6877.0 / 4938.0;

    #[test]
    fn local_sizes() {
        let p = unit(dgm(1), 2);
        let op = SchurOperator::new(&p, &partition_by_edges(&p.graph)).unwrap();
        for ls in op.locals() {
            assert_eq!(ls.n_interior() + ls.n_interface(), 3);
            assert_eq!(ls.n_interface(), 2);
        }
        let p = unit(path(2, 1.0).unwrap(), 2);
        let op = SchurOperator::new(&p, &partition_by_edges(&p.graph)).unwrap();
        let ls = &op.locals()[0];
        assert_eq!(ls.n_interface(), 1);
        assert_eq!(ls.n_interior(), 2);
        // the pendant vertex keeps its natural condition as a local interior dof
        assert!(ls.interior_dofs.contains(&op.dofs().vertex_dof(0)));
        assert_eq!(ls.interface_vertices, vec![1]);
    }

    #[test]
    fn pendant_local_schur() {
        let p = unit(path(2, 1.0).unwrap(), 2);
        let op = SchurOperator::new(&p, &partition_by_edges(&p.graph)).unwrap();
        let s1 = op.locals()[0].schur_dense();
        let s2 = op.locals()[1].schur_dense();
        assert!((s1[(0, 0)] - PENDANT_S).abs() < 1e-14);
        assert!((PENDANT_S - 0.77400).abs() < 1e-5);
        assert!((s1[(0, 0)] - s2[(0, 0)]).abs() < 1e-15);
        let s = op.schur_apply(&[1.0]).unwrap();
        assert!((s[0] - 2.0 * PENDANT_S).abs() < 1e-14);
        assert_eq!(op.schur_apply(&[0.0]).unwrap(), vec![0.0]);
        // f = p = 1 means u = 1, so g = S 1
        assert!((op.schur_rhs()[0] - s[0]).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch() {
        let p = unit(path(2, 1.0).unwrap(), 2);
        let op = SchurOperator::new(&p, &partition_by_edges(&p.graph)).unwrap();
        assert!(matches!(
            op.schur_apply(&[1.0, 2.0]),
            Err(SubstructuringError::DimensionMismatch {
                expected: 1,
                got: 2
            })
        ));
    }

    #[test]
    fn single_edge_is_one_neumann_solve() {
        let p = unit(dgm(0), 8);
        let op = SchurOperator::new(&p, &partition_by_edges(&p.graph)).unwrap();
        assert_eq!(op.dim(), 0);
        let u = op.harmonic_extension(&[], true).unwrap();
        assert!(u.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    /// Eliminates every non-interface dof from the assembled matrix densely.
    fn dense_schur_oracle(p: &Problem, op: &SchurOperator) -> (DenseMatrix, Vec<f64>) {
        let sys = assemble(p);
        let a = sys.matrix.to_dense();
        let gamma: Vec<usize> = op
            .interface()
            .iter()
            .map(|&v| sys.dofs.vertex_dof(v))
            .collect();
        let inner: Vec<usize> = (0..sys.dofs.len()).filter(|d| !gamma.contains(d)).collect();
        let pick = |rows: &[usize], cols: &[usize]| {
            DenseMatrix::from_rows(
                &rows
                    .iter()
                    .map(|&r| cols.iter().map(|&c| a[(r, c)]).collect())
                    .collect::<Vec<_>>(),
            )
        };
        let a_ii = pick(&inner, &inner);
        let a_ig = pick(&inner, &gamma);
        let a_gi = pick(&gamma, &inner);
        let a_gg = pick(&gamma, &gamma);
        let x = a_ii.inverse().unwrap().matmul(&a_ig);
        let corr = a_gi.matmul(&x);
        let mut s = a_gg.clone();
        for i in 0..gamma.len() {
            for j in 0..gamma.len() {
                s[(i, j)] -= corr[(i, j)];
            }
        }
        let f_i: Vec<f64> = inner.iter().map(|&d| sys.rhs[d]).collect();
        let t = a_ii.solve(&f_i).unwrap();
        let g: Vec<f64> = gamma
            .iter()
            .zip(a_gi.mul_vec(&t))
            .map(|(&d, z)| sys.rhs[d] - z)
            .collect();
        (s, g)
    }

    #[test]
    fn matches_dense_elimination() {
        for g in [star(3, 1.0).unwrap(), dgm(2), path(3, 0.7).unwrap()] {
            let p = unit(g, 4);
            let op = SchurOperator::new(&p, &partition_by_edges(&p.graph)).unwrap();
            let (s, g) = dense_schur_oracle(&p, &op);
            let probed = to_dense(&op);
            assert!(probed.max_abs_diff(&s) < 1e-10);
            assert!(op.dense_from_locals().max_abs_diff(&probed) < 1e-12);
            for (a, b) in op.schur_rhs().iter().zip(&g) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn recovers_direct_solution() {
        let g = dgm(2);
        let mesh = Mesh::from_counts(&g, vec![6; g.n_edges()]).unwrap();
        let p = Problem::new(
            g,
            mesh,
            crate::fem::EdgeFunction::parse("1 + x").unwrap(),
            crate::fem::EdgeFunction::parse("2 - x").unwrap(),
            crate::fem::EdgeFunction::parse("sin(3*x) + 1").unwrap(),
        )
        .unwrap();
        let op = SchurOperator::new(&p, &partition_by_edges(&p.graph)).unwrap();
        let s = to_dense(&op);
        let u_gamma = s.solve(&op.schur_rhs()).unwrap();
        let u = op.harmonic_extension(&u_gamma, true).unwrap();
        let direct = solve_direct(&assemble(&p)).unwrap();
        for (a, b) in u.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
