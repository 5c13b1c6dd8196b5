use super::quadrature::GAUSS5;
use super::{DofMap, EdgeFunction, Mesh};
use crate::graph::MetricGraph;

/// A reference solution for error studies. Without an explicit derivative,
/// `u'` is approximated by a fourth-order central difference.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub value: EdgeFunction,
    pub derivative: Option<EdgeFunction>,
}

impl ExactSolution {
    pub fn new(value: EdgeFunction) -> Self {
        Self {
            value,
            derivative: None,
        }
    }

    pub fn with_derivative(mut self, d: EdgeFunction) -> Self {
        self.derivative = Some(d);
        self
    }

    pub fn value(&self, e: usize, x: f64) -> f64 {
        self.value.eval(e, x)
    }

    pub fn slope(&self, e: usize, x: f64) -> f64 {
        if let Some(d) = &self.derivative {
            return d.eval(e, x);
        }
        let step = 1e-3 * x.abs().max(1.0);
        let f = |t: f64| self.value.eval(e, t);
        (8.0 * (f(x + step) - f(x - step)) - (f(x + 2.0 * step) - f(x - 2.0 * step)))
            / (12.0 * step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ErrorNorms {
    pub l2: f64,
    /// `‖u_h' − u'‖` summed over edges.
    pub h1_semi: f64,
    /// Full `H¹(G)` norm: `sqrt(l2² + h1_semi²)`.
    pub h1: f64,
}

/// Edgewise 5-point Gauss quadrature of `u_h − u` and `u_h' − u'`, where
/// `u_h` is the piecewise linear function with nodal values `u_h`.
pub fn error_norms(g: &MetricGraph, mesh: &Mesh, u_h: &[f64], exact: &ExactSolution) -> ErrorNorms {
    let dofs = DofMap::new(g, mesh);
    assert_eq!(u_h.len(), dofs.len(), "solution vector has wrong length");
    let (mut l2, mut semi) = (0.0, 0.0);
    for e in 0..g.n_edges() {
        let h = mesh.spacing(e);
        for cell in 0..mesh.cells(e) {
            let a = u_h[dofs.node_dof(e, cell)];
            let b = u_h[dofs.node_dof(e, cell + 1)];
            let slope = (b - a) / h;
            for &(t, w) in GAUSS5.iter() {
                let x = (cell as f64 + t) * h;
                let uh = a + t * (b - a);
                let dv = uh - exact.value(e, x);
                let dd = slope - exact.slope(e, x);
                l2 += w * h * dv * dv;
                semi += w * h * dd * dd;
            }
        }
    }
    ErrorNorms {
        l2: l2.sqrt(),
        h1_semi: semi.sqrt(),
        h1: (l2 + semi).sqrt(),
    }
}

/// Nodal interpolant. Vertex values come from the first incident edge.
pub fn interpolate(g: &MetricGraph, mesh: &Mesh, exact: &EdgeFunction) -> Vec<f64> {
    let dofs = DofMap::new(g, mesh);
    let mut u = vec![f64::NAN; dofs.len()];
    for e in 0..g.n_edges() {
        let n = mesh.cells(e);
        for j in 1..n {
            u[dofs.interior_dof(e, j)] = exact.eval(e, mesh.node(e, j));
        }
    }
    for v in 0..g.n_vertices() {
        let e = g.incident_edges(v)[0];
        let x = if g.edge(e).origin == v {
            0.0
        } else {
            g.edge(e).length
        };
        u[dofs.vertex_dof(v)] = exact.eval(e, x);
    }
    u
}

/// Least-squares slope of `log(err)` against `log(h)`.
pub fn fitted_order(h: &[f64], err: &[f64]) -> Option<f64> {
    assert_eq!(h.len(), err.len());
    if h.len() < 2 || err.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return None;
    }
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, solve_direct, Problem};
    use crate::graph::{dgm, star};

    #[test]
    fn interpolant_of_piecewise_linear_is_exact() {
        let g = star(3, 1.0).unwrap();
        let mesh = Mesh::from_counts(&g, vec![4, 5, 6]).unwrap();
        let exact = ExactSolution::new(EdgeFunction::parse("1 - 2*x").unwrap())
            .with_derivative(EdgeFunction::constant(-2.0));
        let u = interpolate(&g, &mesh, &exact.value);
        let err = error_norms(&g, &mesh, &u, &exact);
        assert!(err.l2 < 1e-14 && err.h1 < 1e-14, "{err:?}");

        let constant = ExactSolution::new(EdgeFunction::constant(0.75));
        let u = interpolate(&g, &mesh, &constant.value);
        let err = error_norms(&g, &mesh, &u, &constant);
        assert!(err.l2 < 1e-14 && err.h1 < 1e-14, "{err:?}");
    }

    #[test]
    fn finite_difference_slope() {
        let exact = ExactSolution::new(EdgeFunction::parse("cos(pi*x)").unwrap());
        for x in [0.1, 0.5, 0.93] {
            let d = -std::f64::consts::PI * (std::f64::consts::PI * x).sin();
            assert!((exact.slope(0, x) - d).abs() < 1e-9);
        }
    }

    #[test]
    fn slope_fit() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        assert!((fitted_order(&h, &e).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(fitted_order(&h, &[1.0, 0.0, 1.0]), None);
    }

    #[test]
    fn star_rates_halve_and_quarter() {
        let g = star(3, 1.0).unwrap();
        let exact = ExactSolution::new(EdgeFunction::parse("cos(pi*x)").unwrap());
        let mut prev: Option<ErrorNorms> = None;
        for level in [4u32, 5] {
            let mesh = Mesh::with_level(&g, level).unwrap();
            let p = Problem::new(
                g.clone(),
                mesh.clone(),
                EdgeFunction::constant(1.0),
                EdgeFunction::constant(1.0),
                EdgeFunction::parse("(pi^2+1)*cos(pi*x)").unwrap(),
            )
            .unwrap();
            let u = solve_direct(&assemble(&p)).unwrap();
            let err = error_norms(&g, &mesh, &u, &exact);
            if let Some(prev) = prev {
                let r2 = prev.l2 / err.l2;
                let r1 = prev.h1 / err.h1;
                assert!((3.6..4.4).contains(&r2), "L2 ratio {r2}");
                assert!((1.8..2.2).contains(&r1), "H1 ratio {r1}");
            }
            prev = Some(err);
        }
    }

    #[test]
    fn dgm_vertex_values_take_first_edge() {
        let g = dgm(1);
        let mesh = Mesh::from_counts(&g, vec![2; 3]).unwrap();
        let u = interpolate(&g, &mesh, &EdgeFunction::constant(2.0));
        assert!(u.iter().all(|&v| v == 2.0));
    }
}
