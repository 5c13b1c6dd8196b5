use crate::graph::MetricGraph;

use super::FemError;

/// Equidistant subdivision of every edge into `n_e ≥ 2` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    cells: Vec<usize>,
    spacing: Vec<f64>,
}

impl Mesh {
    /// `n_e = max(2, ceil(ℓ_e / target_h))`.
    pub fn uniform(g: &MetricGraph, target_h: f64) -> Result<Self, FemError> {
        if !(target_h.is_finite() && target_h > 0.0) {
            return Err(FemError::InvalidMesh(format!(
                "target spacing must be positive, got {target_h}"
            )));
        }
        let cells = g
            .edges()
            .iter()
            .map(|e| {
                // shave rounding noise so 1.0 / 2^-k lands on 2^k, not 2^k + 1
                let ratio = e.length / target_h;
                let n = (ratio * (1.0 - 4.0 * f64::EPSILON)).ceil() as usize;
                n.max(2)
            })
            .collect();
        Self::from_counts(g, cells)
    }

    /// Uniform mesh with target spacing `2^-level`.
    pub fn with_level(g: &MetricGraph, level: u32) -> Result<Self, FemError> {
        Self::uniform(g, 2f64.powi(-(level as i32)))
    }

    pub fn from_counts(g: &MetricGraph, cells: Vec<usize>) -> Result<Self, FemError> {
        if cells.len() != g.n_edges() {
            return Err(FemError::InvalidMesh(format!(
                "{} cell counts for {} edges",
                cells.len(),
                g.n_edges()
            )));
        }
        if let Some(e) = cells.iter().position(|&n| n < 2) {
            return Err(FemError::InvalidMesh(format!(
                "edge {e} needs at least 2 cells, got {}",
                cells[e]
            )));
        }
        let spacing = g
            .edges()
            .iter()
            .zip(&cells)
            .map(|(e, &n)| e.length / n as f64)
            .collect();
        Ok(Self { cells, spacing })
    }

    pub fn cells(&self, e: usize) -> usize {
        self.cells[e]
    }

    pub fn spacing(&self, e: usize) -> f64 {
        self.spacing[e]
    }

    pub fn n_edges(&self) -> usize {
        self.cells.len()
    }

    /// ĥ, the largest spacing over all edges.
    pub fn h_max(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    /// Coordinate of node `j` (0..=n_e) on edge `e`.
    pub fn node(&self, e: usize, j: usize) -> f64 {
        j as f64 * self.spacing[e]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{dgm, MetricGraph};

    #[test]
    fn counts_from_target() {
        let unit = dgm(0);
        let m = Mesh::uniform(&unit, 0.5).unwrap();
        assert_eq!((m.cells(0), m.spacing(0)), (2, 0.5));
        assert_eq!(Mesh::uniform(&unit, 2f64.powi(-6)).unwrap().cells(0), 64);
        assert_eq!(Mesh::with_level(&unit, 10).unwrap().cells(0), 1024);
        // never fewer than 2 cells
        assert_eq!(Mesh::uniform(&unit, 5.0).unwrap().cells(0), 2);
        let long = MetricGraph::from_triples(&[(0, 1, 2.0)]).unwrap();
        let m = Mesh::uniform(&long, 0.3).unwrap();
        assert_eq!(m.cells(0), 7);
        assert!((m.spacing(0) - 2.0 / 7.0).abs() < 1e-16);
        assert!((m.spacing(0) * 7.0 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn h_max_over_edges() {
        let g = MetricGraph::from_triples(&[(0, 1, 1.0), (1, 2, 3.0)]).unwrap();
        let m = Mesh::from_counts(&g, vec![4, 4]).unwrap();
        assert_eq!(m.h_max(), 0.75);
    }

    #[test]
    fn rejects_bad_input() {
        let g = dgm(0);
        assert!(Mesh::uniform(&g, 0.0).is_err());
        assert!(Mesh::uniform(&g, f64::NAN).is_err());
        assert!(Mesh::from_counts(&g, vec![1]).is_err());
        assert!(Mesh::from_counts(&g, vec![2, 2]).is_err());
    }
}
