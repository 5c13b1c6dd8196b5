//! Interface preconditioners for the Schur complement system.
//!
//! * `None`: identity.
//! * `Diagonal`: `D_S⁻¹` with `D_S = diag(S)`.
//! * `Polynomial`: `D⁻¹ + D⁻¹(D − S)D⁻¹`, the first-order truncation of
//!   `S⁻¹ = Σ_k (D⁻¹(D − S))^k D⁻¹`.
//! * `NeumannNeumann`: `D_Γ (Σ_i R_iᵀ S^(i)⁻¹ R_i) D_Γ` with
//!   `D_Γ = diag(1 / multiplicity)`, every local inverse applied by one
//!   Neumann solve.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::operator::LinearOperator;
use crate::substructuring::SchurOperator;

#[derive(Debug, Error, PartialEq)]
pub enum PrecondError {
    #[error("diagonal of S has nonpositive entry {value:e} at interface slot {slot}")]
    NonPositiveDiagonal { slot: usize, value: f64 },
    #[error("vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown preconditioner `{0}` (expected none, diag, poly or nn)")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrecondKind {
    None,
    Diagonal,
    Polynomial,
    NeumannNeumann,
}

impl PrecondKind {
    pub const ALL: [PrecondKind; 4] = [
        PrecondKind::None,
        PrecondKind::Diagonal,
        PrecondKind::Polynomial,
        PrecondKind::NeumannNeumann,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PrecondKind::None => "none",
            PrecondKind::Diagonal => "diag",
            PrecondKind::Polynomial => "poly",
            PrecondKind::NeumannNeumann => "nn",
        }
    }
}

impl fmt::Display for PrecondKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrecondKind {
    type Err = PrecondError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "none" => PrecondKind::None,
            "diag" | "diagonal" => PrecondKind::Diagonal,
            "poly" | "polynomial" => PrecondKind::Polynomial,
            "nn" | "neumann-neumann" => PrecondKind::NeumannNeumann,
            other => return Err(PrecondError::UnknownKind(other.to_string())),
        })
    }
}

/// A preconditioner bound to the Schur operator it was built for.
#[derive(Debug, Clone)]
pub struct Preconditioner<'a> {
    kind: PrecondKind,
    op: &'a SchurOperator,
    diag: Option<Vec<f64>>,
    scaling: Option<Vec<f64>>,
    setup_seconds: f64,
}

impl<'a> Preconditioner<'a> {
    /// Builds the preconditioner; Neumann–Neumann uses multiplicity scaling.
    pub fn setup(kind: PrecondKind, op: &'a SchurOperator) -> Result<Self, PrecondError> {
        Self::setup_with(kind, op, true)
    }

    /// As [`Preconditioner::setup`]; `scaled = false` drops `D_Γ` from
    /// Neumann–Neumann.
    pub fn setup_with(
        kind: PrecondKind,
        op: &'a SchurOperator,
        scaled: bool,
    ) -> Result<Self, PrecondError> {
        let start = Instant::now();
        let mut diag = None;
        let mut scaling = None;
        match kind {
            PrecondKind::None => {}
            PrecondKind::Diagonal | PrecondKind::Polynomial => {
                let d = op.diagonal();
                if let Some((slot, &value)) =
                    d.iter().enumerate().find(|(_, v)| v.is_nan() || **v <= 0.0)
                {
                    return Err(PrecondError::NonPositiveDiagonal { slot, value });
                }
                diag = Some(d);
            }
            PrecondKind::NeumannNeumann => {
                if scaled {
                    scaling = Some(
                        op.interface_multiplicity()
                            .iter()
                            .map(|&m| 1.0 / m as f64)
                            .collect(),
                    );
                }
            }
        }
        Ok(Self {
            kind,
            op,
            diag,
            scaling,
            setup_seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn kind(&self) -> PrecondKind {
        self.kind
    }

    /// Wall time spent in setup (probing the diagonal for diag/poly).
    pub fn setup_seconds(&self) -> f64 {
        self.setup_seconds
    }

    /// `D_S` for the diagonal and polynomial variants.
    pub fn diagonal(&self) -> Option<&[f64]> {
        self.diag.as_deref()
    }

    /// `D_Γ` entries for scaled Neumann–Neumann.
    pub fn scaling(&self) -> Option<&[f64]> {
        self.scaling.as_deref()
    }

    pub fn apply_checked(&self, r: &[f64]) -> Result<Vec<f64>, PrecondError> {
        if r.len() != self.op.dim() {
            return Err(PrecondError::DimensionMismatch {
                expected: self.op.dim(),
                got: r.len(),
            });
        }
        Ok(self.apply(r))
    }
}

impl LinearOperator for Preconditioner<'_> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        match self.kind {
            PrecondKind::None => z.copy_from_slice(r),
            PrecondKind::Diagonal => {
                let d = self.diag.as_ref().unwrap();
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(d) {
                    *zi = ri / di;
                }
            }
            PrecondKind::Polynomial => {
                // D⁻¹ r + D⁻¹ (D − S) D⁻¹ r = 2 D⁻¹ r − D⁻¹ S D⁻¹ r
                let d = self.diag.as_ref().unwrap();
                let y: Vec<f64> = r.iter().zip(d).map(|(ri, di)| ri / di).collect();
                let sy = self.op.apply(&y);
                for (((zi, yi), si), di) in z.iter_mut().zip(&y).zip(&sy).zip(d) {
                    *zi = 2.0 * yi - si / di;
                }
            }
            PrecondKind::NeumannNeumann => {
                z.copy_from_slice(&self.op.neumann_sum(r, self.scaling.as_deref()));
            }
        }
    }
}

/// One damped preconditioned Richardson update
/// `u ← u + θ M⁻¹ (g − S u)`.
pub fn nn_richardson_step(
    op: &SchurOperator,
    prec: &Preconditioner<'_>,
    g: &[f64],
    u: &[f64],
    theta: f64,
) -> Vec<f64> {
    let su = op.apply(u);
    let r: Vec<f64> = g.iter().zip(&su).map(|(a, b)| a - b).collect();
    let z = prec.apply(&r);
    u.iter().zip(&z).map(|(ui, zi)| ui + theta * zi).collect()
}
