//! Block-diagonal semidefinite programs in standard primal form
//!
//! ```text
//!   minimize    <C, X>
//!   subject to  <A_k, X> = b_k,   k = 1..m
//!               X = diag(X_1, ..., X_B),  X_b PSD or (diagonal blocks) nonnegative
//! ```
//!
//! together with a dense primal-dual interior point solver ([`solve`]),
//! an independent residual checker ([`check_solution`]) and SDPA sparse
//! (`.dat-s`) import/export ([`sdpa`]).

mod check;
mod ipm;
pub mod sdpa;

pub use check::{check_solution, ResidualReport};
pub use ipm::solve;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("structural error: {0}")]
    Structure(String),
    #[error("SDPA parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Shape of one diagonal block of the cone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// Dense symmetric positive semidefinite block of the given order.
    Psd(usize),
    /// Nonnegative orthant of the given length (an SDPA diagonal block).
    Diag(usize),
}

impl BlockKind {
    pub fn dim(&self) -> usize {
        match *self {
            BlockKind::Psd(n) | BlockKind::Diag(n) => n,
        }
    }

    /// SDPA block-structure number (negative for diagonal blocks).
    pub fn sdpa_size(&self) -> i64 {
        match *self {
            BlockKind::Psd(n) => n as i64,
            BlockKind::Diag(n) => -(n as i64),
        }
    }
}

/// One upper-triangle entry of a symmetric data matrix: `(block, i, j, v)`
/// with `i <= j`, zero-based. An off-diagonal entry stands for both `(i, j)`
/// and `(j, i)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub rhs: f64,
    pub entries: Vec<Entry>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct SdpProblem {
    pub blocks: Vec<BlockKind>,
    pub objective: Vec<Entry>,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Checks block indices, triangle convention, diagonal-block entries and
    /// finiteness of all data.
    pub fn validate(&self) -> Result<(), SdpError> {
        if self.blocks.is_empty() {
            return Err(SdpError::Structure("problem has no blocks".into()));
        }
        if self.blocks.iter().any(|b| b.dim() == 0) {
            return Err(SdpError::Structure("zero-sized block".into()));
        }
        let check = |e: &Entry, what: &str| -> Result<(), SdpError> {
            let kind = self
                .blocks
                .get(e.block)
                .ok_or_else(|| SdpError::Structure(format!("{what}: block {} out of range", e.block)))?;
            if e.i > e.j || e.j >= kind.dim() {
                return Err(SdpError::Structure(format!(
                    "{what}: entry ({}, {}) invalid for block {} of order {}",
                    e.i,
                    e.j,
                    e.block,
                    kind.dim()
                )));
            }
            if matches!(kind, BlockKind::Diag(_)) && e.i != e.j {
                return Err(SdpError::Structure(format!("{what}: off-diagonal entry in diagonal block {}", e.block)));
            }
            if !e.v.is_finite() {
                return Err(SdpError::Structure(format!("{what}: non-finite value")));
            }
            Ok(())
        };
        for e in &self.objective {
            check(e, "objective")?;
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(SdpError::Structure(format!("constraint {k}: non-finite right-hand side")));
            }
            for e in &c.entries {
                check(e, &format!("constraint {k}"))?;
            }
        }
        Ok(())
    }

    /// `<M, X>` for a sparse symmetric data matrix given by its entries.
    pub fn inner(entries: &[Entry], x: &[BlockValue]) -> f64 {
        entries
            .iter()
            .map(|e| match &x[e.block] {
                BlockValue::Dense(m) => {
                    if e.i == e.j {
                        e.v * m[(e.i, e.i)]
                    } else {
                        e.v * (m[(e.i, e.j)] + m[(e.j, e.i)])
                    }
                }
                BlockValue::Diag(d) => e.v * d[e.i],
            })
            .sum()
    }

    /// Dense copy of a sparse symmetric data matrix restricted to a block layout.
    pub fn densify(&self, entries: &[Entry]) -> Vec<BlockValue> {
        let mut out = BlockValue::zeros(&self.blocks);
        for e in entries {
            match &mut out[e.block] {
                BlockValue::Dense(m) => {
                    m[(e.i, e.j)] += e.v;
                    if e.i != e.j {
                        m[(e.j, e.i)] += e.v;
                    }
                }
                BlockValue::Diag(d) => d[e.i] += e.v,
            }
        }
        out
    }
}

/// Value of one block of a primal or dual matrix variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BlockValue {
    Dense(DMatrix<f64>),
    Diag(DVector<f64>),
}

impl BlockValue {
    pub fn zeros(blocks: &[BlockKind]) -> Vec<BlockValue> {
        blocks
            .iter()
            .map(|b| match *b {
                BlockKind::Psd(n) => BlockValue::Dense(DMatrix::zeros(n, n)),
                BlockKind::Diag(n) => BlockValue::Diag(DVector::zeros(n)),
            })
            .collect()
    }

    /// Smallest eigenvalue (smallest entry for diagonal blocks).
    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            BlockValue::Dense(m) => {
                if m.nrows() == 0 {
                    return f64::INFINITY;
                }
                let sym = (m + m.transpose()) * 0.5;
                sym.symmetric_eigenvalues().min()
            }
            BlockValue::Diag(d) => d.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn as_dense(&self) -> Option<&DMatrix<f64>> {
        match self {
            BlockValue::Dense(m) => Some(m),
            BlockValue::Diag(_) => None,
        }
    }

    pub fn as_diag(&self) -> Option<&DVector<f64>> {
        match self {
            BlockValue::Diag(d) => Some(d),
            BlockValue::Dense(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    /// Stopped early (stall or iteration limit) at an iterate meeting the
    /// relaxed tolerance; typical when the optimum is not attained.
    NearOptimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    NumericalFailure,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub tol_gap: f64,
    pub tol_psd: f64,
    /// Relative residual an improving ray must meet before infeasibility is declared.
    pub tol_infeasible: f64,
    /// Residual and gap level at which a stalled run still counts as solved.
    pub tol_relaxed: f64,
    pub max_iter: usize,
    /// Fraction of the step to the cone boundary actually taken.
    pub step_fraction: f64,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_primal: 1e-8,
            tol_dual: 1e-8,
            tol_gap: 1e-8,
            tol_psd: 1e-9,
            tol_infeasible: 1e-8,
            tol_relaxed: 1e-5,
            max_iter: 200,
            step_fraction: 0.98,
            verbose: false,
        }
    }
}

/// One line of the iteration log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    pub mu: f64,
    pub tau: f64,
    pub kappa: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub gap: f64,
    pub step: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Primal blocks; on infeasibility verdicts these hold the unscaled
    /// improving ray instead of a solution.
    pub x: Vec<BlockValue>,
    pub y: DVector<f64>,
    pub s: Vec<BlockValue>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
    pub log: Vec<IterationLog>,
}
