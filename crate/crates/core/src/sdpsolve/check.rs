//! Residual recomputation from problem data only.

use serde::{Deserialize, Serialize};

use super::{BlockKind, BlockValue, SdpProblem, SdpSolution, SolverOptions};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `max_k |<A_k, X> - b_k|`
    pub primal_residual: f64,
    /// Largest entry of `A*(y) + S - C`.
    pub dual_residual: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `|<C, X> - b^T y|`
    pub gap: f64,
    /// `<X, S>`
    pub complementarity: f64,
    pub min_eig_x: Vec<f64>,
    pub min_eig_s: Vec<f64>,
    /// Blocks of X or S whose smallest eigenvalue is below `-tol_psd`.
    pub psd_violations: Vec<String>,
}

impl ResidualReport {
    pub fn flagged(&self) -> bool {
        !self.psd_violations.is_empty()
    }
}

/// Recomputes residuals and eigenvalue checks with the default PSD tolerance.
pub fn check_solution(problem: &SdpProblem, solution: &SdpSolution) -> ResidualReport {
    check_solution_with(problem, solution, SolverOptions::default().tol_psd)
}

pub fn check_solution_with(problem: &SdpProblem, solution: &SdpSolution, tol_psd: f64) -> ResidualReport {
    let x = &solution.x;
    let s = &solution.s;
    let y = &solution.y;

    let primal_residual = problem
        .constraints
        .iter()
        .map(|c| (SdpProblem::inner(&c.entries, x) - c.rhs).abs())
        .fold(0.0, f64::max);

    // A*(y) + S - C assembled densely
    let mut r = BlockValue::zeros(&problem.blocks);
    let add = |r: &mut Vec<BlockValue>, block: usize, i: usize, j: usize, v: f64| match &mut r[block] {
        BlockValue::Dense(m) => {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        }
        BlockValue::Diag(d) => d[i] += v,
    };
    for (k, c) in problem.constraints.iter().enumerate() {
        let yk = y.get(k).copied().unwrap_or(0.0);
        for e in &c.entries {
            add(&mut r, e.block, e.i, e.j, yk * e.v);
        }
    }
    for e in &problem.objective {
        add(&mut r, e.block, e.i, e.j, -e.v);
    }
    for (rb, sb) in r.iter_mut().zip(s) {
        match (rb, sb) {
            (BlockValue::Dense(a), BlockValue::Dense(b)) => *a += b,
            (BlockValue::Diag(a), BlockValue::Diag(b)) => *a += b,
            _ => {}
        }
    }
    let dual_residual = r
        .iter()
        .map(|b| match b {
            BlockValue::Dense(m) => m.iter().fold(0.0f64, |a, v| a.max(v.abs())),
            BlockValue::Diag(d) => d.iter().fold(0.0f64, |a, v| a.max(v.abs())),
        })
        .fold(0.0, f64::max);

    let primal_objective = SdpProblem::inner(&problem.objective, x);
    let dual_objective: f64 = problem
        .constraints
        .iter()
        .enumerate()
        .map(|(k, c)| c.rhs * y.get(k).copied().unwrap_or(0.0))
        .sum();
    let complementarity = x
        .iter()
        .zip(s)
        .map(|(a, b)| match (a, b) {
            (BlockValue::Dense(a), BlockValue::Dense(b)) => a.component_mul(b).sum(),
            (BlockValue::Diag(a), BlockValue::Diag(b)) => a.dot(b),
            _ => 0.0,
        })
        .sum();

    let min_eig_x: Vec<f64> = x.iter().map(BlockValue::min_eigenvalue).collect();
    let min_eig_s: Vec<f64> = s.iter().map(BlockValue::min_eigenvalue).collect();
    let mut psd_violations = Vec::new();
    for (b, kind) in problem.blocks.iter().enumerate() {
        let tag = match kind {
            BlockKind::Psd(_) => "psd",
            BlockKind::Diag(_) => "diag",
        };
        if min_eig_x[b] < -tol_psd {
            psd_violations.push(format!("X block {b} ({tag}): min eig {:.3e}", min_eig_x[b]));
        }
        if min_eig_s[b] < -tol_psd {
            psd_violations.push(format!("S block {b} ({tag}): min eig {:.3e}", min_eig_s[b]));
        }
    }

    ResidualReport {
        primal_residual,
        dual_residual,
        primal_objective,
        dual_objective,
        gap: (primal_objective - dual_objective).abs(),
        complementarity,
        min_eig_x,
        min_eig_s,
        psd_violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdpsolve::{solve, Constraint, Entry, SolveStatus};
    use nalgebra::{DMatrix, DVector};

    fn e(block: usize, i: usize, j: usize, v: f64) -> Entry {
        Entry { block, i, j, v }
    }

    fn spectraplex() -> SdpProblem {
        SdpProblem {
            blocks: vec![BlockKind::Psd(2)],
            objective: vec![e(0, 0, 0, 1.0), e(0, 1, 1, 2.0)],
            constraints: vec![Constraint { rhs: 1.0, entries: vec![e(0, 0, 0, 1.0), e(0, 1, 1, 1.0)] }],
        }
    }

    #[test]
    fn spectraplex_residuals_small() {
        let p = spectraplex();
        let s = solve(&p, &SolverOptions::default()).unwrap();
        let r = check_solution(&p, &s);
        assert!(r.primal_residual < 1e-7 && r.dual_residual < 1e-7 && r.gap < 1e-7, "{r:?}");
        assert!(!r.flagged());
    }

    #[test]
    fn scalar_residuals_tiny() {
        let p = SdpProblem {
            blocks: vec![BlockKind::Psd(1)],
            objective: vec![e(0, 0, 0, 1.0)],
            constraints: vec![Constraint { rhs: 1.0, entries: vec![e(0, 0, 0, 1.0)] }],
        };
        let mut s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        // exact solution X = 1, y = 1, S = 0
        s.x = vec![BlockValue::Dense(DMatrix::from_element(1, 1, 1.0))];
        s.s = vec![BlockValue::Dense(DMatrix::zeros(1, 1))];
        s.y = DVector::from_element(1, 1.0);
        let r = check_solution(&p, &s);
        assert!(r.primal_residual < 1e-12 && r.dual_residual < 1e-12 && r.gap < 1e-12);
    }

    #[test]
    fn corrupted_x_is_flagged() {
        let p = spectraplex();
        let mut s = solve(&p, &SolverOptions::default()).unwrap();
        s.x = vec![BlockValue::Dense(DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, -0.5]))];
        let r = check_solution(&p, &s);
        assert!(r.flagged());
        assert!(r.min_eig_x[0] < -0.4);
    }
}
