use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synthesis::{synthesis_matrix, SynthesisResult};
use super::{AnalysisError, LpvJumpSystem, Result};
use crate::polyalg::{BoxDomain, PolyMatrix};

/// Minimum eigenvalue margin of one matrix family over the grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarginEntry {
    pub name: String,
    pub nodes: usize,
    pub min_margin: f64,
    pub worst_point: Vec<f64>,
    /// Reported but not part of the pass/fail decision.
    pub informational: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GridReport {
    pub per_axis: usize,
    pub entries: Vec<MarginEntry>,
}

impl GridReport {
    /// Worst non-informational entry.
    pub fn worst(&self) -> Option<&MarginEntry> {
        self.entries.iter().filter(|e| !e.informational).min_by(|a, b| a.min_margin.total_cmp(&b.min_margin))
    }

    pub fn min_margin(&self) -> f64 {
        self.worst().map(|e| e.min_margin).unwrap_or(f64::INFINITY)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.min_margin() >= -tol
    }

    pub fn entry(&self, name: &str) -> Option<&MarginEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Default grid nodes per axis for `nparams` parameters, on `P` or on `P x P`.
pub fn grid_per_axis(nparams: usize, joint: bool) -> usize {
    match (nparams, joint) {
        (1, _) => 201,
        (2, false) => 41,
        (2, true) => 15,
        (3, false) => 15,
        (3, true) => 5,
        (_, false) => 9,
        (_, true) => 3,
    }
}

pub(crate) fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let s = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(s).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

pub(crate) fn scan(name: &str, points: &[Vec<f64>], informational: bool, f: impl Fn(&[f64]) -> Result<f64> + Sync) -> Result<MarginEntry> {
    let vals: Vec<(f64, usize)> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| f(p).map(|v| (v, i)))
        .collect::<Result<Vec<_>>>()?;
    let (min_margin, idx) = vals.into_iter().fold((f64::INFINITY, 0), |acc, v| if v.0 < acc.0 { v } else { acc });
    Ok(MarginEntry {
        name: name.to_string(),
        nodes: points.len(),
        min_margin,
        worst_point: points.get(idx).cloned().unwrap_or_default(),
        informational,
    })
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Golub-Welsch).
pub fn gauss_legendre(k: usize) -> Vec<(f64, f64)> {
    let mut j = DMatrix::zeros(k, k);
    for i in 1..k {
        let b = i as f64 / ((4 * i * i - 1) as f64).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut out: Vec<(f64, f64)> =
        (0..k).map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2))).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Tensor Gauss-Legendre rule on a box.
pub(crate) fn box_quadrature(b: &BoxDomain, k: usize) -> Vec<(Vec<f64>, f64)> {
    let gl = gauss_legendre(k);
    let mut out = vec![(Vec::new(), 1.0)];
    for &(lo, hi) in b.intervals() {
        let (c, s) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        out = out
            .into_iter()
            .flat_map(|(p, w)| {
                gl.iter().map(move |&(x, wx)| {
                    let mut q = p.clone();
                    q.push(c + s * x);
                    (q, w * s * wx)
                })
            })
            .collect();
    }
    out
}

fn per_axis(sys: &LpvJumpSystem, requested: Option<usize>, joint: bool) -> usize {
    requested.unwrap_or_else(|| grid_per_axis(sys.num_params(), joint))
}

fn posdef_margin(name: &str, sys: &LpvJumpSystem, m: &PolyMatrix, eps: f64, per: usize) -> Result<MarginEntry> {
    scan(name, &sys.rho_grid(per), false, |pt| Ok(min_eig(&m.eval(pt)?) - eps))
}

/// Margins of `P - eps I` and of `-(He[P A] + generator + 2 alpha P)` on the parameter grid.
pub fn grid_check_stability(sys: &LpvJumpSystem, p: &PolyMatrix, alpha: f64, eps: f64, requested: Option<usize>) -> Result<GridReport> {
    let per = per_axis(sys, requested, false);
    let lhs = p.matmul(&sys.a)?.he()?.add(&sys.generator(p)?)?.add(&p.scale(2.0 * alpha))?;
    let entries = vec![
        posdef_margin("P - eps I", sys, p, eps, per)?,
        scan("decay inequality", &sys.rho_grid(per), false, |pt| Ok(min_eig(&-lhs.eval(pt)?)))?,
    ];
    Ok(GridReport { per_axis: per, entries })
}

/// The L2-gain block matrix at a given `t = gamma^2`.
pub(crate) fn l2_matrix(sys: &LpvJumpSystem, p: &PolyMatrix, t: f64) -> Result<PolyMatrix> {
    let v = sys.rho_vars();
    let ct = sys.c.transpose();
    let m11 = p.matmul(&sys.a)?.he()?.add(&sys.generator(p)?)?.add(&ct.matmul(&sys.c)?)?;
    let m12 = p.matmul(&sys.e)?.add(&ct.matmul(&sys.f)?)?;
    let m22 = sys.f.transpose().matmul(&sys.f)?.sub(&PolyMatrix::scaled_identity(v, sys.p(), t))?;
    Ok(PolyMatrix::from_blocks(&[vec![m11, m12.clone()], vec![m12.transpose(), m22]])?)
}

/// Margins of `P - eps I` and of the negated gain inequality.
pub fn grid_check_l2(sys: &LpvJumpSystem, p: &PolyMatrix, gamma: f64, eps: f64, requested: Option<usize>) -> Result<GridReport> {
    let per = per_axis(sys, requested, false);
    let m = l2_matrix(sys, p, gamma * gamma)?;
    let entries = vec![
        posdef_margin("P - eps I", sys, p, eps, per)?,
        scan("gain inequality", &sys.rho_grid(per), false, |pt| Ok(min_eig(&-m.eval(pt)?)))?,
    ];
    Ok(GridReport { per_axis: per, entries })
}

/// Checks a synthesis result on the original system: positivity of `Q`,
/// the negated synthesis matrix over `P x P`, the slack integral, the
/// controller identity `K Q = U`, and (informational) the closed-loop gain
/// inequality with `P = Q^-1`.
pub fn grid_check_synthesis(sys: &LpvJumpSystem, res: &SynthesisResult, eps: f64, requested: Option<usize>) -> Result<GridReport> {
    let per_rho = per_axis(sys, requested, false);
    let per_joint = per_axis(sys, requested, true);
    let rho_pts = sys.rho_grid(per_rho);
    let mut entries = vec![posdef_margin("Q - eps I", sys, &res.q, eps, per_rho)?];

    let m = synthesis_matrix(sys, &res.q, &res.u, &res.z, res.gamma * res.gamma, &res.encoding)?;
    entries.push(scan("synthesis inequality", &sys.joint_grid(per_joint), false, |pt| Ok(min_eig(&-m.eval(pt)?)))?);

    let theta: Vec<&str> = sys.theta_names().iter().map(String::as_str).collect();
    let iz = res.z.integrate_box(&theta, &sys.theta_box()?)?;
    let zscale = res.z.max_abs_coeff().max(1.0);
    entries.push(MarginEntry {
        name: "slack integral".into(),
        nodes: 0,
        min_margin: -iz.max_abs_coeff() / zscale,
        worst_point: Vec::new(),
        informational: false,
    });

    for pt in &rho_pts {
        let d = res.k.den.eval(pt)?;
        if d.abs() <= 1e-10 {
            return Err(AnalysisError::ControllerSingular { node: pt.clone(), det: d });
        }
    }
    let kq_scale = res.u.max_abs_coeff().max(1.0);
    entries.push(scan("controller identity", &rho_pts, false, |pt| {
        let k = res.k.eval(pt)?;
        let r = k * res.q.eval(pt)? - res.u.eval(pt)?;
        Ok(-r.amax() / kq_scale)
    })?);
    let sym = res.k.num.matmul(&res.q)?.sub(&res.u.mul_poly(&res.k.den)?)?;
    entries.push(MarginEntry {
        name: "controller identity (symbolic)".into(),
        nodes: 0,
        min_margin: -sym.max_abs_coeff() / (kq_scale * res.k.den.max_abs_coeff().max(1.0)),
        worst_point: Vec::new(),
        informational: false,
    });

    entries.push(closed_loop_margin(sys, res, &rho_pts)?);
    Ok(GridReport { per_axis: per_rho, entries })
}

/// `-lambda_max` of the closed-loop gain inequality with `P = Q^-1`; the
/// generator integral is evaluated by quadrature because `P` is rational.
fn closed_loop_margin(sys: &LpvJumpSystem, res: &SynthesisResult, rho_pts: &[Vec<f64>]) -> Result<MarginEntry> {
    let deg = res.q.degree().unwrap_or(0) as usize + sys.kernel.degree().unwrap_or(0) as usize;
    let quad = box_quadrature(&sys.theta_box()?, (deg + 2).clamp(8, 24));
    let t = res.gamma * res.gamma;
    let pinv = |pt: &[f64]| -> Result<DMatrix<f64>> {
        res.q.eval(pt)?.try_inverse().ok_or_else(|| AnalysisError::ControllerSingular { node: pt.to_vec(), det: 0.0 })
    };
    let p_nodes: Vec<DMatrix<f64>> = quad.iter().map(|(th, _)| pinv(th)).collect::<Result<_>>()?;
    scan("closed-loop gain inequality", rho_pts, true, |pt| {
        let p = pinv(pt)?;
        let k = res.k.eval(pt)?;
        let acl = sys.a.eval(pt)? + sys.b.eval(pt)? * &k;
        let ccl = sys.c.eval(pt)? + sys.d.eval(pt)? * &k;
        let (e, f) = (sys.e.eval(pt)?, sys.f.eval(pt)?);
        let mut gen = DMatrix::zeros(sys.n(), sys.n());
        for ((th, w), pth) in quad.iter().zip(&p_nodes) {
            if !sys.domain.contains(th) {
                continue;
            }
            gen += (pth - &p) * (w * sys.kernel_at(pt, th)?);
        }
        let pa = &p * &acl;
        let m11 = &pa + pa.transpose() + gen + ccl.transpose() * &ccl;
        let m12 = &p * &e + ccl.transpose() * &f;
        let m22 = f.transpose() * &f - DMatrix::identity(sys.p(), sys.p()) * t;
        let (n, q) = (sys.n(), sys.p());
        let mut m = DMatrix::zeros(n + q, n + q);
        m.view_mut((0, 0), (n, n)).copy_from(&m11);
        m.view_mut((0, n), (n, q)).copy_from(&m12);
        m.view_mut((n, 0), (q, n)).copy_from(&m12.transpose());
        m.view_mut((n, n), (q, q)).copy_from(&m22);
        Ok(min_eig(&-m))
    })
}
