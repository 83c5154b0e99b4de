use serde::{Deserialize, Serialize};

use super::grid::{grid_check_stability, GridReport};
use super::{
    classify, scaled_identity, solve_program, sos_on_set, AnalysisError, AnalysisOptions, Frame, InfeasibleReport, LpvJumpSystem, Outcome,
    Result, SolverSummary,
};
use crate::polyalg::{Poly, PolyMatrix};
use crate::sdpsolve::SolveStatus;
use crate::sosprog::{SizeSummary, SosProgram};

/// Mean-square exponential stability certificate `V(x, rho) = x' P(rho) x`.
#[derive(Clone, Debug)]
pub struct StabilityCertificate {
    pub p: PolyMatrix,
    pub alpha: f64,
    pub degree: u32,
    pub multiplier_degree: u32,
    pub eps: f64,
    pub eps_strict: f64,
    /// Set constraints `g_i >= 0` in the form the multipliers refer to.
    pub constraints: Vec<Poly>,
    /// Multipliers of `P - eps I`.
    pub multipliers_p: Vec<PolyMatrix>,
    /// Multipliers of the decay inequality.
    pub multipliers_decay: Vec<PolyMatrix>,
    pub grid: GridReport,
    pub solver: SolverSummary,
    pub size: SizeSummary,
}

/// Decides whether a degree-`opts.degree` certificate with decay rate `alpha` exists.
pub fn certify_stability(sys: &LpvJumpSystem, alpha: f64, opts: &AnalysisOptions) -> Result<Outcome<StabilityCertificate>> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(AnalysisError::Invalid(format!("decay rate must be finite and nonnegative, got {alpha}")));
    }
    let (prog, ns, fr) = build_stability(sys, alpha, opts)?;
    let dm = opts.mult_degree();
    let gs = ns.domain.constraints().to_vec();


    let (compiled, sol) = solve_program(&prog, opts)?;
    let solver = SolverSummary::from_solution(&sol);
    if !classify(&sol)? {
        return Ok(Outcome::Infeasible(InfeasibleReport {
            status: sol.status,
            degree: opts.degree,
            multiplier_degree: dm,
            size: compiled.size,
            solver,
        }));
    }
    let rec = compiled.recover(&sol)?;
    let back = |name: &str| fr.back(&rec.matrices[name]);
    let mults = |prefix: &str| -> Result<Vec<PolyMatrix>> { (1..=gs.len()).map(|i| back(&format!("{prefix}_{i}"))).collect() };
    let constraints = gs
        .iter()
        .map(|g| Ok(g.affine_substitute(&fr.backward_rho())?))
        .collect::<Result<Vec<_>>>()?;
    let mut cert = StabilityCertificate {
        p: back("P")?,
        alpha,
        degree: opts.degree,
        multiplier_degree: dm,
        eps: opts.eps,
        eps_strict: opts.eps_strict,
        constraints,
        multipliers_p: mults("Gamma1")?,
        multipliers_decay: mults("Gamma2")?,
        grid: GridReport::default(),
        solver,
        size: compiled.size,
    };
    cert.grid = grid_check_stability(sys, &cert.p, alpha, opts.eps, opts.grid_per_axis)?;
    if !cert.grid.passed(opts.grid_tol) {
        let w = cert.grid.worst().expect("nonempty report");
        return Err(AnalysisError::CertificateRejected { margin: w.min_margin, entry: w.name.clone() });
    }
    Ok(Outcome::Certified(cert))
}

/// The stability SOS program in normalized parameter coordinates.
pub fn stability_program(sys: &LpvJumpSystem, alpha: f64, opts: &AnalysisOptions) -> Result<SosProgram> {
    Ok(build_stability(sys, alpha, opts)?.0)
}

fn build_stability(sys: &LpvJumpSystem, alpha: f64, opts: &AnalysisOptions) -> Result<(SosProgram, LpvJumpSystem, Frame)> {
    let (ns, fr) = sys.normalized()?;
    let n = ns.n();
    let rv = ns.rho_vars().clone();
    let dm = opts.mult_degree();
    let gs = ns.domain.constraints().to_vec();
    let mut prog = SosProgram::new();
    let p = prog.declare_poly_matrix("P", n, &rv, opts.degree)?;
    let pm = p.matrix().clone();
    sos_on_set(&mut prog, pm.sub(&scaled_identity(&rv, n, opts.eps))?, &gs, dm, "Gamma1", "P - eps I")?;
    let lhs = pm.mul_right(&ns.a)?.he()?.add(&ns.generator(&pm)?)?.add(&pm.scale(2.0 * alpha))?;
    let decay = lhs.neg().sub(&scaled_identity(&rv, n, opts.eps_strict))?;
    sos_on_set(&mut prog, decay, &gs, dm, "Gamma2", "decay")?;
    Ok((prog, ns, fr))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BisectOptions {
    /// Stop when the bracket is at most this wide.
    pub tol: f64,
    /// Maximum number of bracket doublings.
    pub max_doublings: u32,
    /// Evaluate two interior points per round in parallel.
    pub parallel: bool,
}

impl Default for BisectOptions {
    fn default() -> Self {
        BisectOptions { tol: 1e-3, max_doublings: 20, parallel: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Feasible,
    Infeasible,
    /// Numerical failure or rejected certificate; treated as infeasible.
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BisectionStep {
    pub alpha: f64,
    pub verdict: Verdict,
    pub status: Option<SolveStatus>,
    pub detail: Option<String>,
}

#[derive(Clone, Debug)]
pub struct DecayRateResult {
    /// Largest certified decay rate.
    pub alpha: f64,
    /// Upper end of the final bracket (smallest rate that failed).
    pub alpha_upper: f64,
    pub certificate: StabilityCertificate,
    pub steps: Vec<BisectionStep>,
    pub warnings: Vec<String>,
}

struct Trial {
    step: BisectionStep,
    cert: Option<StabilityCertificate>,
    report: Option<InfeasibleReport>,
    error: Option<AnalysisError>,
}

fn trial(sys: &LpvJumpSystem, alpha: f64, opts: &AnalysisOptions) -> Result<Trial> {
    let step = |verdict, status, detail| BisectionStep { alpha, verdict, status, detail };
    Ok(match certify_stability(sys, alpha, opts) {
        Ok(Outcome::Certified(c)) => {
            Trial { step: step(Verdict::Feasible, Some(c.solver.status), None), cert: Some(c), report: None, error: None }
        }
        Ok(Outcome::Infeasible(r)) => {
            Trial { step: step(Verdict::Infeasible, Some(r.status), None), cert: None, report: Some(r), error: None }
        }
        Err(e @ AnalysisError::Numerical { .. }) | Err(e @ AnalysisError::CertificateRejected { .. }) => {
            let status = match &e {
                AnalysisError::Numerical { status, .. } => Some(*status),
                _ => None,
            };
            Trial { step: step(Verdict::Failed, status, Some(e.to_string())), cert: None, report: None, error: Some(e) }
        }
        Err(e) => return Err(e),
    })
}

/// Largest decay rate certifiable at the given degrees, by bracketing and
/// bisection on `alpha`.
pub fn max_decay_rate(sys: &LpvJumpSystem, opts: &AnalysisOptions, bisect: &BisectOptions) -> Result<Outcome<DecayRateResult>> {
    let mut steps = Vec::new();
    let mut warnings = Vec::new();

    let t0 = trial(sys, 0.0, opts)?;
    steps.push(t0.step);
    if let Some(r) = t0.report {
        return Ok(Outcome::Infeasible(r));
    }
    if let Some(e) = t0.error {
        return Err(e);
    }
    let mut best = t0.cert.expect("feasible trial carries a certificate");

    let mut lo = 0.0;
    let anorm = a_inf_norm_bound(sys)?;
    let mut hi = (2.0 * anorm).max(1.0);
    let mut doublings = 0;
    loop {
        let t = trial(sys, hi, opts)?;
        steps.push(t.step);
        let Some(c) = t.cert else { break };
        lo = hi;
        best = c;
        if doublings == bisect.max_doublings {
            warnings.push(format!("decay rate exceeds the bracket after {doublings} doublings; reporting {lo}"));
            return Ok(Outcome::Certified(DecayRateResult { alpha: lo, alpha_upper: f64::INFINITY, certificate: best, steps, warnings }));
        }
        hi *= 2.0;
        doublings += 1;
    }

    while hi - lo > bisect.tol {
        let results: Vec<Trial> = if bisect.parallel {
            let a1 = lo + (hi - lo) / 3.0;
            let a2 = lo + 2.0 * (hi - lo) / 3.0;
            let (r1, r2) = rayon::join(|| trial(sys, a1, opts), || trial(sys, a2, opts));
            vec![r1?, r2?]
        } else {
            vec![trial(sys, 0.5 * (lo + hi), opts)?]
        };
        let mut new_lo = lo;
        let mut new_hi = hi;
        let mut cand = None;
        // the lowest failure bounds the bracket; feasible points above it are noise
        for Trial { step: s, .. } in &results {
            if s.verdict != Verdict::Feasible && s.alpha < new_hi {
                new_hi = s.alpha;
            }
        }
        for Trial { step: s, cert: c, .. } in results.iter() {
            if s.verdict == Verdict::Feasible {
                if s.alpha < new_hi {
                    if s.alpha > new_lo {
                        new_lo = s.alpha;
                        cand = c.clone();
                    }
                } else {
                    warnings.push(format!(
                        "non-monotone verdicts: feasible at {:.6} above a failure at {:.6}; keeping the lower value",
                        s.alpha, new_hi
                    ));
                }
            }
        }
        steps.extend(results.into_iter().map(|t| t.step));
        if let Some(c) = cand {
            best = c;
        }
        lo = new_lo;
        hi = new_hi;
    }
    for s in &steps {
        if s.verdict == Verdict::Failed {
            warnings.push(format!(
                "solve at alpha = {:.6} did not finish cleanly ({}); counted as not certified",
                s.alpha,
                s.detail.as_deref().unwrap_or("unknown")
            ));
        }
    }
    Ok(Outcome::Certified(DecayRateResult { alpha: lo, alpha_upper: hi, certificate: best, steps, warnings }))
}

/// Maximum of `||A(rho)||_inf` over the parameter grid.
fn a_inf_norm_bound(sys: &LpvJumpSystem) -> Result<f64> {
    let per = super::grid::grid_per_axis(sys.num_params(), false);
    let mut best = 0.0f64;
    for pt in sys.rho_grid(per) {
        let a = sys.a.eval(&pt)?;
        let norm = a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        best = best.max(norm);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::{BoxDomain, VarSet};
    use crate::sosprog::{BoxPolicy, SemialgebraicSet};

    fn scalar(a: f64, kernel: f64) -> LpvJumpSystem {
        let v = VarSet::new(["rho"]).unwrap();
        let j = VarSet::new(["rho", "theta"]).unwrap();
        let dom = SemialgebraicSet::from_box(&BoxDomain::new([("rho", 0.0, 2.0)]).unwrap(), BoxPolicy::Product).unwrap();
        LpvJumpSystem::autonomous(PolyMatrix::scaled_identity(&v, 1, a), dom, Poly::constant(&j, kernel)).unwrap()
    }

    #[test]
    fn scalar_decay_feasible_below_one() {
        let sys = scalar(-1.0, 0.3);
        let c = certify_stability(&sys, 0.99, &AnalysisOptions::default()).unwrap().certified().unwrap();
        assert!(c.grid.passed(1e-6));
    }

    #[test]
    fn scalar_decay_infeasible_above_one() {
        let sys = scalar(-1.0, 0.3);
        assert!(!certify_stability(&sys, 1.05, &AnalysisOptions::default()).unwrap().is_certified());
    }

    #[test]
    fn scalar_max_rate_is_one() {
        let sys = scalar(-1.0, 2.0);
        let b = BisectOptions::default();
        let r = max_decay_rate(&sys, &AnalysisOptions::default(), &b).unwrap().certified().unwrap();
        assert!((r.alpha - 1.0).abs() <= 2.0 * b.tol, "alpha = {}", r.alpha);
    }

    #[test]
    fn unstable_scalar_is_infeasible_at_zero() {
        let sys = scalar(0.5, 1.0);
        assert!(!max_decay_rate(&sys, &AnalysisOptions::default(), &BisectOptions::default()).unwrap().is_certified());
    }

    #[test]
    fn negative_alpha_rejected() {
        assert!(matches!(certify_stability(&scalar(-1.0, 1.0), -0.1, &AnalysisOptions::default()), Err(AnalysisError::Invalid(_))));
    }
}
