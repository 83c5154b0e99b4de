use super::grid::{grid_check_l2, GridReport};
use super::{
    classify, scaled_identity, solve_program, sos_on_set, AnalysisError, AnalysisOptions, Frame, InfeasibleReport, LpvJumpSystem, Outcome,
    Result, SolverSummary,
};
use crate::polyalg::{Poly, PolyMatrix};
use crate::sosprog::{lift, AffExpr, AffMatrix, SizeSummary, SosProgram};

/// Upper bound `gamma` on the stochastic L2 gain from `w` to `z`, with the
/// Lyapunov matrix proving it.
#[derive(Clone, Debug)]
pub struct L2Certificate {
    pub p: PolyMatrix,
    pub gamma: f64,
    pub degree: u32,
    pub multiplier_degree: u32,
    pub eps: f64,
    pub eps_strict: f64,
    pub constraints: Vec<Poly>,
    pub multipliers_p: Vec<PolyMatrix>,
    pub multipliers_gain: Vec<PolyMatrix>,
    pub grid: GridReport,
    pub solver: SolverSummary,
    pub size: SizeSummary,
}

/// Minimizes `gamma^2` subject to the gain inequality; `gamma^2` enters
/// linearly, so no bisection is needed. The input channel is ignored.
pub fn l2_gain_upper_bound(sys: &LpvJumpSystem, opts: &AnalysisOptions) -> Result<Outcome<L2Certificate>> {
    if sys.p() == 0 {
        return Err(AnalysisError::Invalid("the system has no disturbance input".into()));
    }
    let (prog, ns, fr, t) = build_gain(sys, opts)?;
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
    let t_val = rec.value(&t).max(0.0);
    let constraints = gs.iter().map(|g| Ok(g.affine_substitute(&fr.backward_rho())?)).collect::<Result<Vec<_>>>()?;
    let mut cert = L2Certificate {
        p: back("P")?,
        gamma: t_val.sqrt(),
        degree: opts.degree,
        multiplier_degree: dm,
        eps: opts.eps,
        eps_strict: opts.eps_strict,
        constraints,
        multipliers_p: mults("Gamma1")?,
        multipliers_gain: mults("Gamma2")?,
        grid: GridReport::default(),
        solver,
        size: compiled.size,
    };
    cert.grid = grid_check_l2(sys, &cert.p, cert.gamma, opts.eps, opts.grid_per_axis)?;
    if !cert.grid.passed(opts.grid_tol) {
        let w = cert.grid.worst().expect("nonempty report");
        return Err(AnalysisError::CertificateRejected { margin: w.min_margin, entry: w.name.clone() });
    }
    Ok(Outcome::Certified(cert))
}

/// The gain SOS program in normalized parameter coordinates.
pub fn gain_program(sys: &LpvJumpSystem, opts: &AnalysisOptions) -> Result<SosProgram> {
    if sys.p() == 0 {
        return Err(AnalysisError::Invalid("the system has no disturbance input".into()));
    }
    Ok(build_gain(sys, opts)?.0)
}

fn build_gain(sys: &LpvJumpSystem, opts: &AnalysisOptions) -> Result<(SosProgram, LpvJumpSystem, Frame, AffExpr)> {
    let (ns, fr) = sys.normalized()?;
    let (n, p) = (ns.n(), ns.p());
    let rv = ns.rho_vars().clone();
    let dm = opts.mult_degree();
    let gs = ns.domain.constraints().to_vec();

    let mut prog = SosProgram::new();
    let pd = prog.declare_poly_matrix("P", n, &rv, opts.degree)?;
    let t = prog.declare_scalar("gamma_sq")?;
    let pm = pd.matrix().clone();
    sos_on_set(&mut prog, pm.sub(&scaled_identity(&rv, n, opts.eps))?, &gs, dm, "Gamma1", "P - eps I")?;

    let ct = ns.c.transpose();
    let m11 = pm.mul_right(&ns.a)?.he()?.add(&ns.generator(&pm)?)?.add(&lift(&ct.matmul(&ns.c)?))?;
    let m12 = pm.mul_right(&ns.e)?.add(&lift(&ct.matmul(&ns.f)?))?;
    let t_eye = AffMatrix::from_fn(&rv, p, p, |i, j| {
        if i == j {
            Poly::constant(&rv, t.clone())
        } else {
            Poly::zero(&rv)
        }
    })?;
    let m22 = lift(&ns.f.transpose().matmul(&ns.f)?).sub(&t_eye)?;
    let m = AffMatrix::from_blocks(&[vec![m11, m12.clone()], vec![m12.transpose(), m22]])?;
    let gain = m.neg().sub(&scaled_identity(&rv, n + p, opts.eps_strict))?;
    sos_on_set(&mut prog, gain, &gs, dm, "Gamma2", "gain")?;
    prog.set_objective(t.clone());

    Ok((prog, ns, fr, t))
}
