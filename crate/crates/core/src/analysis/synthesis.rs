use serde::{Deserialize, Serialize};

use super::grid::{grid_check_synthesis, GridReport};
use super::{
    classify, scaled_identity, solve_program, sos_on_set, AnalysisError, AnalysisOptions, Frame, InfeasibleReport, LpvJumpSystem, Outcome,
    RationalMatrix, Result, SolverSummary,
};
use crate::polyalg::{Coeff, Poly, PolyMatrix};
use crate::sosprog::{AffExpr, AffMatrix, SizeSummary, SosProgram};

/// How the square root of the kernel is kept polynomial in the synthesis
/// matrix. With `mu` the measure of the parameter box, the coupling block is
/// `off * Q(rho)` and the last diagonal block `-last * Q(theta)`.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelEncoding {
    /// `lambda = lambda0`: `off = mu sqrt(lambda0)`, `last = mu`.
    Constant,
    /// `lambda = l^2` with `l` over `(rho, theta)`: `off = mu l`, `last = mu`.
    Square(Poly),
    /// `lambda > 0`: `off = mu lambda`, `last = mu lambda`.
    Scaled,
}

impl KernelEncoding {
    pub fn name(&self) -> &'static str {
        match self {
            KernelEncoding::Constant => "constant",
            KernelEncoding::Square(_) => "square",
            KernelEncoding::Scaled => "scaled",
        }
    }

    /// `Constant` for a constant kernel, otherwise `Scaled`.
    pub fn default_for(sys: &LpvJumpSystem) -> Self {
        if sys.kernel.degree().unwrap_or(0) == 0 {
            KernelEncoding::Constant
        } else {
            KernelEncoding::Scaled
        }
    }

    /// `(off, last)` factors over the joint variables of `sys`.
    pub(crate) fn factors(&self, sys: &LpvJumpSystem) -> Result<(Poly, Poly)> {
        let mu = sys.measure();
        let jv = sys.joint_vars();
        let k = &sys.kernel;
        match self {
            KernelEncoding::Constant => {
                if k.degree().unwrap_or(0) != 0 {
                    return Err(AnalysisError::Encoding("the constant encoding needs a constant kernel".into()));
                }
                let l0 = k.coeff(&vec![0; jv.len()]).copied().unwrap_or(0.0);
                Ok((Poly::constant(jv, mu * l0.sqrt()), Poly::constant(jv, mu)))
            }
            KernelEncoding::Square(l) => {
                let l = l.embed(jv).map_err(|_| AnalysisError::Encoding(format!("root kernel over {:?}", l.vars())))?;
                let tol = 1e-9 * k.max_abs_coeff().max(1.0);
                if !l.mul(&l)?.approx_eq(k, tol) {
                    return Err(AnalysisError::Encoding("the supplied root does not square to the kernel".into()));
                }
                Ok((l.scale(mu), Poly::constant(jv, mu)))
            }
            KernelEncoding::Scaled => {
                let jb = sys.joint_box()?;
                let per = match jb.dim() {
                    2 => 61,
                    4 => 9,
                    _ => 3,
                };
                for pt in sys.joint_grid(per) {
                    let v = k.eval(&pt)?;
                    if v <= 0.0 {
                        return Err(AnalysisError::Encoding(format!("kernel not strictly positive: lambda = {v:e} at {pt:?}")));
                    }
                }
                Ok((k.scale(mu), k.scale(mu)))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSpec {
    Fixed(f64),
    Minimize,
}

#[derive(Clone, Debug)]
pub struct SynthesisOptions {
    pub gamma: GammaSpec,
    /// Degree of `U`; defaults to the degree of `Q`.
    pub degree_u: Option<u32>,
    /// Degree of the slack `Z` in `(rho, theta)`; defaults to the degree of `Q`.
    pub degree_z: Option<u32>,
    /// Defaults to [`KernelEncoding::default_for`].
    pub encoding: Option<KernelEncoding>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions { gamma: GammaSpec::Minimize, degree_u: None, degree_z: None, encoding: None }
    }
}

#[derive(Clone, Debug)]
pub struct SynthesisResult {
    pub q: PolyMatrix,
    pub u: PolyMatrix,
    pub z: PolyMatrix,
    pub gamma: f64,
    pub k: RationalMatrix,
    pub encoding: KernelEncoding,
    /// Which matrix the last diagonal block was built from.
    pub last_block_reading: &'static str,
    pub degree_q: u32,
    pub degree_u: u32,
    pub degree_z: u32,
    pub multiplier_degree: u32,
    pub grid: GridReport,
    pub solver: SolverSummary,
    pub size: SizeSummary,
}

/// Synthesis matrix over `(rho, theta)` for `sys`, in whatever coordinates
/// `sys` uses. `t` is `gamma^2`.
pub(crate) fn synthesis_matrix<C: Coeff>(
    sys: &LpvJumpSystem,
    q: &PolyMatrix<C>,
    u: &PolyMatrix<C>,
    z: &PolyMatrix<C>,
    t: C,
    enc: &KernelEncoding,
) -> Result<PolyMatrix<C>> {
    let jv = sys.joint_vars().clone();
    let (n, p, nq) = (sys.n(), sys.p(), sys.q());
    let real = |m: &PolyMatrix| -> Result<PolyMatrix> { sys.at_rho(m) };
    let cast = |m: PolyMatrix| -> PolyMatrix<C> { m.map_coeffs(|&x| C::from_f64(x)) };
    let (off, last) = enc.factors(sys)?;
    let jq = sys.at_rho(q)?;
    let ju = sys.at_rho(u)?;
    let lbar = sys.intensity()?.embed(&jv)?;

    let m11 = jq.mul_left(&real(&sys.a)?)?.add(&ju.mul_left(&real(&sys.b)?)?)?.he()?.sub(&jq.mul_poly(&lbar)?)?.add(z)?;
    let m12 = cast(real(&sys.e)?);
    let m13 = jq.mul_left(&real(&sys.c)?)?.add(&ju.mul_left(&real(&sys.d)?)?)?.transpose();
    let m14 = jq.mul_poly(&off)?;
    let m22 = PolyMatrix::from_fn(&jv, p, p, |i, j| if i == j { Poly::constant(&jv, t.scaled(-1.0)) } else { Poly::zero(&jv) })?;
    let m23 = cast(real(&sys.f)?.transpose());
    let m33 = PolyMatrix::scaled_identity(&jv, nq, -1.0);
    let m44 = sys.at_theta(q)?.mul_poly(&last)?.neg();
    let zero = |r, c| PolyMatrix::<C>::zeros(&jv, r, c);
    Ok(PolyMatrix::from_blocks(&[
        vec![m11, m12.clone(), m13.clone(), m14.clone()],
        vec![m12.transpose(), m22, m23.clone(), zero(p, n)],
        vec![m13.transpose(), m23.transpose(), m33, zero(nq, n)],
        vec![m14.transpose(), zero(n, p), zero(n, nq), m44],
    ])?)
}

/// Gain-scheduled state feedback `u = K(rho) x` with closed-loop gain below
/// `gamma` (fixed or minimized).
pub fn synthesize_sf(sys: &LpvJumpSystem, sopts: &SynthesisOptions, opts: &AnalysisOptions) -> Result<Outcome<SynthesisResult>> {
    check_synthesis_inputs(sys, sopts)?;
    let b = build_synthesis(sys, sopts, opts)?;
    let (prog, fr, t, encoding) = (b.prog, b.frame, b.t, b.encoding);
    let (dq, du, dz, dm) = (opts.degree, b.du, b.dz, opts.mult_degree());
    let (compiled, sol) = solve_program(&prog, opts)?;
    let solver = SolverSummary::from_solution(&sol);
    if !classify(&sol)? {
        return Ok(Outcome::Infeasible(InfeasibleReport {
            status: sol.status,
            degree: dq,
            multiplier_degree: dm,
            size: compiled.size,
            solver,
        }));
    }
    let rec = compiled.recover(&sol)?;
    let q = fr.back(&rec.matrices["Q"])?;
    let u = fr.back(&rec.matrices["U"])?;
    let z = fr.back_joint(&rec.matrices["Z"])?;
    let gamma = rec.value(&t).max(0.0).sqrt();
    let k = extract_controller(&q, &u)?;
    let mut res = SynthesisResult {
        q,
        u,
        z,
        gamma,
        k,
        encoding,
        last_block_reading: "Q(theta)",
        degree_q: dq,
        degree_u: du,
        degree_z: dz,
        multiplier_degree: dm,
        grid: GridReport::default(),
        solver,
        size: compiled.size,
    };
    res.grid = grid_check_synthesis(sys, &res, opts.eps, opts.grid_per_axis)?;
    if !res.grid.passed(opts.grid_tol) {
        let w = res.grid.worst().expect("nonempty report");
        return Err(AnalysisError::CertificateRejected { margin: w.min_margin, entry: w.name.clone() });
    }
    Ok(Outcome::Certified(res))
}

struct SynthesisBuild {
    prog: SosProgram,
    frame: Frame,
    t: AffExpr,
    encoding: KernelEncoding,
    du: u32,
    dz: u32,
}

/// The synthesis SOS program in normalized parameter coordinates.
pub fn synthesis_program(sys: &LpvJumpSystem, sopts: &SynthesisOptions, opts: &AnalysisOptions) -> Result<SosProgram> {
    check_synthesis_inputs(sys, sopts)?;
    Ok(build_synthesis(sys, sopts, opts)?.prog)
}

fn check_synthesis_inputs(sys: &LpvJumpSystem, sopts: &SynthesisOptions) -> Result<()> {
    if sys.m() == 0 {
        return Err(AnalysisError::Invalid("the system has no control input".into()));
    }
    if let GammaSpec::Fixed(g) = sopts.gamma {
        if !(g > 0.0 && g.is_finite()) {
            return Err(AnalysisError::Invalid(format!("gamma must be positive, got {g}")));
        }
    }
    Ok(())
}

fn build_synthesis(sys: &LpvJumpSystem, sopts: &SynthesisOptions, opts: &AnalysisOptions) -> Result<SynthesisBuild> {
    let encoding = sopts.encoding.clone().unwrap_or_else(|| KernelEncoding::default_for(sys));
    // validate on the original system before normalizing
    encoding.factors(sys)?;
    let (ns, fr) = sys.normalized()?;
    let n_encoding = match &encoding {
        KernelEncoding::Square(l) => {
            let l = l.embed(sys.joint_vars()).map_err(|_| AnalysisError::Encoding(format!("root kernel over {:?}", l.vars())))?;
            KernelEncoding::Square(l.affine_substitute(&fr.forward_joint())?.scale(fr.jacobian().sqrt()))
        }
        e => e.clone(),
    };

    let (n, m) = (ns.n(), ns.m());
    let rv = ns.rho_vars().clone();
    let jv = ns.joint_vars().clone();
    let dq = opts.degree;
    let du = sopts.degree_u.unwrap_or(dq);
    let dz = sopts.degree_z.unwrap_or(dq);
    let dm = opts.mult_degree();

    let mut prog = SosProgram::new();
    let qd = prog.declare_poly_matrix("Q", n, &rv, dq)?;
    let ud = prog.declare_general_matrix("U", m, n, &rv, du)?;
    let zd = prog.declare_poly_matrix("Z", n, &jv, dz)?;
    let t = match sopts.gamma {
        GammaSpec::Fixed(g) => AffExpr::constant(g * g),
        GammaSpec::Minimize => prog.declare_scalar("gamma_sq")?,
    };
    let (qm, um, zm) = (qd.matrix().clone(), ud.matrix().clone(), zd.matrix().clone());
    sos_on_set(&mut prog, qm.sub(&scaled_identity(&rv, n, opts.eps))?, ns.domain.constraints(), dm, "Gamma1", "Q - eps I")?;
    let mat: AffMatrix = synthesis_matrix(&ns, &qm, &um, &zm, t.clone(), &n_encoding)?;
    let size = mat.rows();
    let neg = mat.neg().sub(&scaled_identity(&jv, size, opts.eps_strict))?;
    sos_on_set(&mut prog, neg, &ns.joint_constraints()?, dm, "Gamma2", "synthesis")?;
    let theta: Vec<&str> = ns.theta_names().iter().map(String::as_str).collect();
    prog.add_integral_zero_constraint(&zm, &theta, &ns.theta_box()?, "slack integral")?;
    if sopts.gamma == GammaSpec::Minimize {
        prog.set_objective(t.clone());
    }

    Ok(SynthesisBuild { prog, frame: fr, t, encoding, du, dz })
}

/// `K = U adj(Q) / det(Q)`, so that `K Q = U`.
pub fn extract_controller(q: &PolyMatrix, u: &PolyMatrix) -> Result<RationalMatrix> {
    if !q.is_square() || u.cols() != q.rows() {
        return Err(AnalysisError::Invalid(format!("Q is {}x{}, U is {}x{}", q.rows(), q.cols(), u.rows(), u.cols())));
    }
    if q.rows() > 6 {
        return Err(AnalysisError::Invalid("symbolic controller extraction supports n <= 6".into()));
    }
    let den = q.det()?;
    let num = u.matmul(&q.adjugate()?)?;
    Ok(RationalMatrix { num, den })
}
