//! Stability, L2-gain and state-feedback synthesis for LPV systems with
//! Poisson-jumping parameters.
//!
//! Every program is set up in normalized coordinates: each parameter
//! interval of the enclosing box is mapped affinely onto `[-1, 1]` and the
//! kernel is multiplied by the Jacobian so that intensities are unchanged.
//! Certificates are mapped back before they are returned, and all a
//! posteriori grid checks run in the original coordinates.

mod gain;
mod grid;
mod stability;
mod synthesis;

pub use gain::{gain_program, l2_gain_upper_bound, L2Certificate};
pub use grid::{gauss_legendre, grid_check_l2, grid_check_stability, grid_check_synthesis, grid_per_axis, GridReport, MarginEntry};
pub use stability::{certify_stability, max_decay_rate, stability_program, BisectOptions, BisectionStep, DecayRateResult, StabilityCertificate};
pub use synthesis::{extract_controller, synthesis_program, synthesize_sf, GammaSpec, KernelEncoding, SynthesisOptions, SynthesisResult};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polyalg::{BoxDomain, Coeff, Poly, PolyError, PolyMatrix, VarSet};
use crate::sdpsolve::{self, SdpSolution, SolveStatus, SolverOptions};
use crate::sosprog::{
    lift, AffMatrix, BoxPolicy, CompileOptions, CompiledProgram, DecisionPolyMatrix, SemialgebraicSet, SizeSummary, SosError,
    SosProgram,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Sdp(#[from] sdpsolve::SdpError),
    #[error("invalid system: {0}")]
    Invalid(String),
    #[error("variable `{0}` occurs both as current and as next parameter")]
    Collision(String),
    #[error("jump kernel is negative ({value:e}) at {point:?}")]
    NegativeKernel { point: Vec<f64>, value: f64 },
    #[error("kernel encoding: {0}")]
    Encoding(String),
    #[error("SDP solver stopped with {status:?}: {detail}")]
    Numerical { status: SolveStatus, detail: String },
    #[error("solver reported success but the grid check failed (worst margin {margin:e} in `{entry}`)")]
    CertificateRejected { margin: f64, entry: String },
    #[error("controller is singular: det Q = {det:e} at {node:?}")]
    ControllerSingular { node: Vec<f64>, det: f64 },
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// Names of the current (`rho`) and next (`theta`) parameter variables.
pub fn param_names(n: usize) -> (Vec<String>, Vec<String>) {
    if n == 1 {
        (vec!["rho".into()], vec!["theta".into()])
    } else {
        ((1..=n).map(|k| format!("rho{k}")).collect(), (1..=n).map(|k| format!("theta{k}")).collect())
    }
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

/// `x' = A x + B u + E w`, `z = C x + D u + F w`, parameters jumping with
/// kernel `lambda(rho, theta)` on the set `P`.
#[derive(Clone, Debug)]
pub struct LpvJumpSystem {
    pub a: PolyMatrix,
    pub b: PolyMatrix,
    pub c: PolyMatrix,
    pub d: PolyMatrix,
    pub e: PolyMatrix,
    pub f: PolyMatrix,
    pub domain: SemialgebraicSet,
    pub kernel: Poly,
    rho: Vec<String>,
    theta: Vec<String>,
    joint: VarSet,
}

impl LpvJumpSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: PolyMatrix,
        b: PolyMatrix,
        c: PolyMatrix,
        d: PolyMatrix,
        e: PolyMatrix,
        f: PolyMatrix,
        domain: SemialgebraicSet,
        kernel: Poly,
    ) -> Result<Self> {
        let rho: Vec<String> = domain.vars().names().to_vec();
        let (_, theta) = param_names(rho.len());
        for t in &theta {
            if rho.contains(t) {
                return Err(AnalysisError::Collision(t.clone()));
            }
        }
        let rvars = domain.vars().clone();
        let joint = rvars.union(&VarSet::new(theta.iter().cloned())?);
        let n = a.rows();
        if !a.is_square() {
            return Err(AnalysisError::Invalid(format!("A is {}x{}", a.rows(), a.cols())));
        }
        let (m, p, q) = (b.cols(), e.cols(), c.rows());
        let shapes = [
            ("B", &b, n, m),
            ("C", &c, q, n),
            ("D", &d, q, m),
            ("E", &e, n, p),
            ("F", &f, q, p),
        ];
        for (name, mat, r, k) in shapes {
            if mat.rows() != r || mat.cols() != k {
                return Err(AnalysisError::Invalid(format!("{name} is {}x{}, expected {r}x{k}", mat.rows(), mat.cols())));
            }
        }
        for (name, mat) in [("A", &a), ("B", &b), ("C", &c), ("D", &d), ("E", &e), ("F", &f)] {
            if mat.vars() != &rvars {
                return Err(AnalysisError::Invalid(format!("{name} is over {:?}, expected {:?}", mat.vars(), rvars)));
            }
        }
        let kernel = kernel.embed(&joint).map_err(|_| {
            AnalysisError::Invalid(format!("kernel variables {:?} not within {:?}", kernel.vars(), joint))
        })?;
        let sys = LpvJumpSystem { a, b, c, d, e, f, domain, kernel, rho, theta, joint };
        sys.check_kernel()?;
        Ok(sys)
    }

    /// System with only the `A` matrix (no inputs or outputs).
    pub fn autonomous(a: PolyMatrix, domain: SemialgebraicSet, kernel: Poly) -> Result<Self> {
        let v = domain.vars().clone();
        let n = a.rows();
        Self::new(
            a,
            PolyMatrix::zeros(&v, n, 0),
            PolyMatrix::zeros(&v, 0, n),
            PolyMatrix::zeros(&v, 0, 0),
            PolyMatrix::zeros(&v, n, 0),
            PolyMatrix::zeros(&v, 0, 0),
            domain,
            kernel,
        )
    }

    fn check_kernel(&self) -> Result<()> {
        let jb = self.joint_box()?;
        let per_axis = match jb.dim() {
            2 => 61,
            4 => 9,
            6 => 5,
            _ => 3,
        };
        for pt in jb.grid(per_axis) {
            let v = self.kernel.eval(&pt)?;
            if v < 0.0 {
                return Err(AnalysisError::NegativeKernel { point: pt, value: v });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }
    pub fn m(&self) -> usize {
        self.b.cols()
    }
    pub fn p(&self) -> usize {
        self.e.cols()
    }
    pub fn q(&self) -> usize {
        self.c.rows()
    }
    pub fn num_params(&self) -> usize {
        self.rho.len()
    }
    pub fn rho_names(&self) -> &[String] {
        &self.rho
    }
    pub fn theta_names(&self) -> &[String] {
        &self.theta
    }
    pub fn rho_vars(&self) -> &VarSet {
        self.domain.vars()
    }
    pub fn joint_vars(&self) -> &VarSet {
        &self.joint
    }
    pub fn rho_box(&self) -> &BoxDomain {
        self.domain.enclosing_box()
    }
    pub fn theta_box(&self) -> Result<BoxDomain> {
        Ok(self.rho_box().renamed(self.theta.iter().cloned())?)
    }
    pub fn joint_box(&self) -> Result<BoxDomain> {
        let b = self.rho_box();
        let t = self.theta_box()?;
        let iv = b
            .names()
            .iter()
            .zip(b.intervals())
            .chain(t.names().iter().zip(t.intervals()))
            .map(|(n, &(lo, hi))| (n.clone(), lo, hi));
        Ok(BoxDomain::new(iv)?)
    }

    /// Lebesgue measure of the enclosing box.
    pub fn measure(&self) -> f64 {
        self.rho_box().measure()
    }

    /// Total jump intensity `int lambda(rho, theta) dtheta`.
    pub fn intensity(&self) -> Result<Poly> {
        Ok(self.kernel.integrate_box(&strs(&self.theta), &self.theta_box()?)?)
    }

    /// Generator integral term of a matrix over `rho`.
    pub fn generator<C: Coeff>(&self, p: &PolyMatrix<C>) -> Result<PolyMatrix<C>> {
        generator_term(p, &self.kernel, self.rho_box(), &strs(&self.theta))
    }

    /// Embeds a matrix over `rho` into the joint variables.
    pub fn at_rho<C: Coeff>(&self, m: &PolyMatrix<C>) -> Result<PolyMatrix<C>> {
        Ok(m.embed(&self.joint)?)
    }

    /// Renames a matrix over `rho` to `theta` and embeds it into the joint variables.
    pub fn at_theta<C: Coeff>(&self, m: &PolyMatrix<C>) -> Result<PolyMatrix<C>> {
        let map: Vec<(&str, &str)> = self.rho.iter().map(String::as_str).zip(self.theta.iter().map(String::as_str)).collect();
        Ok(m.rename_vars(&map)?.embed(&self.joint)?)
    }

    /// Parameter-set constraints over the joint variables: `g_i(rho)` then `g_i(theta)`.
    pub fn joint_constraints(&self) -> Result<Vec<Poly>> {
        let map: Vec<(&str, &str)> = self.rho.iter().map(String::as_str).zip(self.theta.iter().map(String::as_str)).collect();
        let mut out = Vec::new();
        for g in self.domain.constraints() {
            out.push(g.embed(&self.joint)?);
        }
        for g in self.domain.constraints() {
            out.push(g.rename_vars(&map)?.embed(&self.joint)?);
        }
        Ok(out)
    }

    /// Points of the parameter set on a uniform grid of its enclosing box.
    pub fn rho_grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        self.domain.grid(per_axis)
    }

    /// Grid of `P x P`, current parameter first.
    pub fn joint_grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let g = self.rho_grid(per_axis);
        let mut out = Vec::with_capacity(g.len() * g.len());
        for r in &g {
            for t in &g {
                let mut pt = r.clone();
                pt.extend_from_slice(t);
                out.push(pt);
            }
        }
        out
    }

    pub(crate) fn frame(&self) -> Frame {
        let iv = self.rho_box().intervals();
        Frame {
            names: self.rho.clone(),
            theta: self.theta.clone(),
            center: iv.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect(),
            half: iv.iter().map(|&(lo, hi)| 0.5 * (hi - lo)).collect(),
        }
    }

    /// The same system with every parameter interval mapped onto `[-1, 1]`.
    pub(crate) fn normalized(&self) -> Result<(LpvJumpSystem, Frame)> {
        let fr = self.frame();
        let fwd = fr.forward_rho();
        let map = |m: &PolyMatrix| m.affine_substitute(&fwd);
        let nbox = BoxDomain::new(self.rho.iter().map(|n| (n.clone(), -1.0, 1.0)))?;
        let pairs: Vec<(f64, f64)> = fr.center.iter().copied().zip(fr.half.iter().copied()).collect();
        let mut dom = self.domain.affine_image(&pairs, nbox)?;
        // rescale constraints to unit coefficient size; positivity is unchanged
        let gs: Vec<Poly> = dom
            .constraints()
            .iter()
            .map(|g| {
                let s = g.max_abs_coeff();
                g.scale(if s > 0.0 { 1.0 / s } else { 1.0 })
            })
            .collect();
        dom = SemialgebraicSet::new(dom.vars(), gs, dom.enclosing_box().clone())?;
        let kernel = self.kernel.affine_substitute(&fr.forward_joint())?.scale(fr.jacobian());
        let sys = LpvJumpSystem {
            a: map(&self.a)?,
            b: map(&self.b)?,
            c: map(&self.c)?,
            d: map(&self.d)?,
            e: map(&self.e)?,
            f: map(&self.f)?,
            domain: dom,
            kernel,
            rho: self.rho.clone(),
            theta: self.theta.clone(),
            joint: self.joint.clone(),
        };
        Ok((sys, fr))
    }

    /// Evaluates the kernel at `(rho, theta)`.
    pub fn kernel_at(&self, rho: &[f64], theta: &[f64]) -> Result<f64> {
        let mut pt = rho.to_vec();
        pt.extend_from_slice(theta);
        Ok(self.kernel.eval(&pt)?)
    }
}

/// `int lambda(rho, theta) [P(theta) - P(rho)] dtheta` over the box, as a
/// matrix over `rho`.
pub fn generator_term<C: Coeff>(p: &PolyMatrix<C>, kernel: &Poly, rho_box: &BoxDomain, theta: &[&str]) -> Result<PolyMatrix<C>> {
    let rho = p.vars().clone();
    for t in theta {
        if rho.contains(t) {
            return Err(AnalysisError::Collision(t.to_string()));
        }
    }
    if rho.names() != rho_box.names() {
        return Err(AnalysisError::Invalid(format!("matrix over {:?} but box over {:?}", rho, rho_box.names())));
    }
    let joint = rho.union(&VarSet::new(theta.iter().copied())?);
    let map: Vec<(&str, &str)> = rho.names().iter().map(String::as_str).zip(theta.iter().copied()).collect();
    let p_theta = p.rename_vars(&map)?.embed(&joint)?;
    let p_rho = p.embed(&joint)?;
    let k = kernel.embed(&joint)?;
    let integrand = p_theta.sub(&p_rho)?.mul_poly(&k)?;
    let tbox = rho_box.renamed(theta.iter().copied())?;
    Ok(integrand.integrate_box(theta, &tbox)?)
}

/// Affine map between original and normalized parameter coordinates:
/// `rho = center + half * u`.
#[derive(Clone, Debug)]
pub(crate) struct Frame {
    names: Vec<String>,
    theta: Vec<String>,
    center: Vec<f64>,
    half: Vec<f64>,
}

impl Frame {
    fn forward_rho(&self) -> Vec<(&str, f64, f64)> {
        self.names.iter().zip(&self.center).zip(&self.half).map(|((n, &c), &s)| (n.as_str(), c, s)).collect()
    }

    pub(crate) fn forward_joint(&self) -> Vec<(&str, f64, f64)> {
        let mut v = self.forward_rho();
        v.extend(self.theta.iter().zip(&self.center).zip(&self.half).map(|((n, &c), &s)| (n.as_str(), c, s)));
        v
    }

    pub(crate) fn backward_rho(&self) -> Vec<(&str, f64, f64)> {
        self.names.iter().zip(&self.center).zip(&self.half).map(|((n, &c), &s)| (n.as_str(), -c / s, 1.0 / s)).collect()
    }

    fn backward_joint(&self) -> Vec<(&str, f64, f64)> {
        let mut v = self.backward_rho();
        v.extend(self.theta.iter().zip(&self.center).zip(&self.half).map(|((n, &c), &s)| (n.as_str(), -c / s, 1.0 / s)));
        v
    }

    pub(crate) fn jacobian(&self) -> f64 {
        self.half.iter().product()
    }

    /// Maps a matrix over normalized `rho` back to original coordinates.
    pub(crate) fn back(&self, m: &PolyMatrix) -> Result<PolyMatrix> {
        Ok(m.affine_substitute(&self.backward_rho())?)
    }

    /// Maps a matrix over normalized `(rho, theta)` back.
    pub(crate) fn back_joint(&self, m: &PolyMatrix) -> Result<PolyMatrix> {
        Ok(m.affine_substitute(&self.backward_joint())?)
    }
}

/// `K = N / den` with polynomial numerator and scalar polynomial denominator.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalMatrix {
    pub num: PolyMatrix,
    pub den: Poly,
}

impl RationalMatrix {
    pub fn eval(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.den.eval(point)?;
        Ok(self.num.eval(point)? / d)
    }

    pub fn numerator_degree(&self) -> u32 {
        self.num.degree().unwrap_or(0)
    }

    pub fn denominator_degree(&self) -> u32 {
        self.den.degree().unwrap_or(0)
    }
}

/// Solver outcome details kept in every report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverSummary {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub primal_objective: f64,
}

impl SolverSummary {
    fn from_solution(s: &SdpSolution) -> Self {
        SolverSummary {
            status: s.status,
            iterations: s.iterations,
            primal_residual: s.primal_residual,
            dual_residual: s.dual_residual,
            gap: s.gap,
            primal_objective: s.primal_objective,
        }
    }
}

/// A program that the solver proved infeasible at the given degrees. This
/// says nothing about the system itself, only about the certificate class.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfeasibleReport {
    pub status: SolveStatus,
    pub degree: u32,
    pub multiplier_degree: u32,
    pub size: SizeSummary,
    pub solver: SolverSummary,
}

#[derive(Clone, Debug)]
pub enum Outcome<T> {
    Certified(T),
    Infeasible(InfeasibleReport),
}

impl<T> Outcome<T> {
    pub fn certified(self) -> Option<T> {
        match self {
            Outcome::Certified(t) => Some(t),
            Outcome::Infeasible(_) => None,
        }
    }

    pub fn is_certified(&self) -> bool {
        matches!(self, Outcome::Certified(_))
    }
}

/// Options shared by the analysis programs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Degree of the Lyapunov matrix (or of `Q` in synthesis).
    pub degree: u32,
    /// Degree of the Putinar multipliers; defaults to `degree` rounded up to even.
    pub multiplier_degree: Option<u32>,
    /// Positivity floor for the Lyapunov matrix.
    pub eps: f64,
    /// Strictness slack for the main inequality.
    pub eps_strict: f64,
    pub box_policy: BoxPolicy,
    pub compile: CompileOptions,
    pub solver: SolverOptions,
    /// Grid nodes per axis for the a posteriori check; `None` picks by dimension.
    pub grid_per_axis: Option<usize>,
    /// Reject solver successes whose grid margin is below this.
    pub grid_tol: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            degree: 2,
            multiplier_degree: None,
            eps: 1e-4,
            eps_strict: 1e-6,
            box_policy: BoxPolicy::Product,
            compile: CompileOptions::default(),
            solver: SolverOptions::default(),
            grid_per_axis: None,
            grid_tol: 1e-6,
        }
    }
}

impl AnalysisOptions {
    pub fn mult_degree(&self) -> u32 {
        self.multiplier_degree.unwrap_or(self.degree + self.degree % 2)
    }
}

/// Declares one SOS multiplier per constraint, requires each to be SOS, and
/// requires `expr - sum_i Gamma_i g_i` to be SOS. Returns the multipliers.
fn sos_on_set(
    prog: &mut SosProgram,
    expr: AffMatrix,
    constraints: &[Poly],
    deg_mult: u32,
    prefix: &str,
    label: &str,
) -> Result<Vec<DecisionPolyMatrix>> {
    let vars = expr.vars().clone();
    let n = expr.rows();
    let mut total = expr;
    let mut mults = Vec::with_capacity(constraints.len());
    for (i, g) in constraints.iter().enumerate() {
        let gm = prog.declare_poly_matrix(&format!("{prefix}_{}", i + 1), n, &vars, deg_mult)?;
        prog.add_sos_matrix_constraint(gm.matrix().clone(), &format!("{prefix}_{} SOS", i + 1))?;
        total = total.sub(&gm.matrix().mul_poly(&g.embed(&vars)?)?)?;
        mults.push(gm);
    }
    prog.add_sos_matrix_constraint(total, label)?;
    Ok(mults)
}

fn scaled_identity(vars: &VarSet, n: usize, c: f64) -> AffMatrix {
    lift(&PolyMatrix::scaled_identity(vars, n, c))
}

/// Compiles, solves, and classifies. `Ok(None)` means proven infeasible.
fn solve_program(prog: &SosProgram, opts: &AnalysisOptions) -> Result<(CompiledProgram, SdpSolution)> {
    let compiled = prog.compile(&opts.compile)?;
    let sol = sdpsolve::solve(&compiled.sdp, &opts.solver)?;
    Ok((compiled, sol))
}

fn classify(sol: &SdpSolution) -> Result<bool> {
    match sol.status {
        SolveStatus::Optimal | SolveStatus::NearOptimal => Ok(true),
        SolveStatus::PrimalInfeasible => Ok(false),
        status => Err(AnalysisError::Numerical {
            status,
            detail: format!(
                "after {} iterations: primal residual {:.2e}, dual residual {:.2e}, gap {:.2e}",
                sol.iterations, sol.primal_residual, sol.dual_residual, sol.gap
            ),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::text::parse_poly_str;

    fn rho_dom(lo: f64, hi: f64) -> SemialgebraicSet {
        SemialgebraicSet::from_box(&BoxDomain::new([("rho", lo, hi)]).unwrap(), BoxPolicy::Product).unwrap()
    }

    fn joint() -> VarSet {
        VarSet::new(["rho", "theta"]).unwrap()
    }

    #[test]
    fn generator_of_constant_matrix_vanishes() {
        let v = VarSet::new(["rho"]).unwrap();
        let p: PolyMatrix = PolyMatrix::scaled_identity(&v, 2, 3.0);
        let k = parse_poly_str("1 + rho*theta", &joint()).unwrap();
        let g = generator_term(&p, &k, &BoxDomain::new([("rho", 0.0, 2.0)]).unwrap(), &["theta"]).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn generator_of_rho_squared_with_constant_kernel() {
        // lambda0 (rb^3 / 3 - rb rho^2)
        let v = VarSet::new(["rho"]).unwrap();
        let (l0, rb) = (0.7, 2.5);
        let p = PolyMatrix::from_entries(&v, 1, 1, vec![parse_poly_str("rho^2", &v).unwrap()]).unwrap();
        let k = Poly::constant(&joint(), l0);
        let g = generator_term(&p, &k, &BoxDomain::new([("rho", 0.0, rb)]).unwrap(), &["theta"]).unwrap();
        let expect = Poly::from_terms(&v, [(vec![0], l0 * rb.powi(3) / 3.0), (vec![2], -l0 * rb)]).unwrap();
        assert!(g.get(0, 0).approx_eq(&expect, 1e-12));
        // quadrature oracle at a point
        let r = 1.3;
        let gl = gauss_legendre(20);
        let quad: f64 = gl.iter().map(|&(x, w)| {
            let th = 0.5 * rb * (x + 1.0);
            0.5 * rb * w * l0 * (th * th - r * r)
        }).sum();
        assert!((g.get(0, 0).eval(&[r]).unwrap() - quad).abs() < 1e-12);
    }

    #[test]
    fn generator_name_collision() {
        let v = VarSet::new(["theta"]).unwrap();
        let p: PolyMatrix = PolyMatrix::identity(&v, 1);
        let k = Poly::constant(&v, 1.0);
        let r = generator_term(&p, &k, &BoxDomain::new([("theta", 0.0, 1.0)]).unwrap(), &["theta"]);
        assert!(matches!(r, Err(AnalysisError::Collision(_))));
    }

    #[test]
    fn negative_kernel_rejected() {
        let v = VarSet::new(["rho"]).unwrap();
        let a = PolyMatrix::scaled_identity(&v, 1, -1.0);
        let k = parse_poly_str("rho - theta", &joint()).unwrap();
        assert!(matches!(LpvJumpSystem::autonomous(a, rho_dom(0.0, 1.0), k), Err(AnalysisError::NegativeKernel { .. })));
    }

    #[test]
    fn normalization_preserves_intensity_and_generator() {
        let v = VarSet::new(["rho"]).unwrap();
        let a = PolyMatrix::scaled_identity(&v, 1, -1.0);
        let k = parse_poly_str("1 + rho + 2*theta^2", &joint()).unwrap();
        let sys = LpvJumpSystem::autonomous(a, rho_dom(1.0, 4.0), k).unwrap();
        let (ns, fr) = sys.normalized().unwrap();
        let li = sys.intensity().unwrap();
        let ln = ns.intensity().unwrap();
        for u in [-1.0, -0.3, 0.5, 1.0] {
            let r = 2.5 + 1.5 * u;
            assert!((li.eval(&[r]).unwrap() - ln.eval(&[u]).unwrap()).abs() < 1e-10);
        }
        let p = PolyMatrix::from_entries(&v, 1, 1, vec![parse_poly_str("1 + rho^2", &v).unwrap()]).unwrap();
        let pn = p.affine_substitute(&fr.forward_rho()).unwrap();
        let g = sys.generator(&p).unwrap();
        let gn = fr.back(&ns.generator(&pn).unwrap()).unwrap();
        assert!(g.approx_eq(&gn, 1e-9));
    }

    #[test]
    fn intensity_is_lambda0_rhobar() {
        let v = VarSet::new(["rho"]).unwrap();
        let sys = LpvJumpSystem::autonomous(PolyMatrix::identity(&v, 1), rho_dom(0.0, 5.0), Poly::constant(&joint(), 0.5)).unwrap();
        assert!((sys.intensity().unwrap().eval(&[1.0]).unwrap() - 2.5).abs() < 1e-14);
    }
}
