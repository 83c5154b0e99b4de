//! Sum-of-squares programs over polynomial matrix unknowns.
//!
//! Unknown polynomial matrices are declared on a [`SosProgram`]; each of
//! their coefficients becomes a scalar decision handle, and expressions built
//! from them are polynomial matrices with [`AffExpr`] coefficients. SOS
//! matrix constraints are compiled to Gram blocks of a block-diagonal SDP
//! ([`SosProgram::compile`]) and solutions are mapped back with
//! [`CompiledProgram::recover`].

mod compile;
mod set;

pub use compile::{gram_expand, BasisPolicy, CompileOptions, CompiledProgram, GramFactor, SizeSummary, SosSolution};
pub use set::{BoxPolicy, SemialgebraicSet};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::polyalg::{monomials_up_to, BoxDomain, Coeff, Poly, PolyError, PolyMatrix, VarSet, COEFF_DROP_TOL};
use crate::sdpsolve::SdpError;

#[derive(Debug, Error)]
pub enum SosError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("duplicate decision variable name `{0}`")]
    DuplicateName(String),
    #[error("constraint `{0}`: expression is not symmetric")]
    NotSymmetric(String),
    #[error("constraint `{label}`: odd total degree {degree} admits no Gram basis")]
    OddDegree { label: String, degree: u32 },
    #[error("invalid dimension: {0}")]
    Dimension(String),
    #[error("invalid set: {0}")]
    Set(String),
    #[error("solution does not match the compiled program: {0}")]
    Recovery(String),
}

pub type Result<T> = std::result::Result<T, SosError>;

/// Index of a scalar decision variable.
pub type Handle = usize;

/// `constant + sum_h terms[h] * x_h`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AffExpr {
    pub constant: f64,
    pub terms: BTreeMap<Handle, f64>,
}

impl AffExpr {
    pub fn var(h: Handle) -> Self {
        AffExpr { constant: 0.0, terms: BTreeMap::from([(h, 1.0)]) }
    }

    pub fn constant(c: f64) -> Self {
        AffExpr { constant: c, terms: BTreeMap::new() }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(&h, &c)| c * values.get(h).copied().unwrap_or(0.0)).sum::<f64>()
    }

    pub fn add(&self, other: &AffExpr) -> AffExpr {
        let mut out = self.clone();
        Coeff::add_assign(&mut out, other);
        out.canonicalize();
        out
    }

    pub fn sub(&self, other: &AffExpr) -> AffExpr {
        self.add(&other.scaled(-1.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().fold(self.constant.abs(), |a, c| a.max(c.abs()))
    }
}

impl Coeff for AffExpr {
    fn zero() -> Self {
        AffExpr::default()
    }
    fn from_f64(c: f64) -> Self {
        AffExpr::constant(c)
    }
    fn is_negligible(&self) -> bool {
        self.terms.is_empty() && self.constant.abs() < COEFF_DROP_TOL
    }
    fn add_assign(&mut self, other: &Self) {
        self.constant += other.constant;
        for (&h, &c) in &other.terms {
            *self.terms.entry(h).or_insert(0.0) += c;
        }
    }
    fn scaled(&self, c: f64) -> Self {
        AffExpr { constant: self.constant * c, terms: self.terms.iter().map(|(&h, &v)| (h, v * c)).collect() }
    }
    fn canonicalize(&mut self) {
        self.terms.retain(|_, c| c.abs() >= COEFF_DROP_TOL);
        if self.constant.abs() < COEFF_DROP_TOL {
            self.constant = 0.0;
        }
    }
}

pub type AffPoly = Poly<AffExpr>;
pub type AffMatrix = PolyMatrix<AffExpr>;

/// Lifts a real polynomial matrix to affine coefficients.
pub fn lift(m: &PolyMatrix<f64>) -> AffMatrix {
    m.map_coeffs(|&c| AffExpr::constant(c))
}

/// Evaluates an affine-coefficient matrix at given handle values.
pub fn evaluate(m: &AffMatrix, values: &[f64]) -> PolyMatrix<f64> {
    m.map_coeffs(|a| a.eval(values))
}

/// An unknown polynomial matrix whose coefficients are decision handles.
#[derive(Clone, Debug)]
pub struct DecisionPolyMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub vars: VarSet,
    pub degree: u32,
    pub symmetric: bool,
    /// Handles in declaration order: slot-major, monomials graded within a slot.
    pub handles: Vec<Handle>,
    matrix: AffMatrix,
}

impl DecisionPolyMatrix {
    /// The symbolic matrix.
    pub fn matrix(&self) -> &AffMatrix {
        &self.matrix
    }

    pub fn num_handles(&self) -> usize {
        self.handles.len()
    }
}

#[derive(Clone, Debug)]
pub struct SosConstraint {
    pub label: String,
    pub expr: AffMatrix,
}

#[derive(Clone, Debug)]
pub struct Equality {
    pub label: String,
    /// The equality is `expr = 0`.
    pub expr: AffExpr,
}

#[derive(Clone, Debug, Default)]
pub struct SosProgram {
    num_handles: usize,
    decls: Vec<DecisionPolyMatrix>,
    scalars: Vec<(String, Handle)>,
    sos: Vec<SosConstraint>,
    equalities: Vec<Equality>,
    objective: Option<AffExpr>,
}

impl SosProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_handles(&self) -> usize {
        self.num_handles
    }

    pub fn decisions(&self) -> &[DecisionPolyMatrix] {
        &self.decls
    }

    pub fn sos_constraints(&self) -> &[SosConstraint] {
        &self.sos
    }

    pub fn equalities(&self) -> &[Equality] {
        &self.equalities
    }

    pub fn objective(&self) -> Option<&AffExpr> {
        self.objective.as_ref()
    }

    fn check_name(&self, name: &str) -> Result<()> {
        if self.decls.iter().any(|d| d.name == name) || self.scalars.iter().any(|s| s.0 == name) {
            return Err(SosError::DuplicateName(name.to_string()));
        }
        Ok(())
    }

    fn fresh(&mut self) -> Handle {
        self.num_handles += 1;
        self.num_handles - 1
    }

    /// Symmetric `n x n` unknown with entries of total degree `<= degree`.
    pub fn declare_poly_matrix(&mut self, name: &str, n: usize, vars: &VarSet, degree: u32) -> Result<DecisionPolyMatrix> {
        self.declare(name, n, n, vars, degree, true)
    }

    /// General `rows x cols` unknown.
    pub fn declare_general_matrix(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        vars: &VarSet,
        degree: u32,
    ) -> Result<DecisionPolyMatrix> {
        self.declare(name, rows, cols, vars, degree, false)
    }

    fn declare(&mut self, name: &str, rows: usize, cols: usize, vars: &VarSet, degree: u32, symmetric: bool) -> Result<DecisionPolyMatrix> {
        self.check_name(name)?;
        if rows == 0 || cols == 0 {
            return Err(SosError::Dimension(format!("`{name}` has size {rows}x{cols}")));
        }
        let monos = monomials_up_to(vars.len(), degree);
        let mut handles = Vec::new();
        let mut matrix = AffMatrix::zeros(vars, rows, cols);
        for i in 0..rows {
            let j0 = if symmetric { i } else { 0 };
            for j in j0..cols {
                let mut terms = Vec::with_capacity(monos.len());
                for e in &monos {
                    let h = self.fresh();
                    handles.push(h);
                    terms.push((e.clone(), AffExpr::var(h)));
                }
                let p = Poly::from_terms(vars, terms)?;
                if symmetric && i != j {
                    matrix.set(j, i, p.clone())?;
                }
                matrix.set(i, j, p)?;
            }
        }
        let d = DecisionPolyMatrix { name: name.to_string(), rows, cols, vars: vars.clone(), degree, symmetric, handles, matrix };
        self.decls.push(d.clone());
        Ok(d)
    }

    /// A free scalar unknown.
    pub fn declare_scalar(&mut self, name: &str) -> Result<AffExpr> {
        self.check_name(name)?;
        let h = self.fresh();
        self.scalars.push((name.to_string(), h));
        Ok(AffExpr::var(h))
    }

    pub fn scalars(&self) -> &[(String, Handle)] {
        &self.scalars
    }

    /// Requires `expr` to be an SOS matrix.
    pub fn add_sos_matrix_constraint(&mut self, expr: AffMatrix, label: &str) -> Result<()> {
        if !expr.is_square() {
            return Err(SosError::Dimension(format!("constraint `{label}` is {}x{}", expr.rows(), expr.cols())));
        }
        for i in 0..expr.rows() {
            for j in i + 1..expr.cols() {
                let d = expr.get(i, j).sub(expr.get(j, i))?;
                let worst = d.terms().map(|(_, c)| c.max_abs()).fold(0.0, f64::max);
                let scale = expr.get(i, j).terms().map(|(_, c)| c.max_abs()).fold(1.0, f64::max);
                if worst > 1e-9 * scale {
                    return Err(SosError::NotSymmetric(label.to_string()));
                }
            }
        }
        self.check_handles(&expr, label)?;
        self.sos.push(SosConstraint { label: label.to_string(), expr });
        Ok(())
    }

    fn check_handles(&self, expr: &AffMatrix, label: &str) -> Result<()> {
        for p in expr.entries() {
            for (_, c) in p.terms() {
                if let Some((&h, _)) = c.terms.iter().next_back() {
                    if h >= self.num_handles {
                        return Err(SosError::Dimension(format!("constraint `{label}` uses undeclared handle {h}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Imposes `integral of z over integrate_over = 0` identically in the
    /// remaining variables, one equality per surviving (entry, monomial).
    /// Returns the number of equalities added.
    pub fn add_integral_zero_constraint(&mut self, z: &AffMatrix, integrate_over: &[&str], domain: &BoxDomain, label: &str) -> Result<usize> {
        self.check_handles(z, label)?;
        let integ = z.integrate_box(integrate_over, domain)?;
        let mut added = 0;
        for i in 0..integ.rows() {
            let j0 = if z.is_symmetric() { i } else { 0 };
            for j in j0..integ.cols() {
                for (e, c) in integ.get(i, j).terms() {
                    let mut c = c.clone();
                    c.canonicalize();
                    if c.is_negligible() {
                        continue;
                    }
                    self.equalities.push(Equality { label: format!("{label}[{i},{j}]{e:?}"), expr: c });
                    added += 1;
                }
            }
        }
        Ok(added)
    }

    /// Imposes `expr = 0`.
    pub fn add_equality(&mut self, expr: AffExpr, label: &str) {
        self.equalities.push(Equality { label: label.to_string(), expr });
    }

    /// Sets a linear objective to be minimized.
    pub fn set_objective(&mut self, expr: AffExpr) {
        self.objective = Some(expr);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho() -> VarSet {
        VarSet::new(["rho"]).unwrap()
    }

    #[test]
    fn handle_counts() {
        let mut p = SosProgram::new();
        assert_eq!(p.declare_poly_matrix("P", 2, &rho(), 2).unwrap().num_handles(), 9);
        assert_eq!(p.declare_poly_matrix("P0", 1, &rho(), 0).unwrap().num_handles(), 1);
        let rt = VarSet::new(["rho", "theta"]).unwrap();
        assert_eq!(p.declare_poly_matrix("Z", 2, &rt, 2).unwrap().num_handles(), 18);
        assert_eq!(p.declare_general_matrix("U", 1, 2, &rho(), 2).unwrap().num_handles(), 6);
        assert_eq!(p.num_handles(), 34);
        assert!(matches!(p.declare_poly_matrix("P", 1, &rho(), 0), Err(SosError::DuplicateName(_))));
    }

    #[test]
    fn declared_matrix_is_symmetric() {
        let mut p = SosProgram::new();
        let d = p.declare_poly_matrix("P", 3, &rho(), 1).unwrap();
        assert!(d.matrix().is_symmetric());
        assert_eq!(d.matrix().get(0, 2), d.matrix().get(2, 0));
    }

    #[test]
    fn integral_zero_linear_in_theta() {
        // z0 + z1 theta over [0, 1] -> z0 + z1 / 2 = 0
        let th = VarSet::new(["theta"]).unwrap();
        let dom = BoxDomain::new([("theta", 0.0, 1.0)]).unwrap();
        let mut p = SosProgram::new();
        let z = p.declare_poly_matrix("Z", 1, &th, 1).unwrap();
        let n = p.add_integral_zero_constraint(z.matrix(), &["theta"], &dom, "int").unwrap();
        assert_eq!(n, 1);
        let eq = &p.equalities()[0].expr;
        assert_eq!(eq.constant, 0.0);
        assert!((eq.terms[&0] - 1.0).abs() < 1e-15 && (eq.terms[&1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn integral_zero_of_zero_is_vacuous() {
        let rt = VarSet::new(["rho", "theta"]).unwrap();
        let dom = BoxDomain::new([("theta", 0.0, 2.0)]).unwrap();
        let mut p = SosProgram::new();
        assert_eq!(p.add_integral_zero_constraint(&AffMatrix::zeros(&rt, 2, 2), &["theta"], &dom, "z").unwrap(), 0);
    }

    #[test]
    fn integral_zero_of_balanced_kernel_imposes_nothing() {
        // c (2 theta - rhobar) integrates to zero on [0, rhobar] for every c
        let rt = VarSet::new(["rho", "theta"]).unwrap();
        let rb = 3.0;
        let dom = BoxDomain::new([("theta", 0.0, rb)]).unwrap();
        let mut p = SosProgram::new();
        let c = p.declare_scalar("c").unwrap();
        let z = Poly::from_terms(&rt, [(vec![0, 1], c.scaled(2.0)), (vec![0, 0], c.scaled(-rb))]).unwrap();
        let zm = AffMatrix::from_entries(&rt, 1, 1, vec![z]).unwrap();
        assert_eq!(p.add_integral_zero_constraint(&zm, &["theta"], &dom, "z").unwrap(), 0);
    }

    #[test]
    fn missing_interval_is_error() {
        let rt = VarSet::new(["rho", "theta"]).unwrap();
        let dom = BoxDomain::new([("rho", 0.0, 1.0)]).unwrap();
        let mut p = SosProgram::new();
        let z = p.declare_poly_matrix("Z", 1, &rt, 1).unwrap();
        assert!(p.add_integral_zero_constraint(z.matrix(), &["theta"], &dom, "z").is_err());
    }

    #[test]
    fn non_symmetric_expression_rejected() {
        let v = rho();
        let mut m = AffMatrix::zeros(&v, 2, 2);
        m.set(0, 1, Poly::constant(&v, AffExpr::constant(1.0))).unwrap();
        let mut p = SosProgram::new();
        assert!(matches!(p.add_sos_matrix_constraint(m, "bad"), Err(SosError::NotSymmetric(_))));
    }
}
