//! Gram-matrix compilation of SOS programs and solution recovery.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{evaluate, AffExpr, Result, SosError, SosProgram};
use crate::polyalg::{monomials_up_to, Poly, PolyMatrix, VarSet};
use crate::sdpsolve::{BlockKind, BlockValue, Constraint, Entry, SdpProblem, SdpSolution};

/// Choice of the monomial vector `z` in `M = (I ⊗ z)^T G (I ⊗ z)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisPolicy {
    /// Every monomial of total degree up to half the expression degree.
    #[default]
    Full,
    /// Additionally drops monomials whose degree in some variable exceeds
    /// half the largest degree of that variable on the diagonal.
    CoordinateNewton,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileOptions {
    pub basis: BasisPolicy,
    /// Compile odd-degree expressions with the next larger basis instead of
    /// rejecting them.
    pub allow_odd_degree: bool,
}

/// Program size in the usual SOS-toolbox accounting: free handles plus every
/// Gram entry as primal variables, coefficient-matching and user equalities
/// as dual variables.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub primal_variables: usize,
    pub dual_variables: usize,
    pub free_handles: usize,
    pub gram_sizes: Vec<usize>,
}

#[derive(Clone, Debug)]
struct GramInfo {
    label: String,
    vars: VarSet,
    n: usize,
    basis: Vec<Vec<u32>>,
    block: usize,
}

#[derive(Clone, Debug)]
pub struct CompiledProgram {
    pub sdp: SdpProblem,
    pub size: SizeSummary,
    num_handles: usize,
    free_block: Option<usize>,
    grams: Vec<GramInfo>,
    decls: Vec<(String, super::AffMatrix)>,
    scalars: Vec<(String, usize)>,
    objective: Option<AffExpr>,
}

/// Gram matrix of one SOS constraint.
#[derive(Clone, Debug)]
pub struct GramFactor {
    pub label: String,
    pub vars: VarSet,
    pub n: usize,
    pub basis: Vec<Vec<u32>>,
    pub gram: DMatrix<f64>,
}

impl GramFactor {
    pub fn expand(&self) -> PolyMatrix<f64> {
        gram_expand(&self.vars, &self.basis, self.n, &self.gram)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        BlockValue::Dense(self.gram.clone()).min_eigenvalue()
    }
}

#[derive(Clone, Debug)]
pub struct SosSolution {
    pub handles: Vec<f64>,
    pub matrices: BTreeMap<String, PolyMatrix<f64>>,
    pub scalars: BTreeMap<String, f64>,
    pub grams: Vec<GramFactor>,
    pub objective: Option<f64>,
}

impl SosSolution {
    pub fn eval(&self, m: &super::AffMatrix) -> PolyMatrix<f64> {
        evaluate(m, &self.handles)
    }

    pub fn value(&self, e: &AffExpr) -> f64 {
        e.eval(&self.handles)
    }
}

/// `(I_n ⊗ z)^T G (I_n ⊗ z)`, with block index `i * |z| + a`.
pub fn gram_expand(vars: &VarSet, basis: &[Vec<u32>], n: usize, g: &DMatrix<f64>) -> PolyMatrix<f64> {
    let nz = basis.len();
    let mut out = PolyMatrix::zeros(vars, n, n);
    for i in 0..n {
        for j in 0..n {
            let mut terms = Vec::with_capacity(nz * nz);
            for a in 0..nz {
                for b in 0..nz {
                    let e: Vec<u32> = basis[a].iter().zip(&basis[b]).map(|(x, y)| x + y).collect();
                    terms.push((e, g[(i * nz + a, j * nz + b)]));
                }
            }
            let p = Poly::from_terms(vars, terms).expect("basis exponents conform to vars");
            out.set(i, j, p).expect("shape");
        }
    }
    out
}

fn choose_basis(expr: &super::AffMatrix, label: &str, opts: &CompileOptions) -> Result<Vec<Vec<u32>>> {
    let nv = expr.vars().len();
    let degree = expr.degree().unwrap_or(0);
    if degree % 2 == 1 && !opts.allow_odd_degree {
        return Err(SosError::OddDegree { label: label.to_string(), degree });
    }
    let half = degree.div_ceil(2);
    let full = monomials_up_to(nv, half);
    match opts.basis {
        BasisPolicy::Full => Ok(full),
        BasisPolicy::CoordinateNewton => {
            let caps: Vec<u32> = (0..nv)
                .map(|k| (0..expr.rows()).filter_map(|i| expr.get(i, i).degree_in(k)).max().unwrap_or(0) / 2)
                .collect();
            let pruned: Vec<Vec<u32>> = full.into_iter().filter(|e| e.iter().zip(&caps).all(|(x, c)| x <= c)).collect();
            Ok(pruned)
        }
    }
}

fn free_entries(e: &AffExpr, block: usize, sign: f64) -> impl Iterator<Item = Entry> + '_ {
    e.terms.iter().flat_map(move |(&h, &c)| {
        [Entry { block, i: 2 * h, j: 2 * h, v: sign * c }, Entry { block, i: 2 * h + 1, j: 2 * h + 1, v: -sign * c }]
    })
}

impl SosProgram {
    /// Compiles to a block-diagonal SDP: one PSD Gram block per SOS
    /// constraint and one diagonal block holding each handle as the
    /// difference of two nonnegative variables.
    pub fn compile(&self, opts: &CompileOptions) -> Result<CompiledProgram> {
        let nh = self.num_handles;
        let mut blocks = Vec::new();
        let free_block = if nh > 0 {
            blocks.push(BlockKind::Diag(2 * nh));
            Some(0)
        } else {
            None
        };
        let fb = free_block.unwrap_or(0);
        let mut constraints: Vec<Constraint> = Vec::new();
        let mut grams = Vec::new();

        for sc in &self.sos {
            let expr = &sc.expr;
            if expr.is_zero() {
                continue;
            }
            let basis = choose_basis(expr, &sc.label, opts)?;
            let n = expr.rows();
            let nz = basis.len();
            let block = blocks.len();
            blocks.push(BlockKind::Psd(n * nz));

            let mut rows: BTreeMap<(usize, usize, Vec<u32>), (AffExpr, Vec<Entry>)> = BTreeMap::new();
            for i in 0..n {
                for j in i..n {
                    for (e, c) in expr.get(i, j).terms() {
                        rows.entry((i, j, e.to_vec())).or_default().0 = c.clone();
                    }
                    for a in 0..nz {
                        let b0 = if i == j { a } else { 0 };
                        for b in b0..nz {
                            let e: Vec<u32> = basis[a].iter().zip(&basis[b]).map(|(x, y)| x + y).collect();
                            let (p, q) = (i * nz + a, j * nz + b);
                            let v = if i == j { 1.0 } else { 0.5 };
                            rows.entry((i, j, e)).or_default().1.push(Entry { block, i: p, j: q, v });
                        }
                    }
                }
            }
            for (_, (aff, mut entries)) in rows {
                if entries.is_empty() && aff.is_constant() && aff.constant == 0.0 {
                    continue;
                }
                entries.extend(free_entries(&aff, fb, -1.0));
                constraints.push(Constraint { rhs: aff.constant, entries });
            }
            grams.push(GramInfo { label: sc.label.clone(), vars: expr.vars().clone(), n, basis, block });
        }

        for eq in &self.equalities {
            let mut e = eq.expr.clone();
            crate::polyalg::Coeff::canonicalize(&mut e);
            if e.is_constant() && e.constant == 0.0 {
                continue;
            }
            constraints.push(Constraint { rhs: -e.constant, entries: free_entries(&e, fb, 1.0).collect() });
        }

        let objective: Vec<Entry> = self.objective.as_ref().map(|o| free_entries(o, fb, 1.0).collect()).unwrap_or_default();

        if blocks.is_empty() {
            return Err(SosError::Dimension("program has neither unknowns nor SOS constraints".into()));
        }
        let gram_sizes: Vec<usize> = grams.iter().map(|g| g.n * g.basis.len()).collect();
        let size = SizeSummary {
            primal_variables: nh + gram_sizes.iter().map(|s| s * s).sum::<usize>(),
            dual_variables: constraints.len(),
            free_handles: nh,
            gram_sizes,
        };
        Ok(CompiledProgram {
            sdp: SdpProblem { blocks, objective, constraints },
            size,
            num_handles: nh,
            free_block,
            grams,
            decls: self.decls.iter().map(|d| (d.name.clone(), d.matrix().clone())).collect(),
            scalars: self.scalars.clone(),
            objective: self.objective.clone(),
        })
    }
}

impl CompiledProgram {
    /// Maps an SDP solution back to decision polynomials and Gram factors.
    pub fn recover(&self, sol: &SdpSolution) -> Result<SosSolution> {
        if sol.x.len() != self.sdp.blocks.len() {
            return Err(SosError::Recovery(format!("expected {} blocks, found {}", self.sdp.blocks.len(), sol.x.len())));
        }
        let mut handles = vec![0.0; self.num_handles];
        if let Some(fb) = self.free_block {
            let d = sol.x[fb].as_diag().ok_or_else(|| SosError::Recovery("handle block is not diagonal".into()))?;
            if d.len() != 2 * self.num_handles {
                return Err(SosError::Recovery("handle block has the wrong length".into()));
            }
            for (h, v) in handles.iter_mut().enumerate() {
                *v = d[2 * h] - d[2 * h + 1];
            }
        }
        let mut grams = Vec::with_capacity(self.grams.len());
        for g in &self.grams {
            let m = sol.x[g.block]
                .as_dense()
                .ok_or_else(|| SosError::Recovery(format!("Gram block of `{}` is not dense", g.label)))?;
            grams.push(GramFactor { label: g.label.clone(), vars: g.vars.clone(), n: g.n, basis: g.basis.clone(), gram: m.clone() });
        }
        let matrices = self.decls.iter().map(|(name, m)| (name.clone(), evaluate(m, &handles))).collect();
        let scalars = self.scalars.iter().map(|(name, h)| (name.clone(), handles[*h])).collect();
        let objective = self.objective.as_ref().map(|o| o.eval(&handles));
        Ok(SosSolution { handles, matrices, scalars, grams, objective })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdpsolve::{solve, SolveStatus, SolverOptions};
    use crate::sosprog::{lift, AffMatrix};
    use proptest::prelude::*;

    fn rho() -> VarSet {
        VarSet::new(["rho"]).unwrap()
    }

    fn scalar(p: Poly) -> AffMatrix {
        let v = p.vars().clone();
        lift(&PolyMatrix::from_entries(&v, 1, 1, vec![p]).unwrap())
    }

    fn run(prog: &SosProgram, opts: &CompileOptions) -> (CompiledProgram, SdpSolution) {
        let c = prog.compile(opts).unwrap();
        let s = solve(&c.sdp, &SolverOptions::default()).unwrap();
        (c, s)
    }

    #[test]
    fn one_plus_rho_squared_is_sos() {
        let v = rho();
        let p = crate::polyalg::text::parse_poly_str("1 + rho^2", &v).unwrap();
        let mut prog = SosProgram::new();
        prog.add_sos_matrix_constraint(scalar(p.clone()), "sq").unwrap();
        let (c, s) = run(&prog, &CompileOptions::default());
        assert_eq!(c.sdp.blocks, vec![BlockKind::Psd(2)]);
        assert_eq!(s.status, SolveStatus::Optimal);
        let r = c.recover(&s).unwrap();
        let g = &r.grams[0];
        assert_eq!(g.basis, vec![vec![0], vec![1]]);
        assert!((g.gram.clone() - DMatrix::identity(2, 2)).abs().max() < 1e-7);
        assert!(g.expand().approx_eq(&PolyMatrix::from_entries(&v, 1, 1, vec![p]).unwrap(), 1e-7));
    }

    #[test]
    fn rho_is_not_sos() {
        let v = rho();
        let p = Poly::var(&v, "rho").unwrap();
        let mut prog = SosProgram::new();
        prog.add_sos_matrix_constraint(scalar(p), "odd").unwrap();
        assert!(matches!(prog.compile(&CompileOptions::default()), Err(SosError::OddDegree { degree: 1, .. })));
        let opts = CompileOptions { allow_odd_degree: true, ..Default::default() };
        let (_, s) = run(&prog, &opts);
        assert_eq!(s.status, SolveStatus::PrimalInfeasible);
    }

    #[test]
    fn positivstellensatz_certificate_on_unit_interval() {
        // rho - c rho (1 - rho) is SOS for c = 1 (it equals rho^2), so rho >= 0 on [0, 1]
        let v = rho();
        let mut prog = SosProgram::new();
        let gamma = prog.declare_poly_matrix("Gamma", 1, &v, 0).unwrap();
        prog.add_sos_matrix_constraint(gamma.matrix().clone(), "C1").unwrap();
        let g = crate::polyalg::text::parse_poly_str("rho - rho^2", &v).unwrap();
        let expr = lift(&PolyMatrix::from_entries(&v, 1, 1, vec![Poly::var(&v, "rho").unwrap()]).unwrap())
            .sub(&gamma.matrix().mul_poly(&g).unwrap())
            .unwrap();
        prog.add_sos_matrix_constraint(expr, "C2").unwrap();
        let (c, s) = run(&prog, &CompileOptions::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        let r = c.recover(&s).unwrap();
        let cval = r.matrices["Gamma"].get(0, 0).eval(&[0.0]).unwrap();
        // discriminant oracle: rho - c rho + c rho^2 is SOS iff (1 - c)^2 <= 0
        assert!((cval - 1.0).abs() < 1e-4, "c = {cval}");
    }

    #[test]
    fn equality_rows_match_expression_support() {
        let v = VarSet::new(["rho", "theta"]).unwrap();
        let mut prog = SosProgram::new();
        let p = prog.declare_poly_matrix("P", 2, &v, 2).unwrap();
        prog.add_sos_matrix_constraint(p.matrix().clone(), "P").unwrap();
        let c = prog.compile(&CompileOptions::default()).unwrap();
        // 3 slots x 6 monomials of degree <= 2
        assert_eq!(c.sdp.constraints.len(), 18);
        assert_eq!(c.size.primal_variables, 18 + 36);
    }

    #[test]
    fn integral_zero_holds_after_recovery() {
        let v = VarSet::new(["rho", "theta"]).unwrap();
        let dom = crate::polyalg::BoxDomain::new([("theta", 0.0, 2.0)]).unwrap();
        let mut prog = SosProgram::new();
        let z = prog.declare_poly_matrix("Z", 2, &v, 2).unwrap();
        prog.add_integral_zero_constraint(z.matrix(), &["theta"], &dom, "intZ").unwrap();
        // Z + I SOS, with Z pushed away from zero by the objective
        let expr = z.matrix().add(&lift(&PolyMatrix::identity(&v, 2))).unwrap();
        prog.add_sos_matrix_constraint(expr, "shift").unwrap();
        let mut obj = AffExpr::default();
        for (e, c) in z.matrix().get(0, 0).terms() {
            if e == [0, 2] {
                obj = obj.add(c);
            }
        }
        prog.set_objective(obj);
        let (c, s) = run(&prog, &CompileOptions::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        let r = c.recover(&s).unwrap();
        let integ = r.matrices["Z"].integrate_box(&["theta"], &dom).unwrap();
        assert!(integ.max_abs_coeff() < 1e-6, "{integ:?}");
        assert!(r.matrices["Z"].max_abs_coeff() > 1e-2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn gram_round_trip(vals in prop::collection::vec(-1.0f64..1.0, 36)) {
            let v = VarSet::new(["rho", "theta"]).unwrap();
            let basis = monomials_up_to(2, 1);
            let l = DMatrix::from_row_slice(6, 6, &vals);
            let g = &l * l.transpose() + DMatrix::identity(6, 6) * 0.1;
            let m = gram_expand(&v, &basis, 2, &g);
            prop_assert!(m.is_symmetric_within(1e-12));
            let mut prog = SosProgram::new();
            prog.add_sos_matrix_constraint(lift(&m), "G").unwrap();
            let c = prog.compile(&CompileOptions::default()).unwrap();
            let tight = SolverOptions { tol_primal: 1e-11, tol_dual: 1e-11, tol_gap: 1e-11, ..Default::default() };
            let s = solve(&c.sdp, &tight).unwrap();
            prop_assert_eq!(s.status, SolveStatus::Optimal);
            let r = c.recover(&s).unwrap();
            let err = r.grams[0].expand().sub(&m).unwrap().max_abs_coeff();
            prop_assert!(err <= 1e-8, "coefficient error {}", err);
            prop_assert!(r.grams[0].min_eigenvalue() > -1e-9);
        }
    }
}
