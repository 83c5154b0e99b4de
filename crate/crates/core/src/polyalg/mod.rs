//! Multivariate polynomials and polynomial matrices with double-precision
//! coefficients, including exact definite integration over boxes.
//!
//! Polynomials are generic over their coefficient type so that the same
//! machinery carries both numeric data (`Poly<f64>`) and expressions that are
//! affine in optimization unknowns (`Poly<AffExpr>`, see [`crate::sosprog`]).

mod matrix;
pub mod text;

pub use matrix::PolyMatrix;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Coefficients whose magnitude falls below this are dropped after arithmetic.
pub const COEFF_DROP_TOL: f64 = 1e-14;

/// Results whose total degree exceeds this are rejected.
pub const MAX_DEGREE: u32 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("variable set mismatch: {0:?} vs {1:?}")]
    VarSetMismatch(Vec<String>, Vec<String>),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("total degree {0} exceeds the cap of {MAX_DEGREE}")]
    DegreeCap(u32),
    #[error("no interval given for integrated variable `{0}`")]
    MissingInterval(String),
    #[error("invalid interval [{lo}, {hi}] for `{var}`")]
    InvalidInterval { var: String, lo: f64, hi: f64 },
    #[error("exponent vector has length {got}, expected {expected}")]
    ExponentLength { expected: usize, got: usize },
    #[error("point has {got} coordinates, expected {expected}")]
    PointLength { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("cannot parse polynomial: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, PolyError>;

/// Ordered, duplicate-free list of variable names.
///
/// Exponent vectors index into this order, so it is fixed at construction.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct VarSet(Arc<[String]>);

impl VarSet {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(PolyError::DuplicateVariable(n.clone()));
            }
        }
        Ok(VarSet(names.into()))
    }

    pub fn empty() -> Self {
        VarSet(Vec::new().into())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    /// Variables of `self` followed by those of `other` not already present.
    pub fn union(&self, other: &VarSet) -> VarSet {
        let mut names: Vec<String> = self.0.to_vec();
        for n in other.names() {
            if !names.contains(n) {
                names.push(n.clone());
            }
        }
        VarSet(names.into())
    }

    fn check_same(&self, other: &VarSet) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(PolyError::VarSetMismatch(self.0.to_vec(), other.0.to_vec()))
        }
    }
}

impl fmt::Debug for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

/// Coefficient ring for [`Poly`]: a real vector space with a canonical zero.
pub trait Coeff: Clone + fmt::Debug + PartialEq + Send + Sync {
    fn zero() -> Self;
    fn from_f64(c: f64) -> Self;
    fn is_negligible(&self) -> bool;
    fn add_assign(&mut self, other: &Self);
    fn scaled(&self, c: f64) -> Self;
    /// Drops negligible internal parts (no-op for plain reals).
    fn canonicalize(&mut self) {}
}

impl Coeff for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_f64(c: f64) -> Self {
        c
    }
    fn is_negligible(&self) -> bool {
        self.abs() < COEFF_DROP_TOL
    }
    fn add_assign(&mut self, other: &Self) {
        *self += *other;
    }
    fn scaled(&self, c: f64) -> Self {
        self * c
    }
}

/// Closed axis-aligned box, one interval per named variable.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain {
    names: Vec<String>,
    intervals: Vec<(f64, f64)>,
}

impl BoxDomain {
    pub fn new<S: Into<String>>(intervals: impl IntoIterator<Item = (S, f64, f64)>) -> Result<Self> {
        let mut names = Vec::new();
        let mut ivs = Vec::new();
        for (name, lo, hi) in intervals {
            let name = name.into();
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(PolyError::InvalidInterval { var: name, lo, hi });
            }
            if names.contains(&name) {
                return Err(PolyError::DuplicateVariable(name));
            }
            names.push(name);
            ivs.push((lo, hi));
        }
        Ok(BoxDomain { names, intervals: ivs })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn interval(&self, name: &str) -> Option<(f64, f64)> {
        self.names.iter().position(|n| n == name).map(|i| self.intervals[i])
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// Lebesgue measure, the product of interval lengths.
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(lo, hi)| hi - lo).product()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.intervals.len()
            && point.iter().zip(&self.intervals).all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    /// Same intervals under new variable names (positional).
    pub fn renamed<S: Into<String>>(&self, names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() != self.names.len() {
            return Err(PolyError::Dimension(format!(
                "renaming {} box variables with {} names",
                self.names.len(),
                names.len()
            )));
        }
        BoxDomain::new(names.into_iter().zip(&self.intervals).map(|(n, (lo, hi))| (n, *lo, *hi)))
    }

    /// Uniform grid with `per_axis` nodes on each interval (row-major, last axis fastest).
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(1);
        let axes: Vec<Vec<f64>> = self
            .intervals
            .iter()
            .map(|&(lo, hi)| {
                if per_axis == 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    (0..per_axis)
                        .map(|k| lo + (hi - lo) * k as f64 / (per_axis - 1) as f64)
                        .collect()
                }
            })
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            let mut next = Vec::with_capacity(out.len() * axis.len());
            for prefix in &out {
                for &x in axis {
                    let mut p = prefix.clone();
                    p.push(x);
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }
}

/// Sparse multivariate polynomial in canonical form: no stored negligible
/// coefficients, dense exponent vectors indexed by the [`VarSet`].
#[derive(Clone, PartialEq)]
pub struct Poly<C: Coeff = f64> {
    vars: VarSet,
    terms: BTreeMap<Vec<u32>, C>,
}

fn total_degree(e: &[u32]) -> u32 {
    e.iter().sum()
}

/// All exponent vectors in `nvars` variables of total degree at most
/// `degree`, ordered by degree and then lexicographically (first variable
/// highest).
pub fn monomials_up_to(nvars: usize, degree: u32) -> Vec<Vec<u32>> {
    fn fill(prefix: &mut Vec<u32>, left: usize, budget: u32, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            if budget == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        for k in (0..=budget).rev() {
            prefix.push(k);
            fill(prefix, left - 1, budget - k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for d in 0..=degree {
        fill(&mut Vec::with_capacity(nvars), nvars, d, &mut out);
    }
    out
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

impl<C: Coeff> Poly<C> {
    pub fn zero(vars: &VarSet) -> Self {
        Poly { vars: vars.clone(), terms: BTreeMap::new() }
    }

    pub fn constant(vars: &VarSet, c: C) -> Self {
        let mut p = Self::zero(vars);
        p.insert_term(vec![0; vars.len()], c);
        p
    }

    pub fn from_terms(vars: &VarSet, terms: impl IntoIterator<Item = (Vec<u32>, C)>) -> Result<Self> {
        let mut p = Self::zero(vars);
        for (e, c) in terms {
            if e.len() != vars.len() {
                return Err(PolyError::ExponentLength { expected: vars.len(), got: e.len() });
            }
            let d = total_degree(&e);
            if d > MAX_DEGREE {
                return Err(PolyError::DegreeCap(d));
            }
            p.accumulate(e, &c);
        }
        p.canonicalize();
        Ok(p)
    }

    fn insert_term(&mut self, e: Vec<u32>, mut c: C) {
        c.canonicalize();
        if !c.is_negligible() {
            self.terms.insert(e, c);
        }
    }

    fn accumulate(&mut self, e: Vec<u32>, c: &C) {
        self.terms.entry(e).or_insert_with(C::zero).add_assign(c);
    }

    fn canonicalize(&mut self) {
        for c in self.terms.values_mut() {
            c.canonicalize();
        }
        self.terms.retain(|_, c| !c.is_negligible());
    }

    pub fn vars(&self) -> &VarSet {
        &self.vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], &C)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), c))
    }

    pub fn coeff(&self, exponent: &[u32]) -> Option<&C> {
        self.terms.get(exponent)
    }

    /// Total degree; `None` stands for the degree of the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| total_degree(e)).max()
    }

    /// Highest power of the variable at `index` appearing in any term.
    pub fn degree_in(&self, index: usize) -> Option<u32> {
        self.terms.keys().map(|e| e[index]).max()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.vars.check_same(&other.vars)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.accumulate(e.clone(), c);
        }
        out.canonicalize();
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = Self::zero(&self.vars);
        for (e, v) in &self.terms {
            out.insert_term(e.clone(), v.scaled(c));
        }
        out
    }

    /// Product with a real-coefficient polynomial.
    pub fn mul(&self, other: &Poly<f64>) -> Result<Self> {
        self.vars.check_same(&other.vars)?;
        if let (Some(a), Some(b)) = (self.degree(), other.degree()) {
            if a + b > MAX_DEGREE {
                return Err(PolyError::DegreeCap(a + b));
            }
        }
        let mut out = Self::zero(&self.vars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.accumulate(e, &c1.scaled(*c2));
            }
        }
        out.canonicalize();
        Ok(out)
    }

    /// Definite integral over the box intervals of `vars`; the integrated
    /// variables are removed from the result's variable set.
    pub fn integrate_box(&self, vars: &[&str], domain: &BoxDomain) -> Result<Self> {
        let mut idx = Vec::with_capacity(vars.len());
        let mut ivs = Vec::with_capacity(vars.len());
        for v in vars {
            let i = self.vars.index_of(v).ok_or_else(|| PolyError::UnknownVariable(v.to_string()))?;
            let iv = domain.interval(v).ok_or_else(|| PolyError::MissingInterval(v.to_string()))?;
            idx.push(i);
            ivs.push(iv);
        }
        let keep: Vec<usize> = (0..self.vars.len()).filter(|i| !idx.contains(i)).collect();
        let out_vars = VarSet(keep.iter().map(|&i| self.vars.0[i].clone()).collect::<Vec<_>>().into());
        let mut out = Self::zero(&out_vars);
        for (e, c) in &self.terms {
            let mut factor = 1.0;
            for (&i, &(lo, hi)) in idx.iter().zip(&ivs) {
                let k = e[i] as i32 + 1;
                factor *= (hi.powi(k) - lo.powi(k)) / k as f64;
            }
            let ne: Vec<u32> = keep.iter().map(|&i| e[i]).collect();
            out.accumulate(ne, &c.scaled(factor));
        }
        out.canonicalize();
        Ok(out)
    }

    /// Indefinite integral in `var` with lower limit `lo`: the result, as a
    /// function of `var`, is the integral of `self` from `lo` to `var`.
    pub fn integrate_from(&self, var: &str, lo: f64) -> Result<Self> {
        let i = self.vars.index_of(var).ok_or_else(|| PolyError::UnknownVariable(var.to_string()))?;
        let mut out = Self::zero(&self.vars);
        for (e, c) in &self.terms {
            let k = e[i] + 1;
            if total_degree(e) + 1 > MAX_DEGREE {
                return Err(PolyError::DegreeCap(total_degree(e) + 1));
            }
            let mut up = e.clone();
            up[i] = k;
            out.accumulate(up, &c.scaled(1.0 / k as f64));
            let mut low = e.clone();
            low[i] = 0;
            out.accumulate(low, &c.scaled(-lo.powi(k as i32) / k as f64));
        }
        out.canonicalize();
        Ok(out)
    }

    /// Substitutes values for some variables; the result lives on the
    /// remaining variables.
    pub fn substitute(&self, assignment: &[(&str, f64)]) -> Result<Self> {
        let mut fixed = vec![None; self.vars.len()];
        for (name, v) in assignment {
            let i = self.vars.index_of(name).ok_or_else(|| PolyError::UnknownVariable(name.to_string()))?;
            fixed[i] = Some(*v);
        }
        let keep: Vec<usize> = (0..self.vars.len()).filter(|&i| fixed[i].is_none()).collect();
        let out_vars = VarSet(keep.iter().map(|&i| self.vars.0[i].clone()).collect::<Vec<_>>().into());
        let mut out = Self::zero(&out_vars);
        for (e, c) in &self.terms {
            let mut factor = 1.0;
            for (i, f) in fixed.iter().enumerate() {
                if let Some(v) = f {
                    factor *= v.powi(e[i] as i32);
                }
            }
            let ne: Vec<u32> = keep.iter().map(|&i| e[i]).collect();
            out.accumulate(ne, &c.scaled(factor));
        }
        out.canonicalize();
        Ok(out)
    }

    /// Evaluates at a full point given in variable-set order.
    pub fn eval(&self, point: &[f64]) -> Result<C> {
        if point.len() != self.vars.len() {
            return Err(PolyError::PointLength { expected: self.vars.len(), got: point.len() });
        }
        let mut acc = C::zero();
        for (e, c) in &self.terms {
            let m: f64 = e.iter().zip(point).map(|(&k, x)| x.powi(k as i32)).product();
            acc.add_assign(&c.scaled(m));
        }
        Ok(acc)
    }

    /// Evaluates at a point given by name; every variable must be assigned.
    pub fn eval_named(&self, point: &[(&str, f64)]) -> Result<C> {
        let mut full = vec![f64::NAN; self.vars.len()];
        for (name, v) in point {
            let i = self.vars.index_of(name).ok_or_else(|| PolyError::UnknownVariable(name.to_string()))?;
            full[i] = *v;
        }
        if let Some(i) = full.iter().position(|x| x.is_nan()) {
            return Err(PolyError::UnknownVariable(format!("{} (unassigned)", self.vars.0[i])));
        }
        self.eval(&full)
    }

    /// Renames variables; exponent data is untouched.
    pub fn rename_vars(&self, map: &[(&str, &str)]) -> Result<Self> {
        let mut names: Vec<String> = self.vars.names().to_vec();
        for (old, new) in map {
            let i = self.vars.index_of(old).ok_or_else(|| PolyError::UnknownVariable(old.to_string()))?;
            names[i] = new.to_string();
        }
        let vars = VarSet::new(names)?;
        Ok(Poly { vars, terms: self.terms.clone() })
    }

    /// Re-expresses the polynomial over a larger variable set containing all
    /// of its variables (by name).
    pub fn embed(&self, target: &VarSet) -> Result<Self> {
        if &self.vars == target {
            return Ok(self.clone());
        }
        let map: Vec<usize> = self
            .vars
            .names()
            .iter()
            .map(|n| target.index_of(n).ok_or_else(|| PolyError::UnknownVariable(n.clone())))
            .collect::<Result<_>>()?;
        let mut out = Self::zero(target);
        for (e, c) in &self.terms {
            let mut ne = vec![0; target.len()];
            for (k, &j) in map.iter().enumerate() {
                ne[j] = e[k];
            }
            out.terms.insert(ne, c.clone());
        }
        Ok(out)
    }

    /// Affine change of variables `x_k -> offset_k + scale_k * x_k` for the
    /// listed variables.
    pub fn affine_substitute(&self, maps: &[(&str, f64, f64)]) -> Result<Self> {
        let mut spec: Vec<Option<(f64, f64)>> = vec![None; self.vars.len()];
        for (name, off, sc) in maps {
            let i = self.vars.index_of(name).ok_or_else(|| PolyError::UnknownVariable(name.to_string()))?;
            spec[i] = Some((*off, *sc));
        }
        let mut out = Self::zero(&self.vars);
        for (e, c) in &self.terms {
            // expand prod_k (off_k + sc_k x_k)^{e_k}
            let mut partial: Vec<(Vec<u32>, f64)> = vec![(vec![0; e.len()], 1.0)];
            for (k, &ek) in e.iter().enumerate() {
                match spec[k] {
                    None => {
                        for (pe, _) in partial.iter_mut() {
                            pe[k] = ek;
                        }
                    }
                    Some((off, sc)) => {
                        let mut next = Vec::with_capacity(partial.len() * (ek as usize + 1));
                        for (pe, pc) in &partial {
                            for j in 0..=ek {
                                let w = binomial(ek, j) * off.powi((ek - j) as i32) * sc.powi(j as i32);
                                if w == 0.0 {
                                    continue;
                                }
                                let mut ne = pe.clone();
                                ne[k] = j;
                                next.push((ne, pc * w));
                            }
                        }
                        partial = next;
                    }
                }
            }
            for (ne, w) in partial {
                out.accumulate(ne, &c.scaled(w));
            }
        }
        out.canonicalize();
        Ok(out)
    }

    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D) -> Poly<D> {
        let mut out = Poly::<D>::zero(&self.vars);
        for (e, c) in &self.terms {
            out.insert_term(e.clone(), f(c));
        }
        out
    }
}

impl Poly<f64> {
    /// The polynomial consisting of the single variable `name`.
    pub fn var(vars: &VarSet, name: &str) -> Result<Self> {
        let i = vars.index_of(name).ok_or_else(|| PolyError::UnknownVariable(name.to_string()))?;
        let mut e = vec![0; vars.len()];
        e[i] = 1;
        Ok(Self::monomial(vars, e, 1.0))
    }

    pub fn monomial(vars: &VarSet, exponent: Vec<u32>, c: f64) -> Self {
        assert_eq!(exponent.len(), vars.len(), "exponent length");
        let mut p = Self::zero(vars);
        p.insert_term(exponent, c);
        p
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Coefficient-wise comparison within an absolute tolerance.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        match self.sub(other) {
            Ok(d) => d.max_abs_coeff() <= tol,
            Err(_) => false,
        }
    }
}

impl<C: Coeff> fmt::Debug for Poly<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Poly").field("vars", &self.vars).field("terms", &self.terms).finish()
    }
}

impl fmt::Display for Poly<f64> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (k, (e, c)) in self.terms.iter().enumerate() {
            let key = text::monomial_key(&self.vars, e);
            let (sign, mag) = if *c < 0.0 { ("-", -c) } else { ("+", *c) };
            if k == 0 {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if key == "1" {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{key}")?;
            } else {
                write!(f, "{mag}*{key}")?;
            }
        }
        Ok(())
    }
}
