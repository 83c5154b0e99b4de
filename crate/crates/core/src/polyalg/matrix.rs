use nalgebra::DMatrix;

use super::{BoxDomain, Coeff, Poly, PolyError, Result, VarSet};

/// Dense matrix of polynomials sharing one variable set (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMatrix<C: Coeff = f64> {
    vars: VarSet,
    rows: usize,
    cols: usize,
    entries: Vec<Poly<C>>,
}

impl<C: Coeff> PolyMatrix<C> {
    pub fn zeros(vars: &VarSet, rows: usize, cols: usize) -> Self {
        PolyMatrix { vars: vars.clone(), rows, cols, entries: vec![Poly::zero(vars); rows * cols] }
    }

    pub fn identity(vars: &VarSet, n: usize) -> Self {
        Self::scaled_identity(vars, n, 1.0)
    }

    pub fn scaled_identity(vars: &VarSet, n: usize, c: f64) -> Self {
        let mut m = Self::zeros(vars, n, n);
        for i in 0..n {
            m.entries[i * n + i] = Poly::constant(vars, C::from_f64(c));
        }
        m
    }

    pub fn from_entries(vars: &VarSet, rows: usize, cols: usize, entries: Vec<Poly<C>>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(PolyError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        for e in &entries {
            e.vars.check_same(vars)?;
        }
        Ok(PolyMatrix { vars: vars.clone(), rows, cols, entries })
    }

    pub fn from_fn(vars: &VarSet, rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Poly<C>) -> Result<Self> {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self::from_entries(vars, rows, cols, entries)
    }

    /// Assembles a block matrix; every block row must have matching heights
    /// and every block column matching widths.
    pub fn from_blocks(blocks: &[Vec<PolyMatrix<C>>]) -> Result<Self> {
        let first = blocks
            .first()
            .and_then(|r| r.first())
            .ok_or_else(|| PolyError::Dimension("empty block matrix".into()))?;
        let vars = first.vars.clone();
        let widths: Vec<usize> = blocks[0].iter().map(|b| b.cols).collect();
        let rows: usize = blocks.iter().map(|r| r[0].rows).sum();
        let cols: usize = widths.iter().sum();
        let mut out = Self::zeros(&vars, rows, cols);
        let mut r0 = 0;
        for brow in blocks {
            if brow.len() != widths.len() {
                return Err(PolyError::Dimension("ragged block rows".into()));
            }
            let h = brow[0].rows;
            let mut c0 = 0;
            for (b, &w) in brow.iter().zip(&widths) {
                if b.rows != h || b.cols != w {
                    return Err(PolyError::Dimension(format!(
                        "block {}x{} does not fit slot {h}x{w}",
                        b.rows, b.cols
                    )));
                }
                b.vars.check_same(&vars)?;
                for i in 0..h {
                    for j in 0..w {
                        out.entries[(r0 + i) * cols + c0 + j] = b.entries[i * w + j].clone();
                    }
                }
                c0 += w;
            }
            r0 += h;
        }
        Ok(out)
    }

    pub fn vars(&self) -> &VarSet {
        &self.vars
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Poly<C> {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Poly<C>) -> Result<()> {
        p.vars.check_same(&self.vars)?;
        self.entries[i * self.cols + j] = p;
        Ok(())
    }

    pub fn entries(&self) -> &[Poly<C>] {
        &self.entries
    }

    pub fn degree(&self) -> Option<u32> {
        self.entries.iter().filter_map(|e| e.degree()).max()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.is_zero())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(&self.vars, self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.entries[j * self.rows + i] = self.entries[i * self.cols + j].clone();
            }
        }
        out
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        self.vars.check_same(&other.vars)?;
        if self.rows != other.rows || self.cols != other.cols {
            return Err(PolyError::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a.add(b)).collect::<Result<_>>()?;
        Ok(PolyMatrix { entries, ..self.clone_shape() })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        PolyMatrix { entries: self.entries.iter().map(|e| e.scale(c)).collect(), ..self.clone_shape() }
    }

    fn clone_shape(&self) -> Self {
        PolyMatrix { vars: self.vars.clone(), rows: self.rows, cols: self.cols, entries: Vec::new() }
    }

    /// Entry-wise product with a scalar real polynomial.
    pub fn mul_poly(&self, p: &Poly<f64>) -> Result<Self> {
        let entries = self.entries.iter().map(|e| e.mul(p)).collect::<Result<_>>()?;
        Ok(PolyMatrix { entries, ..self.clone_shape() })
    }

    /// `self * rhs` with a real-coefficient right factor.
    pub fn mul_right(&self, rhs: &PolyMatrix<f64>) -> Result<Self> {
        self.vars.check_same(&rhs.vars)?;
        if self.cols != rhs.rows {
            return Err(PolyError::Dimension(format!(
                "product {}x{} * {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(&self.vars, self.rows, rhs.cols);
        for i in 0..self.rows {
            for j in 0..rhs.cols {
                let mut acc = Poly::zero(&self.vars);
                for k in 0..self.cols {
                    let a = &self.entries[i * self.cols + k];
                    let b = &rhs.entries[k * rhs.cols + j];
                    if a.is_zero() || b.is_zero() {
                        continue;
                    }
                    acc = acc.add(&a.mul(b)?)?;
                }
                out.entries[i * rhs.cols + j] = acc;
            }
        }
        Ok(out)
    }

    /// `lhs * self` with a real-coefficient left factor.
    pub fn mul_left(&self, lhs: &PolyMatrix<f64>) -> Result<Self> {
        Ok(self.transpose().mul_right(&lhs.transpose())?.transpose())
    }

    /// `M + M^T`.
    pub fn he(&self) -> Result<Self> {
        self.add(&self.transpose())
    }

    /// Symmetric part `(M + M^T) / 2`.
    pub fn symmetrize(&self) -> Result<Self> {
        Ok(self.he()?.scale(0.5))
    }

    pub fn integrate_box(&self, vars: &[&str], domain: &BoxDomain) -> Result<Self> {
        let entries: Vec<Poly<C>> =
            self.entries.iter().map(|e| e.integrate_box(vars, domain)).collect::<Result<_>>()?;
        let out_vars = match entries.first() {
            Some(e) => e.vars.clone(),
            None => Poly::<C>::zero(&self.vars).integrate_box(vars, domain)?.vars,
        };
        Ok(PolyMatrix { vars: out_vars, rows: self.rows, cols: self.cols, entries })
    }

    pub fn substitute(&self, assignment: &[(&str, f64)]) -> Result<Self> {
        let entries: Vec<Poly<C>> = self.entries.iter().map(|e| e.substitute(assignment)).collect::<Result<_>>()?;
        let out_vars = match entries.first() {
            Some(e) => e.vars.clone(),
            None => Poly::<C>::zero(&self.vars).substitute(assignment)?.vars,
        };
        Ok(PolyMatrix { vars: out_vars, rows: self.rows, cols: self.cols, entries })
    }

    pub fn rename_vars(&self, map: &[(&str, &str)]) -> Result<Self> {
        let vars = Poly::<C>::zero(&self.vars).rename_vars(map)?.vars;
        let entries = self.entries.iter().map(|e| e.rename_vars(map)).collect::<Result<_>>()?;
        Ok(PolyMatrix { vars, rows: self.rows, cols: self.cols, entries })
    }

    pub fn embed(&self, target: &VarSet) -> Result<Self> {
        let entries = self.entries.iter().map(|e| e.embed(target)).collect::<Result<_>>()?;
        Ok(PolyMatrix { vars: target.clone(), rows: self.rows, cols: self.cols, entries })
    }

    pub fn affine_substitute(&self, maps: &[(&str, f64, f64)]) -> Result<Self> {
        let entries = self.entries.iter().map(|e| e.affine_substitute(maps)).collect::<Result<_>>()?;
        Ok(PolyMatrix { entries, ..self.clone_shape() })
    }

    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D + Copy) -> PolyMatrix<D> {
        PolyMatrix {
            vars: self.vars.clone(),
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| e.map_coeffs(f)).collect(),
        }
    }

    /// Term-for-term symmetry (exact, on canonical forms).
    pub fn is_symmetric(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

impl PolyMatrix<f64> {
    pub fn from_constant(vars: &VarSet, m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(vars, m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.entries[i * m.ncols() + j] = Poly::constant(vars, m[(i, j)]);
            }
        }
        out
    }

    pub fn eval(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = self.entries[i * self.cols + j].eval(point)?;
            }
        }
        Ok(m)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.max_abs_coeff()))
    }

    /// Symmetry within an absolute coefficient tolerance.
    pub fn is_symmetric_within(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j).approx_eq(self.get(j, i), tol)))
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.check_shape(other).is_ok()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| a.approx_eq(b, tol))
    }

    /// Full matrix product of two real polynomial matrices.
    pub fn matmul(&self, rhs: &PolyMatrix<f64>) -> Result<Self> {
        self.mul_right(rhs)
    }

    /// Determinant by cofactor expansion (intended for n <= 6).
    pub fn det(&self) -> Result<Poly<f64>> {
        if !self.is_square() {
            return Err(PolyError::Dimension("determinant of a non-square matrix".into()));
        }
        let idx: Vec<usize> = (0..self.rows).collect();
        self.minor_det(&idx, &idx)
    }

    fn minor_det(&self, rows: &[usize], cols: &[usize]) -> Result<Poly<f64>> {
        match rows.len() {
            0 => Ok(Poly::constant(&self.vars, 1.0)),
            1 => Ok(self.get(rows[0], cols[0]).clone()),
            _ => {
                let mut acc = Poly::zero(&self.vars);
                let r = rows[0];
                let sub_rows = &rows[1..];
                for (k, &c) in cols.iter().enumerate() {
                    let a = self.get(r, c);
                    if a.is_zero() {
                        continue;
                    }
                    let sub_cols: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
                    let m = a.mul(&self.minor_det(sub_rows, &sub_cols)?)?;
                    acc = if k % 2 == 0 { acc.add(&m)? } else { acc.sub(&m)? };
                }
                Ok(acc)
            }
        }
    }

    /// Adjugate (transposed cofactor matrix); `self * adj = det * I`.
    pub fn adjugate(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(PolyError::Dimension("adjugate of a non-square matrix".into()));
        }
        let n = self.rows;
        let mut out = Self::zeros(&self.vars, n, n);
        if n == 1 {
            out.entries[0] = Poly::constant(&self.vars, 1.0);
            return Ok(out);
        }
        for i in 0..n {
            for j in 0..n {
                let rows: Vec<usize> = (0..n).filter(|&r| r != j).collect();
                let cols: Vec<usize> = (0..n).filter(|&c| c != i).collect();
                let m = self.minor_det(&rows, &cols)?;
                out.entries[i * n + j] = if (i + j) % 2 == 0 { m } else { m.neg() };
            }
        }
        Ok(out)
    }
}
