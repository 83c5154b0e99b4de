//! Homogeneous self-dual primal-dual interior point method.
//!
//! The embedding solved is
//!
//! ```text
//!   A(X) + A_f x_f - b tau            = 0
//!   A*(y) + S - C tau                 = 0
//!   A_f^T y - c_f tau                 = 0
//!   <C, X> + c_f^T x_f - b^T y + kappa = 0
//!   X, S in K,  tau, kappa >= 0
//! ```
//!
//! where `x_f` collects free variables recognised in the input as split
//! pairs of nonnegative variables. Directions use the HKM scaling with a
//! Mehrotra predictor-corrector; the Newton system is reduced to the Schur
//! complement bordered by the free columns and the `tau` column, which is
//! solved by dense LU.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::{BlockKind, BlockValue, IterationLog, SdpError, SdpProblem, SdpSolution, SolveStatus, SolverOptions};

#[derive(Clone, Debug, Default)]
struct Row {
    psd: Vec<(usize, usize, usize, f64)>,
    lp: Vec<(usize, f64)>,
    free: Vec<(usize, f64)>,
}

impl Row {
    fn max_abs(&self) -> f64 {
        self.psd
            .iter()
            .map(|e| e.3.abs())
            .chain(self.lp.iter().map(|e| e.1.abs()))
            .chain(self.free.iter().map(|e| e.1.abs()))
            .fold(0.0, f64::max)
    }

    fn scale(&mut self, s: f64) {
        self.psd.iter_mut().for_each(|e| e.3 *= s);
        self.lp.iter_mut().for_each(|e| e.1 *= s);
        self.free.iter_mut().for_each(|e| e.1 *= s);
    }
}

/// Where each nonnegative scalar of the original problem went.
#[derive(Clone, Copy, Debug)]
enum LpSlot {
    Kept(usize),
    FreePos(usize),
    FreeNeg(usize),
}

struct Workspace {
    psd_sizes: Vec<usize>,
    psd_orig: Vec<usize>,
    nl: usize,
    nf: usize,
    rows: Vec<Row>,
    b: DVector<f64>,
    row_scale: Vec<f64>,
    kept_rows: Vec<usize>,
    c_psd: Vec<DMatrix<f64>>,
    c_lp: DVector<f64>,
    c_free: DVector<f64>,
    /// (original block, index) -> slot
    lp_slots: HashMap<(usize, usize), LpSlot>,
    /// per psd block: rows touching it with their local entries
    block_rows: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
    /// per lp index: rows touching it
    lp_cols: Vec<Vec<(usize, f64)>>,
}

#[derive(Clone)]
struct Iterate {
    x: Vec<DMatrix<f64>>,
    xl: DVector<f64>,
    xf: DVector<f64>,
    y: DVector<f64>,
    s: Vec<DMatrix<f64>>,
    sl: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    x: Vec<DMatrix<f64>>,
    xl: DVector<f64>,
    xf: DVector<f64>,
    y: DVector<f64>,
    s: Vec<DMatrix<f64>>,
    sl: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Residuals {
    rp: DVector<f64>,
    rd: Vec<DMatrix<f64>>,
    rdl: DVector<f64>,
    rf: DVector<f64>,
    rg: f64,
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

fn inf_norm_mat(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

fn inf_norm_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

impl Workspace {
    fn build(p: &SdpProblem) -> Result<(Workspace, Option<DVector<f64>>), SdpError> {
        p.validate()?;
        if p.constraints.is_empty() {
            return Err(SdpError::Structure("problem has no constraints".into()));
        }
        let m0 = p.constraints.len();

        // psd blocks and global lp numbering
        let mut psd_sizes = Vec::new();
        let mut psd_orig = Vec::new();
        let mut psd_index = vec![usize::MAX; p.blocks.len()];
        let mut lp_global: Vec<(usize, usize)> = Vec::new();
        let mut lp_offset = vec![0usize; p.blocks.len()];
        for (bi, b) in p.blocks.iter().enumerate() {
            match *b {
                BlockKind::Psd(n) => {
                    psd_index[bi] = psd_sizes.len();
                    psd_sizes.push(n);
                    psd_orig.push(bi);
                }
                BlockKind::Diag(n) => {
                    lp_offset[bi] = lp_global.len();
                    lp_global.extend((0..n).map(|i| (bi, i)));
                }
            }
        }

        // columns of the lp scalars, used to recognise split free variables
        let nlg = lp_global.len();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nlg];
        let mut c_global = vec![0.0; nlg];
        for (k, c) in p.constraints.iter().enumerate() {
            for e in &c.entries {
                if let BlockKind::Diag(_) = p.blocks[e.block] {
                    cols[lp_offset[e.block] + e.i].push((k, e.v));
                }
            }
        }
        for e in &p.objective {
            if let BlockKind::Diag(_) = p.blocks[e.block] {
                c_global[lp_offset[e.block] + e.i] += e.v;
            }
        }
        for col in cols.iter_mut() {
            col.sort_by_key(|e| e.0);
            // merge duplicate rows
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
            for &(k, v) in col.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == k => last.1 += v,
                    _ => merged.push((k, v)),
                }
            }
            merged.retain(|e| e.1 != 0.0);
            *col = merged;
        }
        let mut slot_of = vec![None; nlg];
        let mut nf = 0usize;
        {
            // signature normalised so that the first nonzero is positive
            let mut waiting: HashMap<Vec<u64>, Vec<(usize, bool)>> = HashMap::new();
            for j in 0..nlg {
                if cols[j].is_empty() {
                    continue;
                }
                let sign = cols[j][0].1.signum();
                let mut key = Vec::with_capacity(2 * cols[j].len() + 1);
                for &(k, v) in &cols[j] {
                    key.push(k as u64);
                    key.push((v * sign).to_bits());
                }
                key.push((c_global[j] * sign + 0.0).to_bits());
                let positive = sign > 0.0;
                let list = waiting.entry(key).or_default();
                if let Some(pos) = list.iter().position(|&(_, pz)| pz != positive) {
                    let (q, _) = list.swap_remove(pos);
                    // x_free = x_j - x_q, column of j
                    slot_of[j] = Some(LpSlot::FreePos(nf));
                    slot_of[q] = Some(LpSlot::FreeNeg(nf));
                    nf += 1;
                } else {
                    list.push((j, positive));
                }
            }
        }
        let mut nl = 0usize;
        for s in slot_of.iter_mut() {
            if s.is_none() {
                *s = Some(LpSlot::Kept(nl));
                nl += 1;
            }
        }
        let mut lp_slots = HashMap::new();
        for (g, &(bi, i)) in lp_global.iter().enumerate() {
            lp_slots.insert((bi, i), slot_of[g].expect("assigned"));
        }

        let mut rows = vec![Row::default(); m0];
        let mut b = DVector::zeros(m0);
        for (k, c) in p.constraints.iter().enumerate() {
            b[k] = c.rhs;
            let mut free_acc: HashMap<usize, f64> = HashMap::new();
            let mut lp_acc: HashMap<usize, f64> = HashMap::new();
            for e in &c.entries {
                match p.blocks[e.block] {
                    BlockKind::Psd(_) => rows[k].psd.push((psd_index[e.block], e.i, e.j, e.v)),
                    BlockKind::Diag(_) => match lp_slots[&(e.block, e.i)] {
                        LpSlot::Kept(i) => *lp_acc.entry(i).or_default() += e.v,
                        LpSlot::FreePos(f) => *free_acc.entry(f).or_default() += e.v,
                        LpSlot::FreeNeg(_) => {}
                    },
                }
            }
            let mut lp: Vec<(usize, f64)> = lp_acc.into_iter().filter(|e| e.1 != 0.0).collect();
            lp.sort_by_key(|e| e.0);
            let mut fr: Vec<(usize, f64)> = free_acc.into_iter().filter(|e| e.1 != 0.0).collect();
            fr.sort_by_key(|e| e.0);
            rows[k].lp = lp;
            rows[k].free = fr;
        }

        let mut c_psd: Vec<DMatrix<f64>> = psd_sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        let mut c_lp = DVector::zeros(nl);
        let mut c_free = DVector::zeros(nf);
        for e in &p.objective {
            match p.blocks[e.block] {
                BlockKind::Psd(_) => {
                    let m = &mut c_psd[psd_index[e.block]];
                    m[(e.i, e.j)] += e.v;
                    if e.i != e.j {
                        m[(e.j, e.i)] += e.v;
                    }
                }
                BlockKind::Diag(_) => match lp_slots[&(e.block, e.i)] {
                    LpSlot::Kept(i) => c_lp[i] += e.v,
                    LpSlot::FreePos(f) => c_free[f] += e.v,
                    LpSlot::FreeNeg(_) => {}
                },
            }
        }

        // rows with only free entries may be linearly dependent
        let (kept_rows, certificate) = presolve_free_rows(&rows, &b, nf);
        if let Some(cert) = certificate {
            return Ok((
                Workspace {
                    psd_sizes,
                    psd_orig,
                    nl,
                    nf,
                    rows: Vec::new(),
                    b: DVector::zeros(0),
                    row_scale: Vec::new(),
                    kept_rows: Vec::new(),
                    c_psd,
                    c_lp,
                    c_free,
                    lp_slots,
                    block_rows: Vec::new(),
                    lp_cols: Vec::new(),
                },
                Some(cert),
            ));
        }
        let mut rows: Vec<Row> = kept_rows.iter().map(|&k| rows[k].clone()).collect();
        let mut b = DVector::from_iterator(kept_rows.len(), kept_rows.iter().map(|&k| b[k]));
        let mut row_scale = vec![1.0; rows.len()];
        for (k, r) in rows.iter_mut().enumerate() {
            let mx = r.max_abs();
            if mx > 0.0 {
                let s = 1.0 / mx;
                r.scale(s);
                b[k] *= s;
                row_scale[k] = s;
            }
        }

        let mut block_rows: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>> = vec![Vec::new(); psd_sizes.len()];
        for (k, r) in rows.iter().enumerate() {
            let mut per: HashMap<usize, Vec<(usize, usize, f64)>> = HashMap::new();
            for &(bi, i, j, v) in &r.psd {
                per.entry(bi).or_default().push((i, j, v));
            }
            let mut keys: Vec<usize> = per.keys().copied().collect();
            keys.sort_unstable();
            for bi in keys {
                block_rows[bi].push((k, per.remove(&bi).unwrap_or_default()));
            }
        }
        let mut lp_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nl];
        for (k, r) in rows.iter().enumerate() {
            for &(i, v) in &r.lp {
                lp_cols[i].push((k, v));
            }
        }

        Ok((
            Workspace {
                psd_sizes,
                psd_orig,
                nl,
                nf,
                rows,
                b,
                row_scale,
                kept_rows,
                c_psd,
                c_lp,
                c_free,
                lp_slots,
                block_rows,
                lp_cols,
            },
            None,
        ))
    }

    fn m(&self) -> usize {
        self.rows.len()
    }

    fn nu(&self) -> f64 {
        (self.psd_sizes.iter().sum::<usize>() + self.nl) as f64
    }

    fn a_op(&self, x: &[DMatrix<f64>], xl: &DVector<f64>, xf: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.rows.iter().map(|r| {
                let mut acc = 0.0;
                for &(bi, i, j, v) in &r.psd {
                    acc += if i == j { v * x[bi][(i, i)] } else { v * (x[bi][(i, j)] + x[bi][(j, i)]) };
                }
                for &(i, v) in &r.lp {
                    acc += v * xl[i];
                }
                for &(f, v) in &r.free {
                    acc += v * xf[f];
                }
                acc
            }),
        )
    }

    fn a_psd_lp(&self, x: &[DMatrix<f64>], xl: &DVector<f64>) -> DVector<f64> {
        self.a_op(x, xl, &DVector::zeros(self.nf))
    }

    fn a_adj(&self, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>) {
        let mut mats: Vec<DMatrix<f64>> = self.psd_sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        let mut vl = DVector::zeros(self.nl);
        let mut vf = DVector::zeros(self.nf);
        for (k, r) in self.rows.iter().enumerate() {
            let yk = y[k];
            if yk == 0.0 {
                continue;
            }
            for &(bi, i, j, v) in &r.psd {
                mats[bi][(i, j)] += yk * v;
                if i != j {
                    mats[bi][(j, i)] += yk * v;
                }
            }
            for &(i, v) in &r.lp {
                vl[i] += yk * v;
            }
            for &(f, v) in &r.free {
                vf[f] += yk * v;
            }
        }
        (mats, vl, vf)
    }

    fn residuals(&self, it: &Iterate) -> Residuals {
        let rp = self.a_op(&it.x, &it.xl, &it.xf) - &self.b * it.tau;
        let (ay, ayl, ayf) = self.a_adj(&it.y);
        let rd: Vec<DMatrix<f64>> =
            (0..self.psd_sizes.len()).map(|b| &ay[b] + &it.s[b] - &self.c_psd[b] * it.tau).collect();
        let rdl = ayl + &it.sl - &self.c_lp * it.tau;
        let rf = ayf - &self.c_free * it.tau;
        let rg = self.cx(&it.x, &it.xl, &it.xf) - self.b.dot(&it.y) + it.kappa;
        Residuals { rp, rd, rdl, rf, rg }
    }

    fn cx(&self, x: &[DMatrix<f64>], xl: &DVector<f64>, xf: &DVector<f64>) -> f64 {
        x.iter().zip(&self.c_psd).map(|(a, c)| dot(a, c)).sum::<f64>() + self.c_lp.dot(xl) + self.c_free.dot(xf)
    }

    fn schur(&self, x: &[DMatrix<f64>], sinv: &[DMatrix<f64>], dl: &DVector<f64>) -> DMatrix<f64> {
        let m = self.m();
        let mut mm = DMatrix::zeros(m, m);
        for (bi, list) in self.block_rows.iter().enumerate() {
            let n = self.psd_sizes[bi];
            let xb = &x[bi];
            let sb = &sinv[bi];
            for (t, (k, ents)) in list.iter().enumerate() {
                // G = X A_k S^{-1}, computed through the rows of A_k S^{-1}
                let mut support: Vec<usize> = Vec::new();
                for &(i, j, _) in ents {
                    if !support.contains(&i) {
                        support.push(i);
                    }
                    if !support.contains(&j) {
                        support.push(j);
                    }
                }
                let mut t_r = DMatrix::zeros(support.len(), n);
                for &(i, j, v) in ents {
                    let pi = support.iter().position(|&s| s == i).unwrap_or(0);
                    let pj = support.iter().position(|&s| s == j).unwrap_or(0);
                    for c in 0..n {
                        t_r[(pi, c)] += v * sb[(j, c)];
                    }
                    if i != j {
                        for c in 0..n {
                            t_r[(pj, c)] += v * sb[(i, c)];
                        }
                    }
                }
                let mut x_r = DMatrix::zeros(n, support.len());
                for (c, &s) in support.iter().enumerate() {
                    x_r.set_column(c, &xb.column(s));
                }
                let g = x_r * t_r;
                for (l, ents_l) in list[t..].iter() {
                    let mut val = 0.0;
                    for &(i, j, v) in ents_l {
                        val += if i == j { v * g[(i, i)] } else { v * (g[(i, j)] + g[(j, i)]) };
                    }
                    mm[(*k, *l)] += val;
                    if l != k {
                        mm[(*l, *k)] += val;
                    }
                }
            }
        }
        for (i, col) in self.lp_cols.iter().enumerate() {
            let d = dl[i];
            for &(k, a) in col {
                for &(l, c) in col {
                    mm[(k, l)] += a * c * d;
                }
            }
        }
        // enforce exact symmetry
        let mt = mm.transpose();
        (mm + mt) * 0.5
    }
}

/// Removes dependent rows among those touching only free variables.
/// Returns the kept row indices, or a primal infeasibility ray `y` when the
/// dependent rows are inconsistent.
fn presolve_free_rows(rows: &[Row], b: &DVector<f64>, nf: usize) -> (Vec<usize>, Option<DVector<f64>>) {
    let candidates: Vec<usize> = (0..rows.len()).filter(|&k| rows[k].psd.is_empty() && rows[k].lp.is_empty()).collect();
    if candidates.is_empty() {
        return ((0..rows.len()).collect(), None);
    }
    let nc = candidates.len();
    // augmented [A_f | b | I] on candidate rows, eliminated row by row
    let width = nf + 1 + nc;
    let mut mat = DMatrix::zeros(nc, width);
    for (r, &k) in candidates.iter().enumerate() {
        for &(f, v) in &rows[k].free {
            mat[(r, f)] = v;
        }
        mat[(r, nf)] = b[k];
        mat[(r, nf + 1 + r)] = 1.0;
    }
    let scale = mat.columns(0, nf).iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let tol = 1e-10 * scale;
    let mut pivot_rows: Vec<usize> = Vec::new();
    let mut used = vec![false; nc];
    for col in 0..nf {
        let mut best = None;
        let mut best_val = tol;
        for r in 0..nc {
            if !used[r] && mat[(r, col)].abs() > best_val {
                best_val = mat[(r, col)].abs();
                best = Some(r);
            }
        }
        let Some(pr) = best else { continue };
        used[pr] = true;
        pivot_rows.push(pr);
        let pivot = mat.row(pr).clone_owned();
        for r in 0..nc {
            if r != pr && mat[(r, col)] != 0.0 {
                let f = mat[(r, col)] / pivot[col];
                let newrow = mat.row(r) - &pivot * f;
                mat.set_row(r, &newrow);
            }
        }
    }
    let mut drop = vec![false; rows.len()];
    for r in 0..nc {
        if used[r] {
            continue;
        }
        let rhs = mat[(r, nf)];
        let bscale = candidates.iter().map(|&k| b[k].abs()).fold(1.0, f64::max);
        if rhs.abs() > 1e-9 * bscale {
            // combination of rows with zero left-hand side and nonzero right-hand side
            let mut y = DVector::zeros(rows.len());
            for (c, &k) in candidates.iter().enumerate() {
                y[k] = mat[(r, nf + 1 + c)] / rhs;
            }
            return (Vec::new(), Some(y));
        }
        drop[candidates[r]] = true;
    }
    ((0..rows.len()).filter(|&k| !drop[k]).collect(), None)
}

fn max_step_psd(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Option<f64> {
    let chol = x.clone().cholesky()?;
    let l = chol.l();
    let w1 = l.solve_lower_triangular(dx)?;
    let w = l.solve_lower_triangular(&w1.transpose())?;
    let lmin = sym(&w).symmetric_eigenvalues().min();
    Some(if lmin < 0.0 { -1.0 / lmin } else { f64::INFINITY })
}

fn max_step_vec(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

fn max_step_scalar(x: f64, dx: f64) -> f64 {
    if dx < 0.0 {
        -x / dx
    } else {
        f64::INFINITY
    }
}

fn max_step(it: &Iterate, d: &Direction) -> Option<f64> {
    let mut a = f64::INFINITY;
    for (x, dx) in it.x.iter().zip(&d.x) {
        a = a.min(max_step_psd(x, dx)?);
    }
    for (s, ds) in it.s.iter().zip(&d.s) {
        a = a.min(max_step_psd(s, ds)?);
    }
    a = a.min(max_step_vec(&it.xl, &d.xl)).min(max_step_vec(&it.sl, &d.sl));
    a = a.min(max_step_scalar(it.tau, d.tau)).min(max_step_scalar(it.kappa, d.kappa));
    Some(a)
}

struct Factorization {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    sinv: Vec<DMatrix<f64>>,
    dc: Vec<DMatrix<f64>>,
    dcl: DVector<f64>,
}

fn hkm(x: &DMatrix<f64>, v: &DMatrix<f64>, sinv: &DMatrix<f64>) -> DMatrix<f64> {
    sym(&(x * v * sinv))
}

impl Workspace {
    fn factor(&self, it: &Iterate) -> Option<Factorization> {
        let sinv: Vec<DMatrix<f64>> =
            it.s.iter().map(|s| s.clone().cholesky().map(|c| sym(&c.inverse()))).collect::<Option<_>>()?;
        let dl = it.xl.component_div(&it.sl);
        let mm = self.schur(&it.x, &sinv, &dl);
        let dc: Vec<DMatrix<f64>> = (0..self.psd_sizes.len()).map(|b| hkm(&it.x[b], &self.c_psd[b], &sinv[b])).collect();
        let dcl = dl.component_mul(&self.c_lp);
        let w = self.a_psd_lp(&dc, &dcl);
        let cc = dc.iter().zip(&self.c_psd).map(|(a, c)| dot(a, c)).sum::<f64>() + dcl.dot(&self.c_lp);

        let m = self.m();
        let nf = self.nf;
        let n = m + nf + 1;
        let mut k = DMatrix::zeros(n, n);
        k.view_mut((0, 0), (m, m)).copy_from(&mm);
        for (r, row) in self.rows.iter().enumerate() {
            for &(f, v) in &row.free {
                k[(r, m + f)] = v;
                k[(m + f, r)] = v;
            }
        }
        for r in 0..m {
            k[(r, n - 1)] = -(w[r] + self.b[r]);
            k[(n - 1, r)] = w[r] - self.b[r];
        }
        for f in 0..nf {
            k[(m + f, n - 1)] = -self.c_free[f];
            k[(n - 1, m + f)] = self.c_free[f];
        }
        k[(n - 1, n - 1)] = -(cc + it.kappa / it.tau);
        let lu = k.lu();
        if !lu.is_invertible() {
            return None;
        }
        Some(Factorization { lu, sinv, dc, dcl })
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        it: &Iterate,
        fac: &Factorization,
        res: &Residuals,
        sigma: f64,
        eta: f64,
        mu: f64,
        corr: Option<&Direction>,
    ) -> Option<Direction> {
        let nb = self.psd_sizes.len();
        let m = self.m();
        let nf = self.nf;
        // constant part K0 of dX
        let mut k0: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        for b in 0..nb {
            let mut v = &fac.sinv[b] * (sigma * mu) - &it.x[b] + hkm(&it.x[b], &res.rd[b], &fac.sinv[b]) * eta;
            if let Some(c) = corr {
                v -= sym(&(&c.x[b] * &c.s[b] * &fac.sinv[b]));
            }
            k0.push(v);
        }
        let mut k0l = DVector::from_iterator(
            self.nl,
            (0..self.nl).map(|i| {
                let (x, s) = (it.xl[i], it.sl[i]);
                sigma * mu / s - x + eta * x * res.rdl[i] / s
            }),
        );
        if let Some(c) = corr {
            for i in 0..self.nl {
                k0l[i] -= c.xl[i] * c.sl[i] / it.sl[i];
            }
        }
        let tk_corr = corr.map_or(0.0, |c| c.tau * c.kappa);

        let mut rhs = DVector::zeros(m + nf + 1);
        let ak0 = self.a_psd_lp(&k0, &k0l);
        for r in 0..m {
            rhs[r] = -eta * res.rp[r] - ak0[r];
        }
        for f in 0..nf {
            rhs[m + f] = -eta * res.rf[f];
        }
        let ck0 = k0.iter().zip(&self.c_psd).map(|(a, c)| dot(a, c)).sum::<f64>() + k0l.dot(&self.c_lp);
        rhs[m + nf] = -eta * res.rg - ck0 - (sigma * mu - it.tau * it.kappa - tk_corr) / it.tau;

        let sol = fac.lu.solve(&rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let dy = sol.rows(0, m).clone_owned();
        let dxf = sol.rows(m, nf).clone_owned();
        let dtau = sol[m + nf];

        let (ady, adyl, _) = self.a_adj(&dy);
        let mut dx = Vec::with_capacity(nb);
        let mut ds = Vec::with_capacity(nb);
        for b in 0..nb {
            dx.push(&k0[b] + hkm(&it.x[b], &ady[b], &fac.sinv[b]) - &fac.dc[b] * dtau);
            ds.push(-&res.rd[b] * eta - &ady[b] + &self.c_psd[b] * dtau);
        }
        let mut dxl = DVector::zeros(self.nl);
        let mut dsl = DVector::zeros(self.nl);
        for i in 0..self.nl {
            dxl[i] = k0l[i] + it.xl[i] * adyl[i] / it.sl[i] - fac.dcl[i] * dtau;
            dsl[i] = -eta * res.rdl[i] - adyl[i] + self.c_lp[i] * dtau;
        }
        let dkappa = (sigma * mu - it.tau * it.kappa - tk_corr - it.kappa * dtau) / it.tau;
        Some(Direction { x: dx, xl: dxl, xf: dxf, y: dy, s: ds, sl: dsl, tau: dtau, kappa: dkappa })
    }

    fn mu(&self, it: &Iterate) -> f64 {
        let xs: f64 = it.x.iter().zip(&it.s).map(|(x, s)| dot(x, s)).sum::<f64>() + it.xl.dot(&it.sl);
        (xs + it.tau * it.kappa) / (self.nu() + 1.0)
    }
}

fn step(it: &Iterate, d: &Direction, a: f64) -> Iterate {
    Iterate {
        x: it.x.iter().zip(&d.x).map(|(x, dx)| sym(&(x + dx * a))).collect(),
        xl: &it.xl + &d.xl * a,
        xf: &it.xf + &d.xf * a,
        y: &it.y + &d.y * a,
        s: it.s.iter().zip(&d.s).map(|(s, ds)| sym(&(s + ds * a))).collect(),
        sl: &it.sl + &d.sl * a,
        tau: it.tau + a * d.tau,
        kappa: it.kappa + a * d.kappa,
    }
}

/// Solves the problem; see the module documentation for the method.
///
/// Structural problems (bad indices, no constraints) are errors. Numerical
/// breakdown is reported through [`SolveStatus::NumericalFailure`] with the
/// iteration log attached.
pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution, SdpError> {
    let (ws, trivial_ray) = Workspace::build(problem)?;
    if let Some(y) = trivial_ray {
        return Ok(SdpSolution {
            status: SolveStatus::PrimalInfeasible,
            x: BlockValue::zeros(&problem.blocks),
            s: BlockValue::zeros(&problem.blocks),
            y,
            primal_objective: f64::NAN,
            dual_objective: 1.0,
            primal_residual: f64::NAN,
            dual_residual: 0.0,
            gap: f64::NAN,
            iterations: 0,
            log: Vec::new(),
        });
    }

    let mut it = Iterate {
        x: ws.psd_sizes.iter().map(|&n| DMatrix::identity(n, n)).collect(),
        xl: DVector::from_element(ws.nl, 1.0),
        xf: DVector::zeros(ws.nf),
        y: DVector::zeros(ws.m()),
        s: ws.psd_sizes.iter().map(|&n| DMatrix::identity(n, n)).collect(),
        sl: DVector::from_element(ws.nl, 1.0),
        tau: 1.0,
        kappa: 1.0,
    };

    let bnorm = 1.0 + inf_norm_vec(&ws.b);
    let cnorm = 1.0
        + ws.c_psd.iter().map(inf_norm_mat).fold(0.0, f64::max).max(inf_norm_vec(&ws.c_lp)).max(inf_norm_vec(&ws.c_free));

    let mut log = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut last_step = 0.0;
    let mut small_steps = 0;
    // best iterate within the relaxed tolerance: (merit, iterate, iteration)
    let mut best: Option<(f64, Iterate, usize)> = None;

    for iter in 0..=opts.max_iter {
        iterations = iter;
        let res = ws.residuals(&it);
        let mu = ws.mu(&it);
        let tau = it.tau;
        let pres = inf_norm_vec(&res.rp) / tau / bnorm;
        let dres = res
            .rd
            .iter()
            .map(inf_norm_mat)
            .fold(0.0, f64::max)
            .max(inf_norm_vec(&res.rdl))
            .max(inf_norm_vec(&res.rf))
            / tau
            / cnorm;
        let pobj = ws.cx(&it.x, &it.xl, &it.xf) / tau;
        let dobj = ws.b.dot(&it.y) / tau;
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        log.push(IterationLog { iter, mu, tau, kappa: it.kappa, primal_res: pres, dual_res: dres, gap, step: last_step });
        if opts.verbose {
            eprintln!(
                "{iter:3} mu={mu:.3e} tau={tau:.3e} kappa={:.3e} pres={pres:.2e} dres={dres:.2e} gap={gap:.2e} pobj={pobj:.6e} dobj={dobj:.6e} step={last_step:.3}",
                it.kappa
            );
        }
        if !mu.is_finite() || !pres.is_finite() || !dres.is_finite() {
            status = SolveStatus::NumericalFailure;
            break;
        }
        if pres <= opts.tol_primal && dres <= opts.tol_dual && gap <= opts.tol_gap {
            status = SolveStatus::Optimal;
            break;
        }
        let merit = pres.max(dres).max(gap);
        if merit <= opts.tol_relaxed {
            if best.as_ref().is_none_or(|b| merit < b.0) {
                best = Some((merit, it.clone(), iter));
            }
        } else if best.as_ref().is_some_and(|b| merit > 100.0 * b.0) {
            // residuals diverging after a good point: the run has stalled
            break;
        }
        // improving rays, trusted only once tau has collapsed relative to kappa
        if it.tau <= 1e-3 * it.kappa {
            let by = ws.b.dot(&it.y);
            if by > 0.0 {
                let (ay, ayl, ayf) = ws.a_adj(&it.y);
                let r = ay
                    .iter()
                    .zip(&it.s)
                    .map(|(a, s)| inf_norm_mat(&(a + s)))
                    .fold(0.0, f64::max)
                    .max(inf_norm_vec(&(ayl + &it.sl)))
                    .max(inf_norm_vec(&ayf));
                if r / by <= opts.tol_infeasible * cnorm {
                    status = SolveStatus::PrimalInfeasible;
                    break;
                }
            }
            let cx = -ws.cx(&it.x, &it.xl, &it.xf);
            if cx > 0.0 {
                let r = inf_norm_vec(&ws.a_op(&it.x, &it.xl, &it.xf));
                if r / cx <= opts.tol_infeasible * bnorm {
                    status = SolveStatus::DualInfeasible;
                    break;
                }
            }
        }
        if iter == opts.max_iter {
            break;
        }

        let Some(fac) = ws.factor(&it) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let Some(pred) = ws.direction(&it, &fac, &res, 0.0, 1.0, mu, None) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let Some(a_aff) = max_step(&it, &pred) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let a_aff = a_aff.min(1.0);
        let trial = step(&it, &pred, a_aff);
        let mu_aff = ws.mu(&trial);
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let Some(dir) = ws.direction(&it, &fac, &res, sigma, 1.0 - sigma, mu, Some(&pred)) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let Some(a_max) = max_step(&it, &dir) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let a = (opts.step_fraction * a_max).min(1.0);
        last_step = a;
        if a < 1e-10 {
            small_steps += 1;
            if small_steps > 3 {
                status = SolveStatus::NumericalFailure;
                break;
            }
        }
        let next = step(&it, &dir, a);
        if next.tau <= 0.0 || next.kappa <= 0.0 {
            status = SolveStatus::NumericalFailure;
            break;
        }
        it = next;
        // keep the homogeneous iterate bounded
        let scale = it.tau + it.kappa;
        if !(1e-8..=1e8).contains(&scale) {
            let f = 1.0 / scale;
            it.x.iter_mut().for_each(|m| *m *= f);
            it.s.iter_mut().for_each(|m| *m *= f);
            it.xl *= f;
            it.sl *= f;
            it.xf *= f;
            it.y *= f;
            it.tau *= f;
            it.kappa *= f;
        }
    }

    if matches!(status, SolveStatus::MaxIterations | SolveStatus::NumericalFailure) {
        if let Some((_, b, k)) = best {
            if opts.verbose {
                eprintln!("stopping at the best relaxed iterate from iteration {k}");
            }
            return Ok(ws.finish(problem, b, SolveStatus::NearOptimal, iterations, log, Some(k)));
        }
    }
    Ok(ws.finish(problem, it, status, iterations, log, None))
}

impl Workspace {
    fn finish(&self, problem: &SdpProblem, it: Iterate, status: SolveStatus, iterations: usize, log: Vec<IterationLog>, at: Option<usize>) -> SdpSolution {
        let div = if matches!(
            status,
            SolveStatus::Optimal | SolveStatus::NearOptimal | SolveStatus::MaxIterations | SolveStatus::NumericalFailure
        ) {
            it.tau
        } else {
            1.0
        };
        let ray_norm = match status {
            SolveStatus::PrimalInfeasible => self.b.dot(&it.y),
            SolveStatus::DualInfeasible => -self.cx(&it.x, &it.xl, &it.xf),
            _ => 1.0,
        };
        let f = 1.0 / (div * if ray_norm > 0.0 { ray_norm } else { 1.0 });

        // y in original row scaling, dropped rows get zero
        let mut y = DVector::zeros(problem.constraints.len());
        for (r, &k) in self.kept_rows.iter().enumerate() {
            y[k] = it.y[r] * self.row_scale[r] * f;
        }

        let mut x = BlockValue::zeros(&problem.blocks);
        let mut s = BlockValue::zeros(&problem.blocks);
        for (pi, &bi) in self.psd_orig.iter().enumerate() {
            x[bi] = BlockValue::Dense(&it.x[pi] * f);
            s[bi] = BlockValue::Dense(&it.s[pi] * f);
        }
        // dual slack of split free pairs from its definition C - A*(y)
        let aty = {
            let mut v: HashMap<(usize, usize), f64> = HashMap::new();
            for (k, c) in problem.constraints.iter().enumerate() {
                for e in &c.entries {
                    if let BlockKind::Diag(_) = problem.blocks[e.block] {
                        *v.entry((e.block, e.i)).or_default() += y[k] * e.v;
                    }
                }
            }
            v
        };
        let mut cdiag: HashMap<(usize, usize), f64> = HashMap::new();
        for e in &problem.objective {
            if let BlockKind::Diag(_) = problem.blocks[e.block] {
                *cdiag.entry((e.block, e.i)).or_default() += e.v;
            }
        }
        for (&(bi, i), slot) in &self.lp_slots {
            let (xv, sv) = match *slot {
                LpSlot::Kept(l) => (it.xl[l] * f, it.sl[l] * f),
                LpSlot::FreePos(fi) => {
                    let v = it.xf[fi] * f;
                    let c = cdiag.get(&(bi, i)).copied().unwrap_or(0.0) * if status == SolveStatus::PrimalInfeasible { 0.0 } else { 1.0 };
                    (v.max(0.0), c - aty.get(&(bi, i)).copied().unwrap_or(0.0))
                }
                LpSlot::FreeNeg(fi) => {
                    let v = it.xf[fi] * f;
                    let c = cdiag.get(&(bi, i)).copied().unwrap_or(0.0) * if status == SolveStatus::PrimalInfeasible { 0.0 } else { 1.0 };
                    ((-v).max(0.0), c - aty.get(&(bi, i)).copied().unwrap_or(0.0))
                }
            };
            if let BlockValue::Diag(d) = &mut x[bi] {
                d[i] = xv;
            }
            if let BlockValue::Diag(d) = &mut s[bi] {
                d[i] = sv;
            }
        }

        let primal_objective = SdpProblem::inner(&problem.objective, &x);
        let dual_objective = problem.constraints.iter().zip(y.iter()).map(|(c, yk)| c.rhs * yk).sum::<f64>();
        let last = at.and_then(|k| log.get(k)).or(log.last());
        SdpSolution {
            status,
            x,
            y,
            s,
            primal_objective,
            dual_objective,
            primal_residual: last.map_or(f64::NAN, |l| l.primal_res),
            dual_residual: last.map_or(f64::NAN, |l| l.dual_res),
            gap: last.map_or(f64::NAN, |l| l.gap),
            iterations,
            log,
        }
    }
}
