//! Problem files: a strict JSON description of one jump system plus
//! default options.
//!
//! ```json
//! {
//!   "dimensions": {"n": 2, "m": 1, "p": 1, "q": 1},
//!   "matrices": {
//!     "A": [["3 - rho", "1"], ["1 - rho", "2 + rho"]],
//!     "B": [["0"], ["1 + rho"]],
//!     "C": [[0, 1]],
//!     "E": [[0], [1]]
//!   },
//!   "domain": {"box": [[0, 1]]},
//!   "kernel": {"constant": 100}
//! }
//! ```
//!
//! Matrix entries are numbers, polynomial strings or monomial-key objects in
//! the parameter variables (`rho`, or `rho1, rho2, ...` for several).
//! Omitted matrices are zero. The kernel is a polynomial in the parameter and
//! the post-jump variables (`theta` or `theta1, ...`).

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CliError;
use crate::analysis::{param_names, LpvJumpSystem};
use crate::polyalg::text::from_json;
use crate::polyalg::{BoxDomain, Poly, PolyMatrix, VarSet};
use crate::sosprog::{BoxPolicy, SemialgebraicSet};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub dimensions: Dimensions,
    pub matrices: Matrices,
    pub domain: Domain,
    pub kernel: Kernel,
    #[serde(default)]
    pub options: FileOptions,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimensions {
    pub n: usize,
    #[serde(default)]
    pub m: usize,
    #[serde(default)]
    pub p: usize,
    #[serde(default)]
    pub q: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matrices {
    #[serde(rename = "A")]
    pub a: Vec<Vec<Value>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<Value>>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<Value>>>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<Vec<Value>>>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Vec<Vec<Value>>>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<Vec<Value>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    /// One `[lo, hi]` per parameter.
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    /// Extra constraints `g(rho) >= 0`; the set must stay inside the box.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<Value>,
    #[serde(default)]
    pub box_policy: BoxPolicy,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum Kernel {
    Constant(f64),
    Polynomial(Value),
}

/// Defaults stored with the problem; command-line flags take precedence.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileOptions {
    pub degree: Option<u32>,
    pub multiplier_degree: Option<u32>,
    pub eps: Option<f64>,
    pub eps_strict: Option<f64>,
    pub bisect_tol: Option<f64>,
    pub grid_per_axis: Option<usize>,
    pub sdp_tol: Option<f64>,
    pub sdp_max_iter: Option<usize>,
    pub seed: Option<u64>,
    pub n_realizations: Option<usize>,
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub x0: Option<Vec<f64>>,
}

/// Parses with JSON-path error messages.
pub fn parse_problem(text: &str) -> Result<ProblemFile, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Schema { path, message: e.into_inner().to_string() }
    })
}

fn schema(path: impl Into<String>, message: impl ToString) -> CliError {
    CliError::Schema { path: path.into(), message: message.to_string() }
}

fn matrix(name: &str, rows: &[Vec<Value>], shape: (usize, usize), vars: &VarSet) -> Result<PolyMatrix, CliError> {
    let path = format!("matrices.{name}");
    if rows.len() != shape.0 {
        return Err(schema(&path, format!("expected {} rows, found {}", shape.0, rows.len())));
    }
    let mut entries = Vec::with_capacity(shape.0 * shape.1);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != shape.1 {
            return Err(schema(format!("{path}[{i}]"), format!("expected {} columns, found {}", shape.1, row.len())));
        }
        for (j, v) in row.iter().enumerate() {
            entries.push(from_json(v, vars).map_err(|e| schema(format!("{path}[{i}][{j}]"), e))?);
        }
    }
    PolyMatrix::from_entries(vars, shape.0, shape.1, entries).map_err(|e| schema(path, e))
}

fn optional(name: &str, rows: &Option<Vec<Vec<Value>>>, shape: (usize, usize), vars: &VarSet) -> Result<PolyMatrix, CliError> {
    match rows {
        Some(r) => matrix(name, r, shape, vars),
        None => Ok(PolyMatrix::zeros(vars, shape.0, shape.1)),
    }
}

impl ProblemFile {
    pub fn num_params(&self) -> usize {
        self.domain.bounds.len()
    }

    pub fn system(&self) -> Result<LpvJumpSystem, CliError> {
        let np = self.num_params();
        if np == 0 {
            return Err(schema("domain.box", "at least one parameter interval is needed"));
        }
        let (rho, theta) = param_names(np);
        let rv = VarSet::new(rho.iter()).map_err(|e| schema("domain.box", e))?;
        let jv = VarSet::new(rho.iter().chain(&theta)).map_err(|e| schema("domain.box", e))?;
        let Dimensions { n, m, p, q } = self.dimensions;
        if n == 0 {
            return Err(schema("dimensions.n", "the state dimension must be positive"));
        }
        let mt = &self.matrices;
        let a = matrix("A", &mt.a, (n, n), &rv)?;
        let b = optional("B", &mt.b, (n, m), &rv)?;
        let c = optional("C", &mt.c, (q, n), &rv)?;
        let d = optional("D", &mt.d, (q, m), &rv)?;
        let e = optional("E", &mt.e, (n, p), &rv)?;
        let f = optional("F", &mt.f, (q, p), &rv)?;

        let bx = BoxDomain::new(rho.iter().zip(&self.domain.bounds).map(|(r, iv)| (r.clone(), iv[0], iv[1])))
            .map_err(|e| schema("domain.box", e))?;
        if bx.intervals().iter().any(|(lo, hi)| !(hi > lo)) {
            return Err(schema("domain.box", "every interval needs lo < hi"));
        }
        let base = SemialgebraicSet::from_box(&bx, self.domain.box_policy).map_err(|e| schema("domain", e))?;
        let domain = if self.domain.constraints.is_empty() {
            base
        } else {
            let mut gs = base.constraints().to_vec();
            for (i, v) in self.domain.constraints.iter().enumerate() {
                gs.push(from_json(v, &rv).map_err(|e| schema(format!("domain.constraints[{i}]"), e))?);
            }
            SemialgebraicSet::new(&rv, gs, bx).map_err(|e| schema("domain.constraints", e))?
        };
        let kernel = match &self.kernel {
            Kernel::Constant(l) => {
                if !l.is_finite() {
                    return Err(schema("kernel.constant", "must be finite"));
                }
                Poly::constant(&jv, *l)
            }
            Kernel::Polynomial(v) => from_json(v, &jv).map_err(|e| schema("kernel.polynomial", e))?,
        };
        LpvJumpSystem::new(a, b, c, d, e, f, domain, kernel).map_err(|e| match e {
            crate::analysis::AnalysisError::NegativeKernel { .. } => schema("kernel", e),
            other => schema("", other),
        })
    }
}
