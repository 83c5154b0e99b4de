//! Machine-readable reports and controller files.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::analysis::{L2Certificate, LpvJumpSystem, RationalMatrix, StabilityCertificate, SynthesisResult};
use crate::polyalg::text::{from_json, to_json};
use crate::polyalg::{PolyMatrix, VarSet};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportVerdict {
    Feasible,
    Infeasible,
    Completed,
    Error,
    NumericalFailure,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub args: Vec<String>,
    pub input: String,
    /// Hex SHA-256 of the input file bytes; absent only if it could not be read.
    pub input_sha256: Option<String>,
    pub options: Value,
    pub verdict: ReportVerdict,
    pub exit_code: i32,
    pub results: Value,
    pub certificate: Option<Value>,
    pub solver: Option<Value>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub wall_clock_seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn poly_matrix_json(m: &PolyMatrix) -> Value {
    Value::Array((0..m.rows()).map(|i| Value::Array((0..m.cols()).map(|j| to_json(m.get(i, j))).collect())).collect())
}

pub fn poly_matrix_from_json(v: &Value, vars: &VarSet, what: &str) -> Result<PolyMatrix, CliError> {
    let bad = |msg: String| CliError::Schema { path: what.to_string(), message: msg };
    let rows = v.as_array().ok_or_else(|| bad("expected an array of rows".into()))?;
    let ncols = rows.first().and_then(Value::as_array).map_or(0, Vec::len);
    let mut entries = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_array().filter(|r| r.len() == ncols).ok_or_else(|| bad(format!("row {i} is not an array of length {ncols}")))?;
        for (j, e) in r.iter().enumerate() {
            entries.push(from_json(e, vars).map_err(|e| bad(format!("[{i}][{j}]: {e}")))?);
        }
    }
    PolyMatrix::from_entries(vars, rows.len(), ncols, entries).map_err(|e| bad(e.to_string()))
}

fn polys_json(ms: &[PolyMatrix]) -> Value {
    Value::Array(ms.iter().map(poly_matrix_json).collect())
}

pub fn stability_certificate_json(c: &StabilityCertificate) -> Value {
    json!({
        "kind": "stability",
        "variables": c.p.vars().names(),
        "alpha": c.alpha,
        "degree": c.degree,
        "multiplier_degree": c.multiplier_degree,
        "eps": c.eps,
        "eps_strict": c.eps_strict,
        "P": poly_matrix_json(&c.p),
        "constraints": c.constraints.iter().map(to_json).collect::<Vec<_>>(),
        "multipliers_P": polys_json(&c.multipliers_p),
        "multipliers_decay": polys_json(&c.multipliers_decay),
        "grid": c.grid,
        "size": c.size,
    })
}

pub fn l2_certificate_json(c: &L2Certificate) -> Value {
    json!({
        "kind": "l2_gain",
        "variables": c.p.vars().names(),
        "gamma": c.gamma,
        "degree": c.degree,
        "multiplier_degree": c.multiplier_degree,
        "eps": c.eps,
        "eps_strict": c.eps_strict,
        "P": poly_matrix_json(&c.p),
        "constraints": c.constraints.iter().map(to_json).collect::<Vec<_>>(),
        "multipliers_P": polys_json(&c.multipliers_p),
        "multipliers_gain": polys_json(&c.multipliers_gain),
        "grid": c.grid,
        "size": c.size,
    })
}

pub fn synthesis_json(r: &SynthesisResult) -> Value {
    json!({
        "kind": "state_feedback",
        "variables": r.q.vars().names(),
        "joint_variables": r.z.vars().names(),
        "gamma": r.gamma,
        "encoding": r.encoding.name(),
        "last_block": r.last_block_reading,
        "degree_q": r.degree_q,
        "degree_u": r.degree_u,
        "degree_z": r.degree_z,
        "multiplier_degree": r.multiplier_degree,
        "Q": poly_matrix_json(&r.q),
        "U": poly_matrix_json(&r.u),
        "Z": poly_matrix_json(&r.z),
        "K": controller_json(&r.k),
        "grid": r.grid,
        "size": r.size,
    })
}

/// `K(rho) = numerator(rho) / denominator(rho)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerFile {
    pub schema_version: u32,
    pub parameters: Vec<String>,
    pub numerator: Value,
    pub denominator: Value,
}

pub fn controller_json(k: &RationalMatrix) -> Value {
    serde_json::to_value(ControllerFile {
        schema_version: SCHEMA_VERSION,
        parameters: k.num.vars().names().to_vec(),
        numerator: poly_matrix_json(&k.num),
        denominator: to_json(&k.den),
    })
    .expect("serializable")
}

pub fn read_controller(text: &str, sys: &LpvJumpSystem) -> Result<RationalMatrix, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cf: ControllerFile = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Schema { path: format!("controller.{}", e.path()), message: e.into_inner().to_string() })?;
    if cf.parameters != sys.rho_names() {
        return Err(CliError::Schema {
            path: "controller.parameters".into(),
            message: format!("expected {:?}, found {:?}", sys.rho_names(), cf.parameters),
        });
    }
    let rv = sys.rho_vars();
    let num = poly_matrix_from_json(&cf.numerator, rv, "controller.numerator")?;
    let den = from_json(&cf.denominator, rv).map_err(|e| CliError::Schema { path: "controller.denominator".into(), message: e.to_string() })?;
    if num.rows() != sys.m() || num.cols() != sys.n() {
        return Err(CliError::Schema {
            path: "controller.numerator".into(),
            message: format!("expected {}x{}, found {}x{}", sys.m(), sys.n(), num.rows(), num.cols()),
        });
    }
    Ok(RationalMatrix { num, den })
}

/// Lyapunov matrix and rate from a stability report.
pub fn read_lyapunov(text: &str, sys: &LpvJumpSystem) -> Result<(PolyMatrix, f64), CliError> {
    let v: Value = serde_json::from_str(text).map_err(|e| CliError::Schema { path: "lyapunov".into(), message: e.to_string() })?;
    let cert = v.get("certificate").unwrap_or(&v);
    if cert.get("kind").and_then(Value::as_str) != Some("stability") {
        return Err(CliError::Schema { path: "lyapunov.certificate.kind".into(), message: "expected a stability certificate".into() });
    }
    let p = poly_matrix_from_json(&cert["P"], sys.rho_vars(), "lyapunov.certificate.P")?;
    let alpha = cert["alpha"]
        .as_f64()
        .ok_or_else(|| CliError::Schema { path: "lyapunov.certificate.alpha".into(), message: "missing".into() })?;
    Ok((p, alpha))
}
