//! Monte Carlo simulation of the jump process: exponential holding times,
//! inverse-CDF (or rejection) sampling of post-jump parameters, and RK4
//! integration of the frozen-parameter flow between jumps.
//!
//! Randomness comes from ChaCha20 seeded with `seed_from_u64(seed)`;
//! realization `k` uses stream `k` of that key, so results do not depend on
//! scheduling. Within a realization the draws are, in order: the initial
//! parameter (only if not pinned), then per jump one holding time and one
//! post-jump value.

mod sampling;

pub use sampling::{sample_jump_time, JumpSampler, ENVELOPE_MARGIN};

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{AnalysisError, LpvJumpSystem, RationalMatrix};
use crate::polyalg::{PolyError, PolyMatrix};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("jump intensity vanishes at {0:?}")]
    ZeroIntensity(Vec<f64>),
    #[error("controller singular at t = {t}, rho = {rho:?} (det Q = {det:e})")]
    ControllerSingular { t: f64, rho: Vec<f64>, det: f64 },
    #[error("parameter left the box: {0:?}")]
    OutOfBox(Vec<f64>),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Disturbance `w(t)`, applied to every disturbance channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSignal {
    Zero,
    /// `amplitude * (H(t) - H(t - t1))`.
    Pulse { amplitude: f64, t1: f64 },
    /// Zero-order hold: `values[k]` on `[times[k], times[k+1])`, zero before
    /// the first time, last value held to the horizon.
    Table { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl InputSignal {
    fn value(&self, t: f64, p: usize) -> DVector<f64> {
        match self {
            InputSignal::Zero => DVector::zeros(p),
            InputSignal::Pulse { amplitude, t1 } => {
                DVector::from_element(p, if t >= 0.0 && t < *t1 { *amplitude } else { 0.0 })
            }
            InputSignal::Table { times, values } => match times.iter().rposition(|&s| s <= t) {
                None => DVector::zeros(p),
                Some(k) => {
                    let v = &values[k];
                    if v.len() == 1 {
                        DVector::from_element(p, v[0])
                    } else {
                        DVector::from_column_slice(v)
                    }
                }
            },
        }
    }

    /// First discontinuity strictly after `t`.
    fn next_break(&self, t: f64) -> f64 {
        let cand: Vec<f64> = match self {
            InputSignal::Zero => Vec::new(),
            InputSignal::Pulse { t1, .. } => vec![0.0, *t1],
            InputSignal::Table { times, .. } => times.clone(),
        };
        cand.into_iter().filter(|&s| s > t).fold(f64::INFINITY, f64::min)
    }

    fn is_zero(&self) -> bool {
        match self {
            InputSignal::Zero => true,
            InputSignal::Pulse { amplitude, .. } => *amplitude == 0.0,
            InputSignal::Table { values, .. } => values.iter().all(|v| v.iter().all(|&x| x == 0.0)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub horizon: f64,
    /// Maximum RK4 step.
    pub step: f64,
    /// Spacing of the recorded time grid; defaults to `horizon / 1000`.
    pub record_dt: Option<f64>,
    pub n_realizations: usize,
    pub seed: u64,
    pub input: InputSignal,
    pub x0: Vec<f64>,
    /// Initial parameter; drawn uniformly from the box when `None`.
    pub rho0: Option<Vec<f64>>,
    /// Also track `V = x' P(rho) x` for this matrix.
    pub lyapunov: Option<PolyMatrix>,
}

impl SimConfig {
    pub fn new(x0: Vec<f64>, horizon: f64) -> Self {
        SimConfig {
            horizon,
            step: 1e-3,
            record_dt: None,
            n_realizations: 100,
            seed: 0,
            input: InputSignal::Zero,
            x0,
            rho0: None,
            lyapunov: None,
        }
    }

    fn record_times(&self) -> Vec<f64> {
        let dt = self.record_dt.unwrap_or(self.horizon / 1000.0);
        let n = (self.horizon / dt).round() as usize;
        (0..=n).map(|k| (k as f64 * dt).min(self.horizon)).collect()
    }

    /// Checks the configuration and returns warnings.
    pub fn validate(&self, sys: &LpvJumpSystem) -> Result<Vec<String>> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.step > 0.0) {
            return Err(SimError::Config(format!("step must be positive, got {}", self.step)));
        }
        if let Some(dt) = self.record_dt {
            if !(dt > 0.0) {
                return Err(SimError::Config(format!("record interval must be positive, got {dt}")));
            }
        }
        if self.x0.len() != sys.n() {
            return Err(SimError::Config(format!("x0 has {} entries, the state has {}", self.x0.len(), sys.n())));
        }
        if let Some(r) = &self.rho0 {
            if r.len() != sys.num_params() || !sys.domain.contains(r) {
                return Err(SimError::Config(format!("initial parameter {r:?} is not in the parameter set")));
            }
        }
        if let InputSignal::Table { times, values } = &self.input {
            if times.len() != values.len() || times.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SimError::Config("input table needs increasing times and one value per time".into()));
            }
            if values.iter().any(|v| v.len() != 1 && v.len() != sys.p()) {
                return Err(SimError::Config(format!("input table values need 1 or {} entries", sys.p())));
            }
        }
        if !self.input.is_zero() && sys.p() == 0 {
            return Err(SimError::Config("the system has no disturbance input".into()));
        }
        let mut warnings = Vec::new();
        let max_rate = sys
            .rho_grid(crate::analysis::grid_per_axis(sys.num_params(), false))
            .iter()
            .map(|r| sys.intensity().and_then(|l| Ok(l.eval(r)?)).unwrap_or(0.0))
            .fold(0.0, f64::max);
        if max_rate > 0.0 && self.step > 0.1 / max_rate {
            warnings.push(format!(
                "step {} exceeds a tenth of the shortest mean holding time {:.3e}",
                self.step,
                1.0 / max_rate
            ));
        }
        Ok(warnings)
    }
}

/// Jump times and values; `values[k]` holds on `[times[k], times[k+1])`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ParamTrajectory {
    pub fn value_at(&self, t: f64) -> &[f64] {
        let k = self.times.iter().rposition(|&s| s <= t).unwrap_or(0);
        &self.values[k]
    }

    pub fn num_jumps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }
}

#[derive(Clone, Debug)]
pub struct PathResult {
    pub params: ParamTrajectory,
    /// Recorded times.
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    /// Parameter at each recorded time.
    pub rho: Vec<Vec<f64>>,
    /// `V(x, rho)` at each recorded time when a Lyapunov matrix was given.
    pub v: Option<Vec<f64>>,
    pub int_z_sq: f64,
    pub int_w_sq: f64,
}

struct Segment {
    a: DMatrix<f64>,
    e: DMatrix<f64>,
    c: DMatrix<f64>,
    f: DMatrix<f64>,
}

fn segment(sys: &LpvJumpSystem, k: Option<&RationalMatrix>, rho: &[f64], t: f64) -> Result<Segment> {
    let mut a = sys.a.eval(rho)?;
    let mut c = sys.c.eval(rho)?;
    if let Some(k) = k {
        let det = k.den.eval(rho)?;
        if det.abs() <= 1e-10 {
            return Err(SimError::ControllerSingular { t, rho: rho.to_vec(), det });
        }
        let kv = k.num.eval(rho)? / det;
        a += sys.b.eval(rho)? * &kv;
        c += sys.d.eval(rho)? * &kv;
    }
    Ok(Segment { a, e: sys.e.eval(rho)?, c, f: sys.f.eval(rho)? })
}

/// One RK4 step of `x' = A x + E w` together with the running integrals of
/// `|z|^2` and `|w|^2` (`w` constant over the step).
fn rk4(seg: &Segment, x: &DVector<f64>, w: &DVector<f64>, h: f64) -> (DVector<f64>, f64) {
    let ew = &seg.e * w;
    let fw = &seg.f * w;
    let f = |x: &DVector<f64>| -> (DVector<f64>, f64) {
        let z = &seg.c * x + &fw;
        (&seg.a * x + &ew, z.norm_squared())
    };
    let (k1, q1) = f(x);
    let (k2, q2) = f(&(x + &k1 * (0.5 * h)));
    let (k3, q3) = f(&(x + &k2 * (0.5 * h)));
    let (k4, q4) = f(&(x + &k3 * h));
    let xn = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    (xn, h / 6.0 * (q1 + 2.0 * q2 + 2.0 * q3 + q4))
}

/// Simulates one realization with its own random stream.
pub fn simulate_path(
    sys: &LpvJumpSystem,
    sampler: &JumpSampler,
    controller: Option<&RationalMatrix>,
    cfg: &SimConfig,
    rng: &mut ChaCha20Rng,
) -> Result<PathResult> {
    let n = sys.n();
    let p = sys.p();
    let records = cfg.record_times();
    let mut rho = match &cfg.rho0 {
        Some(r) => r.clone(),
        None => sampler.sample_uniform(rng),
    };
    let mut params = ParamTrajectory { times: vec![0.0], values: vec![rho.clone()] };
    let mut x = DVector::from_column_slice(&cfg.x0);
    let mut seg = segment(sys, controller, &rho, 0.0)?;
    let mut t = 0.0;
    let mut next_jump = sampler.sample_jump_time(&rho, rng)?;
    let mut int_z = 0.0;
    let mut int_w = 0.0;

    let mut out = PathResult {
        params: ParamTrajectory::default(),
        t: Vec::with_capacity(records.len()),
        x: Vec::with_capacity(records.len()),
        z: Vec::with_capacity(records.len()),
        rho: Vec::with_capacity(records.len()),
        v: cfg.lyapunov.as_ref().map(|_| Vec::with_capacity(records.len())),
        int_z_sq: 0.0,
        int_w_sq: 0.0,
    };
    let record = |out: &mut PathResult, t: f64, x: &DVector<f64>, rho: &[f64], seg: &Segment| -> Result<()> {
        let w = cfg.input.value(t, p);
        out.t.push(t);
        out.z.push(&seg.c * x + &seg.f * w);
        out.x.push(x.clone());
        out.rho.push(rho.to_vec());
        if let (Some(pm), Some(v)) = (&cfg.lyapunov, out.v.as_mut()) {
            v.push((x.transpose() * pm.eval(rho)? * x)[(0, 0)]);
        }
        Ok(())
    };

    let mut ri = 0;
    while ri < records.len() && records[ri] <= 0.0 {
        record(&mut out, 0.0, &x, &rho, &seg)?;
        ri += 1;
    }
    while t < cfg.horizon {
        let next_record = records.get(ri).copied().unwrap_or(f64::INFINITY);
        let stop = next_jump.min(cfg.input.next_break(t)).min(next_record).min(cfg.horizon);
        let w = cfg.input.value(t, p);
        let wsq = w.norm_squared();
        while t < stop {
            let h = cfg.step.min(stop - t);
            let (xn, dz) = rk4(&seg, &x, &w, h);
            x = xn;
            int_z += dz;
            int_w += wsq * h;
            t = if stop - t <= cfg.step { stop } else { t + h };
        }
        if t == next_record {
            record(&mut out, t, &x, &rho, &seg)?;
            ri += 1;
        }
        if t == next_jump && t < cfg.horizon {
            rho = sampler.sample_next_param(&rho, rng)?;
            if !sys.rho_box().contains(&rho) {
                return Err(SimError::OutOfBox(rho));
            }
            params.times.push(t);
            params.values.push(rho.clone());
            seg = segment(sys, controller, &rho, t)?;
            next_jump = t + sampler.sample_jump_time(&rho, rng)?;
        }
    }
    while ri < records.len() {
        record(&mut out, records[ri], &x, &rho, &seg)?;
        ri += 1;
    }
    debug_assert!(x.len() == n);
    out.params = params;
    out.int_z_sq = int_z;
    out.int_w_sq = int_w;
    Ok(out)
}

/// Random stream of realization `k`.
pub fn realization_rng(seed: u64, k: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GainEstimate {
    pub gain: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub t: Vec<f64>,
    pub mean_x_sq: Vec<f64>,
    pub stderr_x_sq: Vec<f64>,
    pub mean_v: Option<Vec<f64>>,
    pub stderr_v: Option<Vec<f64>>,
    pub int_z_sq: Vec<f64>,
    pub int_w_sq: Vec<f64>,
    pub gain: Option<GainEstimate>,
    pub realizations: usize,
    /// Realizations that stopped with an error, with the message.
    pub aborted: Vec<(usize, String)>,
    pub warnings: Vec<String>,
}

fn mean_se(samples: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = samples.clone().count() as f64;
    if n == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let m = samples.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (m, 0.0);
    }
    let var = samples.map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// `sqrt(sum Jz / sum Jw)` with a delta-method standard error.
pub fn gain_estimate(jz: &[f64], jw: &[f64]) -> Option<GainEstimate> {
    let n = jz.len() as f64;
    let (mz, mw) = (jz.iter().sum::<f64>() / n, jw.iter().sum::<f64>() / n);
    if !(mw > 0.0) {
        return None;
    }
    let r = mz / mw;
    let gain = r.sqrt();
    if jz.len() < 2 {
        return Some(GainEstimate { gain, stderr: 0.0 });
    }
    let cov = |a: &[f64], ma: f64, b: &[f64], mb: f64| a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
    let (vz, vw, czw) = (cov(jz, mz, jz, mz), cov(jw, mw, jw, mw), cov(jz, mz, jw, mw));
    let var_r = (vz / (mw * mw) - 2.0 * mz * czw / mw.powi(3) + mz * mz * vw / mw.powi(4)) / n;
    let se_r = var_r.max(0.0).sqrt();
    let stderr = if gain > 0.0 { se_r / (2.0 * gain) } else { se_r.sqrt() };
    Some(GainEstimate { gain, stderr })
}

/// Runs `cfg.n_realizations` independent paths in parallel.
pub fn run_ensemble(sys: &LpvJumpSystem, controller: Option<&RationalMatrix>, cfg: &SimConfig) -> Result<(EnsembleStats, Vec<PathResult>)> {
    let warnings = cfg.validate(sys)?;
    if cfg.n_realizations == 0 {
        return Err(SimError::Config("at least one realization is needed".into()));
    }
    if let Some(k) = controller {
        if k.num.rows() != sys.m() || k.num.cols() != sys.n() {
            return Err(SimError::Config(format!("controller is {}x{}, expected {}x{}", k.num.rows(), k.num.cols(), sys.m(), sys.n())));
        }
    }
    let sampler = JumpSampler::new(sys)?;
    let results: Vec<Result<PathResult>> = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|k| simulate_path(sys, &sampler, controller, cfg, &mut realization_rng(cfg.seed, k)))
        .collect();
    let mut paths = Vec::new();
    let mut aborted = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => paths.push(p),
            Err(e @ SimError::ControllerSingular { .. }) => aborted.push((k, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    let t = cfg.record_times();
    let mut mean_x_sq = Vec::with_capacity(t.len());
    let mut stderr_x_sq = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let (m, s) = mean_se(paths.iter().map(|p| p.x[i].norm_squared()));
        mean_x_sq.push(m);
        stderr_x_sq.push(s);
    }
    let (mean_v, stderr_v) = if cfg.lyapunov.is_some() {
        let (m, s): (Vec<f64>, Vec<f64>) =
            (0..t.len()).map(|i| mean_se(paths.iter().map(|p| p.v.as_ref().expect("tracked")[i]))).unzip();
        (Some(m), Some(s))
    } else {
        (None, None)
    };
    let int_z_sq: Vec<f64> = paths.iter().map(|p| p.int_z_sq).collect();
    let int_w_sq: Vec<f64> = paths.iter().map(|p| p.int_w_sq).collect();
    let gain = if cfg.input.is_zero() || paths.is_empty() { None } else { gain_estimate(&int_z_sq, &int_w_sq) };
    let stats = EnsembleStats {
        t,
        mean_x_sq,
        stderr_x_sq,
        mean_v,
        stderr_v,
        int_z_sq,
        int_w_sq,
        gain,
        realizations: paths.len(),
        aborted,
        warnings,
    };
    Ok((stats, paths))
}

/// Least-squares slope of `-ln E|x|^2` over `[0, t_max]`; for mean-square
/// decay at rate `alpha` this is about `2 alpha`.
pub fn fit_decay_rate(stats: &EnsembleStats, t_max: f64) -> f64 {
    let pts: Vec<(f64, f64)> =
        stats.t.iter().zip(&stats.mean_x_sq).filter(|(&t, &m)| t <= t_max && m > 0.0).map(|(&t, &m)| (t, m.ln())).collect();
    let n = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mt, my) = (st / n, sy / n);
    let (num, den) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mt) * (p.1 - my), a.1 + (p.0 - mt).powi(2)));
    -num / den
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DynkinReport {
    pub passed: bool,
    /// Largest `(E[V](t) - 3 se(t)) / bound(t)` over the grid.
    pub worst_ratio: f64,
    pub worst_t: f64,
}

/// Checks `E[V](t) <= (E[V](0) + 3 se(0)) e^{-2 alpha t}` up to three
/// standard errors at every recorded time.
pub fn dynkin_check(stats: &EnsembleStats, alpha: f64) -> Option<DynkinReport> {
    let (m, s) = (stats.mean_v.as_ref()?, stats.stderr_v.as_ref()?);
    let v0 = m[0] + 3.0 * s[0];
    let mut worst = (f64::NEG_INFINITY, 0.0);
    for ((&t, &mv), &sv) in stats.t.iter().zip(m).zip(s) {
        let bound = v0 * (-2.0 * alpha * t).exp();
        let r = if bound > 0.0 { (mv - 3.0 * sv) / bound } else if mv - 3.0 * sv > 0.0 { f64::INFINITY } else { 0.0 };
        if r > worst.0 {
            worst = (r, t);
        }
    }
    Some(DynkinReport { passed: worst.0 <= 1.0, worst_ratio: worst.0, worst_t: worst.1 })
}

/// Columns `realization, t, x1.., rho.., z..`.
pub fn write_trace_csv(path: &Path, sys: &LpvJumpSystem, paths: &[PathResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["realization".to_string(), "t".to_string()];
    header.extend((1..=sys.n()).map(|i| format!("x{i}")));
    header.extend(sys.rho_names().iter().cloned());
    header.extend((1..=sys.q()).map(|i| format!("z{i}")));
    w.write_record(&header)?;
    for (k, p) in paths.iter().enumerate() {
        for i in 0..p.t.len() {
            let mut rec = vec![k.to_string(), fmt(p.t[i])];
            rec.extend(p.x[i].iter().map(|&v| fmt(v)));
            rec.extend(p.rho[i].iter().map(|&v| fmt(v)));
            rec.extend(p.z[i].iter().map(|&v| fmt(v)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `t, mean_x_sq, stderr`.
pub fn write_ensemble_csv(path: &Path, stats: &EnsembleStats) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "mean_x_sq", "stderr"])?;
    for i in 0..stats.t.len() {
        w.write_record([fmt(stats.t[i]), fmt(stats.mean_x_sq[i]), fmt(stats.stderr_x_sq[i])])?;
    }
    w.flush()?;
    Ok(())
}

/// Jump times and values, one row per holding interval.
pub fn write_params_csv(out: &mut impl Write, paths: &[PathResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (k, p) in paths.iter().enumerate() {
        for (t, v) in p.params.times.iter().zip(&p.params.values) {
            let mut rec = vec![k.to_string(), fmt(*t)];
            rec.extend(v.iter().map(|&x| fmt(x)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::text::parse_poly_str;
    use crate::polyalg::{BoxDomain, Poly, VarSet};
    use crate::sosprog::{BoxPolicy, SemialgebraicSet};

    fn rv() -> VarSet {
        VarSet::new(["rho"]).unwrap()
    }

    fn scalar_sys(a: &str, kernel: f64, with_io: bool) -> LpvJumpSystem {
        let v = rv();
        let dom = SemialgebraicSet::from_box(&BoxDomain::new([("rho", 0.0, 1.0)]).unwrap(), BoxPolicy::Product).unwrap();
        let k = Poly::constant(&VarSet::new(["rho", "theta"]).unwrap(), kernel);
        let am = PolyMatrix::from_entries(&v, 1, 1, vec![parse_poly_str(a, &v).unwrap()]).unwrap();
        if with_io {
            let one = PolyMatrix::identity(&v, 1);
            LpvJumpSystem::new(am, PolyMatrix::zeros(&v, 1, 0), one.clone(), PolyMatrix::zeros(&v, 1, 0), one, PolyMatrix::zeros(&v, 1, 1), dom, k)
                .unwrap()
        } else {
            LpvJumpSystem::autonomous(am, dom, k).unwrap()
        }
    }

    #[test]
    fn constant_flow_matches_exponential() {
        let sys = scalar_sys("-1", 5.0, false);
        let mut cfg = SimConfig::new(vec![2.0], 1.0);
        cfg.n_realizations = 3;
        let (stats, paths) = run_ensemble(&sys, None, &cfg).unwrap();
        for p in &paths {
            assert!((p.x.last().unwrap()[0] - 2.0 * (-1.0f64).exp()).abs() < 1e-10);
            assert!(p.params.num_jumps() > 0);
        }
        assert_eq!(stats.t.len(), 1001);
    }

    #[test]
    fn zero_state_stays_zero() {
        let sys = scalar_sys("1 + rho", 2.0, false);
        let mut cfg = SimConfig::new(vec![0.0], 2.0);
        cfg.n_realizations = 4;
        let (stats, _) = run_ensemble(&sys, None, &cfg).unwrap();
        assert!(stats.mean_x_sq.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn same_seed_same_paths() {
        let sys = scalar_sys("-1 + rho", 3.0, false);
        let mut cfg = SimConfig::new(vec![1.0], 2.0);
        cfg.n_realizations = 5;
        cfg.seed = 7;
        let (_, a) = run_ensemble(&sys, None, &cfg).unwrap();
        let (_, b) = run_ensemble(&sys, None, &cfg).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.params, q.params);
            assert_eq!(p.x, q.x);
        }
        cfg.seed = 8;
        let (_, c) = run_ensemble(&sys, None, &cfg).unwrap();
        assert_ne!(a[0].params, c[0].params);
    }

    #[test]
    fn jumps_stay_in_box_and_are_ordered() {
        let sys = scalar_sys("-1", 20.0, false);
        let mut cfg = SimConfig::new(vec![1.0], 1.0);
        cfg.n_realizations = 10;
        let (_, paths) = run_ensemble(&sys, None, &cfg).unwrap();
        for p in &paths {
            assert!(p.params.times.windows(2).all(|w| w[0] < w[1]));
            assert!(p.params.values.iter().all(|v| (0.0..=1.0).contains(&v[0])));
        }
    }

    #[test]
    fn pulse_energy_and_first_order_gain() {
        // x' = -x + w, z = x, w = 10 on [0, 1): int w^2 = 100
        let sys = scalar_sys("-1", 1.0, true);
        let mut cfg = SimConfig::new(vec![0.0], 20.0);
        cfg.n_realizations = 2;
        cfg.input = InputSignal::Pulse { amplitude: 10.0, t1: 1.0 };
        let (stats, _) = run_ensemble(&sys, None, &cfg).unwrap();
        assert!((stats.int_w_sq[0] - 100.0).abs() < 1e-9);
        // int z^2 = 100 * int_0^1 (1 - e^{-t})^2 dt + 100 * (1 - e^{-1})^2 / 2
        let e = (-1.0f64).exp();
        let exact = 100.0 * ((1.0 - 2.0 * (1.0 - e) + (1.0 - e * e) / 2.0) + (1.0 - e).powi(2) / 2.0);
        assert!((stats.int_z_sq[0] - exact).abs() < 1e-6 * exact, "{} {exact}", stats.int_z_sq[0]);
        assert!(stats.gain.unwrap().gain < 1.0);
    }

    #[test]
    fn holding_time_counts_are_poisson() {
        // constant intensity 4 on [0, 1], horizon 1: N ~ Poisson(4)
        let sys = scalar_sys("-1", 4.0, false);
        let mut cfg = SimConfig::new(vec![1.0], 1.0);
        cfg.n_realizations = 10_000;
        cfg.step = 0.05;
        cfg.record_dt = Some(1.0);
        let (_, paths) = run_ensemble(&sys, None, &cfg).unwrap();
        let mut counts = [0usize; 9];
        for p in &paths {
            counts[p.params.num_jumps().min(8)] += 1;
        }
        let lam: f64 = 4.0;
        let mut probs: Vec<f64> = (0..8).map(|k| (-lam).exp() * lam.powi(k) / (1..=k).product::<i32>().max(1) as f64).collect();
        probs.push(1.0 - probs.iter().sum::<f64>());
        let n = paths.len() as f64;
        let chi2: f64 = counts.iter().zip(&probs).map(|(&o, &p)| (o as f64 - n * p).powi(2) / (n * p)).sum();
        // 99% quantile of chi-square with 8 degrees of freedom
        assert!(chi2 < 20.09, "chi2 = {chi2}");
    }

    #[test]
    fn gain_estimate_delta_method() {
        let g = gain_estimate(&[4.0, 4.0, 4.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!((g.gain - 2.0).abs() < 1e-15 && g.stderr == 0.0);
        let g = gain_estimate(&[3.0, 5.0], &[1.0, 1.0]).unwrap();
        // var(Z) = 2, se(R) = 1, se(sqrt R) = 1 / (2 * 2)
        assert!((g.stderr - 0.25).abs() < 1e-12);
        assert!(gain_estimate(&[1.0], &[0.0]).is_none());
    }

    #[test]
    fn dynkin_bound_holds_for_decaying_scalar() {
        let sys = scalar_sys("-1 - rho", 3.0, false);
        let mut cfg = SimConfig::new(vec![1.0], 2.0);
        cfg.n_realizations = 50;
        cfg.lyapunov = Some(PolyMatrix::identity(&rv(), 1));
        let (stats, _) = run_ensemble(&sys, None, &cfg).unwrap();
        assert!(dynkin_check(&stats, 1.0).unwrap().passed);
        assert!(!dynkin_check(&stats, 3.0).unwrap().passed);
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let sys = scalar_sys("-1.5", 1.0, false);
        let mut cfg = SimConfig::new(vec![1.0], 2.0);
        cfg.n_realizations = 2;
        let (stats, _) = run_ensemble(&sys, None, &cfg).unwrap();
        assert!((fit_decay_rate(&stats, 1.0) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn csv_outputs_have_expected_shape() {
        let sys = scalar_sys("-1", 2.0, true);
        let mut cfg = SimConfig::new(vec![1.0], 0.5);
        cfg.n_realizations = 2;
        cfg.record_dt = Some(0.1);
        let (stats, paths) = run_ensemble(&sys, None, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let tp = dir.path().join("trace.csv");
        let ep = dir.path().join("ens.csv");
        write_trace_csv(&tp, &sys, &paths).unwrap();
        write_ensemble_csv(&ep, &stats).unwrap();
        let trace = std::fs::read_to_string(tp).unwrap();
        assert_eq!(trace.lines().next().unwrap(), "realization,t,x1,rho,z1");
        assert_eq!(trace.lines().count(), 1 + 2 * 6);
        let ens = std::fs::read_to_string(ep).unwrap();
        assert_eq!(ens.lines().count(), 7);
    }

    #[test]
    fn bad_config_rejected() {
        let sys = scalar_sys("-1", 2.0, false);
        let cfg = SimConfig::new(vec![1.0, 2.0], 1.0);
        assert!(matches!(run_ensemble(&sys, None, &cfg), Err(SimError::Config(_))));
        let mut cfg = SimConfig::new(vec![1.0], 1.0);
        cfg.input = InputSignal::Pulse { amplitude: 1.0, t1: 0.5 };
        assert!(matches!(run_ensemble(&sys, None, &cfg), Err(SimError::Config(_))));
    }
}
