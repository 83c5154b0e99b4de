use rand::Rng;

use super::{Result, SimError};
use crate::analysis::LpvJumpSystem;
use crate::polyalg::Poly;

/// Samples inter-jump times and post-jump parameter values for one system.
///
/// With one parameter the next value is drawn by inverting the conditional
/// CDF `F(theta) = int_lo^theta lambda(rho, s) ds / lambda_bar(rho)` with
/// bisection. With several parameters it uses rejection sampling on the box
/// with envelope `1.05 * max lambda(rho, .)` over a grid.
#[derive(Clone, Debug)]
pub struct JumpSampler {
    intensity: Poly,
    kernel: Poly,
    /// `int_lo^theta lambda(rho, s) ds` (one parameter only).
    antiderivative: Option<Poly>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    envelope_grid: Vec<Vec<f64>>,
}

/// Envelope safety factor for rejection sampling.
pub const ENVELOPE_MARGIN: f64 = 1.05;

impl JumpSampler {
    pub fn new(sys: &LpvJumpSystem) -> Result<Self> {
        let b = sys.rho_box();
        let per = match b.dim() {
            1 => 201,
            2 => 41,
            3 => 15,
            _ => 7,
        };
        let inside = sys.domain.grid(per).len();
        if inside != b.grid(per).len() {
            return Err(SimError::Unsupported("parameter sets other than boxes".into()));
        }
        let lo: Vec<f64> = b.intervals().iter().map(|i| i.0).collect();
        let hi: Vec<f64> = b.intervals().iter().map(|i| i.1).collect();
        let antiderivative = if b.dim() == 1 {
            Some(sys.kernel.integrate_from(&sys.theta_names()[0], lo[0])?)
        } else {
            None
        };
        let envelope_grid = if b.dim() == 1 { Vec::new() } else { b.grid(per.min(21)) };
        Ok(JumpSampler { intensity: sys.intensity()?, kernel: sys.kernel.clone(), antiderivative, lo, hi, envelope_grid })
    }

    pub fn intensity_at(&self, rho: &[f64]) -> Result<f64> {
        Ok(self.intensity.eval(rho)?)
    }

    /// Exponential holding time; `+inf` where the intensity vanishes.
    pub fn sample_jump_time<R: Rng>(&self, rho: &[f64], rng: &mut R) -> Result<f64> {
        let lbar = self.intensity_at(rho)?;
        Ok(sample_jump_time(lbar, rng))
    }

    /// Next parameter value given the current one.
    pub fn sample_next_param<R: Rng>(&self, rho: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        match &self.antiderivative {
            Some(f) => {
                let nu: f64 = rng.random();
                Ok(vec![self.invert_cdf(f, rho, nu)?])
            }
            None => self.rejection(rho, rng),
        }
    }

    /// The unique `theta` in the interval with `F(theta) = nu`.
    pub fn invert_cdf(&self, f: &Poly, rho: &[f64], nu: f64) -> Result<f64> {
        let (lo, hi) = (self.lo[0], self.hi[0]);
        let eval = |th: f64| -> Result<f64> {
            let mut pt = rho.to_vec();
            pt.push(th);
            Ok(f.eval(&pt)?)
        };
        let total = eval(hi)?;
        if !(total > 0.0) {
            return Err(SimError::ZeroIntensity(rho.to_vec()));
        }
        if nu <= 0.0 {
            return Ok(lo);
        }
        if nu >= 1.0 {
            return Ok(hi);
        }
        let target = nu * total;
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let fm = eval(m)?;
            if ((fm - target) / total).abs() <= 1e-12 {
                return Ok(m);
            }
            if fm < target {
                a = m;
            } else {
                b = m;
            }
            if b - a <= f64::EPSILON * (1.0 + a.abs()) {
                break;
            }
        }
        Ok(0.5 * (a + b))
    }

    fn rejection<R: Rng>(&self, rho: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let at = |th: &[f64]| -> Result<f64> {
            let mut pt = rho.to_vec();
            pt.extend_from_slice(th);
            Ok(self.kernel.eval(&pt)?)
        };
        let mut m = 0.0f64;
        for th in &self.envelope_grid {
            m = m.max(at(th)?);
        }
        if !(m > 0.0) {
            return Err(SimError::ZeroIntensity(rho.to_vec()));
        }
        let m = ENVELOPE_MARGIN * m;
        for _ in 0..1_000_000 {
            let th: Vec<f64> = self.lo.iter().zip(&self.hi).map(|(&l, &h)| l + (h - l) * rng.random::<f64>()).collect();
            if rng.random::<f64>() * m <= at(&th)? {
                return Ok(th);
            }
        }
        Err(SimError::Unsupported("rejection sampling did not accept within 10^6 proposals".into()))
    }

    /// Uniform draw from the box.
    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(&l, &h)| l + (h - l) * rng.random::<f64>()).collect()
    }

    pub fn antiderivative(&self) -> Option<&Poly> {
        self.antiderivative.as_ref()
    }
}

/// `-ln(u) / rate` with `u` uniform on `(0, 1]`; `+inf` for a nonpositive rate.
pub fn sample_jump_time<R: Rng>(rate: f64, rng: &mut R) -> f64 {
    if !(rate > 0.0) {
        return f64::INFINITY;
    }
    let u = 1.0 - rng.random::<f64>();
    -u.ln() / rate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::text::parse_poly_str;
    use crate::polyalg::{BoxDomain, PolyMatrix, VarSet};
    use crate::sosprog::{BoxPolicy, SemialgebraicSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn sys(kernel: &str, hi: f64) -> LpvJumpSystem {
        let v = VarSet::new(["rho"]).unwrap();
        let dom = SemialgebraicSet::from_box(&BoxDomain::new([("rho", 0.0, hi)]).unwrap(), BoxPolicy::Product).unwrap();
        let k = parse_poly_str(kernel, &VarSet::new(["rho", "theta"]).unwrap()).unwrap();
        LpvJumpSystem::autonomous(PolyMatrix::identity(&v, 1), dom, k).unwrap()
    }

    fn ks_stat(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn holding_time_mean() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| sample_jump_time(100.0, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.01).abs() < 0.01 * 0.01, "{mean}");
        let s = JumpSampler::new(&sys("1", 5.0)).unwrap();
        let mean: f64 = (0..n).map(|_| s.sample_jump_time(&[2.0], &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 0.2).abs() < 0.01 * 0.2, "{mean}");
    }

    #[test]
    fn zero_intensity_never_jumps() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(sample_jump_time(0.0, &mut rng), f64::INFINITY);
        let s = JumpSampler::new(&sys("rho", 1.0)).unwrap();
        assert_eq!(s.sample_jump_time(&[0.0], &mut rng).unwrap(), f64::INFINITY);
    }

    #[test]
    fn constant_kernel_gives_uniform_values() {
        let s = JumpSampler::new(&sys("0.7", 5.0)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..10_000).map(|_| s.sample_next_param(&[1.0], &mut rng).unwrap()[0]).collect();
        let d = ks_stat(xs, |x| x / 5.0);
        assert!(d < 1.628 / 100.0, "KS = {d}");
    }

    #[test]
    fn linear_kernel_gives_sqrt_law() {
        let s = JumpSampler::new(&sys("theta", 1.0)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..10_000).map(|_| s.sample_next_param(&[0.3], &mut rng).unwrap()[0]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 2.0 / 3.0).abs() < 0.01 * 2.0 / 3.0);
        let d = ks_stat(xs, |x| x * x);
        assert!(d < 1.628 / 100.0, "KS = {d}");
    }

    #[test]
    fn inverse_at_zero_is_lower_endpoint() {
        let s = JumpSampler::new(&sys("1 + theta", 2.0)).unwrap();
        let f = s.antiderivative().unwrap().clone();
        assert_eq!(s.invert_cdf(&f, &[1.0], 0.0).unwrap(), 0.0);
        let x = s.invert_cdf(&f, &[1.0], 0.5).unwrap();
        // F(x) = (x + x^2/2) / 4
        assert!(((x + 0.5 * x * x) / 4.0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejection_sampler_matches_marginal() {
        let v = VarSet::new(["rho1", "rho2"]).unwrap();
        let dom = SemialgebraicSet::from_box(&BoxDomain::new([("rho1", 0.0, 1.0), ("rho2", 0.0, 1.0)]).unwrap(), BoxPolicy::Product).unwrap();
        let jv = VarSet::new(["rho1", "rho2", "theta1", "theta2"]).unwrap();
        let k = parse_poly_str("theta1", &jv).unwrap();
        let sys = LpvJumpSystem::autonomous(PolyMatrix::identity(&v, 1), dom, k).unwrap();
        let s = JumpSampler::new(&sys).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let draws: Vec<Vec<f64>> = (0..10_000).map(|_| s.sample_next_param(&[0.5, 0.5], &mut rng).unwrap()).collect();
        assert!(draws.iter().all(|d| d.iter().all(|x| (0.0..=1.0).contains(x))));
        let d1 = ks_stat(draws.iter().map(|d| d[0]).collect(), |x| x * x);
        let d2 = ks_stat(draws.iter().map(|d| d[1]).collect(), |x| x);
        assert!(d1 < 0.01628 && d2 < 0.01628, "{d1} {d2}");
    }
}
