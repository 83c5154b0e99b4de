use serde::{Deserialize, Serialize};

use super::{Result, SosError};
use crate::polyalg::{BoxDomain, Poly, VarSet};

/// How a box is described by polynomial inequalities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxPolicy {
    /// One constraint `prod_k (x_k - lo_k)(hi_k - x_k) >= 0`.
    #[default]
    Product,
    /// One constraint `(x_k - lo_k)(hi_k - x_k) >= 0` per coordinate.
    PerFace,
}

/// `{x : g_i(x) >= 0 for all i}` together with a box containing it.
#[derive(Clone, Debug, PartialEq)]
pub struct SemialgebraicSet {
    vars: VarSet,
    constraints: Vec<Poly>,
    enclosing_box: BoxDomain,
}

impl SemialgebraicSet {
    pub fn new(vars: &VarSet, constraints: Vec<Poly>, enclosing_box: BoxDomain) -> Result<Self> {
        if enclosing_box.names() != vars.names() {
            return Err(SosError::Set(format!(
                "box variables {:?} differ from set variables {:?}",
                enclosing_box.names(),
                vars.names()
            )));
        }
        for (i, g) in constraints.iter().enumerate() {
            if g.vars() != vars {
                return Err(SosError::Set(format!("constraint {i} is over {:?}", g.vars())));
            }
            if g.is_zero() {
                return Err(SosError::Set(format!("constraint {i} is identically zero")));
            }
        }
        Ok(SemialgebraicSet { vars: vars.clone(), constraints, enclosing_box })
    }

    pub fn from_box(domain: &BoxDomain, policy: BoxPolicy) -> Result<Self> {
        let vars = VarSet::new(domain.names().iter().cloned())?;
        let faces: Vec<Poly> = domain
            .names()
            .iter()
            .zip(domain.intervals())
            .map(|(name, &(lo, hi))| {
                let x = Poly::var(&vars, name)?;
                let a = x.sub(&Poly::constant(&vars, lo))?;
                let b = Poly::constant(&vars, hi).sub(&x)?;
                a.mul(&b)
            })
            .collect::<std::result::Result<_, _>>()?;
        let constraints = match policy {
            BoxPolicy::PerFace => faces,
            BoxPolicy::Product => {
                let mut g = Poly::constant(&vars, 1.0);
                for f in &faces {
                    g = g.mul(f)?;
                }
                vec![g]
            }
        };
        Self::new(&vars, constraints, domain.clone())
    }

    pub fn vars(&self) -> &VarSet {
        &self.vars
    }

    pub fn constraints(&self) -> &[Poly] {
        &self.constraints
    }

    pub fn enclosing_box(&self) -> &BoxDomain {
        &self.enclosing_box
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        self.enclosing_box.contains(point)
            && self.constraints.iter().all(|g| g.eval(point).map(|v| v >= -1e-12).unwrap_or(false))
    }

    /// Points of a uniform grid of the enclosing box that lie in the set.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        self.enclosing_box.grid(per_axis).into_iter().filter(|p| self.contains(p)).collect()
    }

    /// The same set in renamed variables.
    pub fn renamed(&self, names: &[&str]) -> Result<Self> {
        let map: Vec<(&str, &str)> = self.vars.names().iter().map(String::as_str).zip(names.iter().copied()).collect();
        let vars = VarSet::new(names.iter().copied())?;
        let constraints = self.constraints.iter().map(|g| g.rename_vars(&map)).collect::<std::result::Result<_, _>>()?;
        Self::new(&vars, constraints, self.enclosing_box.renamed(names.iter().copied())?)
    }

    /// Image under `x_k = off_k + scale_k * u_k`, with the box mapped accordingly.
    pub fn affine_image(&self, maps: &[(f64, f64)], new_box: BoxDomain) -> Result<Self> {
        let named: Vec<(&str, f64, f64)> =
            self.vars.names().iter().zip(maps).map(|(n, &(o, s))| (n.as_str(), o, s)).collect();
        let constraints = self.constraints.iter().map(|g| g.affine_substitute(&named)).collect::<std::result::Result<_, _>>()?;
        Self::new(&self.vars, constraints, new_box)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_box_constraint() {
        let dom = BoxDomain::new([("rho", 0.0, 2.0)]).unwrap();
        let s = SemialgebraicSet::from_box(&dom, BoxPolicy::Product).unwrap();
        assert_eq!(s.constraints().len(), 1);
        let g = &s.constraints()[0];
        assert!((g.eval(&[1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(g.eval(&[3.0]).unwrap() < 0.0);
        assert!(s.contains(&[0.0]) && !s.contains(&[2.5]));
    }

    #[test]
    fn per_face_has_one_constraint_per_axis() {
        let dom = BoxDomain::new([("a", 0.0, 1.0), ("b", -1.0, 1.0)]).unwrap();
        let s = SemialgebraicSet::from_box(&dom, BoxPolicy::PerFace).unwrap();
        assert_eq!(s.constraints().len(), 2);
        assert_eq!(s.constraints()[0].degree(), Some(2));
    }

    #[test]
    fn zero_constraint_rejected() {
        let dom = BoxDomain::new([("rho", 0.0, 1.0)]).unwrap();
        let v = VarSet::new(["rho"]).unwrap();
        assert!(SemialgebraicSet::new(&v, vec![Poly::zero(&v)], dom).is_err());
    }
}
