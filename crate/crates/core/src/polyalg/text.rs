//! Textual polynomial notation.
//!
//! A polynomial is written either as a JSON object mapping monomial keys to
//! coefficients (`{"1": 2, "rho^2*theta": -0.5}`) or as a string of signed
//! terms in the same monomial syntax (`"2 - 0.5*rho^2*theta"`). The constant
//! monomial key is `"1"`.

use std::collections::BTreeMap;

use serde_json::{Map, Number, Value};

use super::{Poly, PolyError, Result, VarSet};

/// Canonical key for an exponent vector, variables in set order.
pub fn monomial_key(vars: &VarSet, exponent: &[u32]) -> String {
    let parts: Vec<String> = vars
        .names()
        .iter()
        .zip(exponent)
        .filter(|(_, &k)| k > 0)
        .map(|(n, &k)| if k == 1 { n.clone() } else { format!("{n}^{k}") })
        .collect();
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join("*")
    }
}

/// Parses a monomial key such as `rho^2*theta` or `1`.
pub fn parse_monomial(key: &str, vars: &VarSet) -> Result<Vec<u32>> {
    let mut e = vec![0u32; vars.len()];
    let key = key.trim();
    if key == "1" {
        return Ok(e);
    }
    for factor in key.split('*') {
        let factor = factor.trim();
        let (name, pow) = match factor.split_once('^') {
            Some((n, p)) => {
                let p: u32 = p
                    .trim()
                    .parse()
                    .map_err(|_| PolyError::Parse(format!("bad exponent in `{factor}`")))?;
                (n.trim(), p)
            }
            None => (factor, 1),
        };
        if name == "1" {
            continue;
        }
        let i = vars.index_of(name).ok_or_else(|| PolyError::UnknownVariable(name.to_string()))?;
        e[i] += pow;
    }
    Ok(e)
}

pub fn to_json(p: &Poly) -> Value {
    let mut m = Map::new();
    for (e, c) in p.terms() {
        let v = Number::from_f64(*c).map(Value::Number).unwrap_or(Value::Null);
        m.insert(monomial_key(p.vars(), e), v);
    }
    Value::Object(m)
}

pub fn to_json_map(p: &Poly) -> BTreeMap<String, f64> {
    p.terms().map(|(e, c)| (monomial_key(p.vars(), e), *c)).collect()
}

pub fn from_json_map<'a>(map: impl IntoIterator<Item = (&'a String, &'a f64)>, vars: &VarSet) -> Result<Poly> {
    let terms = map
        .into_iter()
        .map(|(k, c)| Ok((parse_monomial(k, vars)?, *c)))
        .collect::<Result<Vec<_>>>()?;
    Poly::from_terms(vars, terms)
}

/// Accepts a number, a polynomial string, or a monomial-key object.
pub fn from_json(value: &Value, vars: &VarSet) -> Result<Poly> {
    match value {
        Value::Number(n) => {
            let c = n.as_f64().ok_or_else(|| PolyError::Parse(format!("non-finite number {n}")))?;
            Ok(Poly::constant(vars, c))
        }
        Value::String(s) => parse_poly_str(s, vars),
        Value::Object(m) => {
            let mut terms = Vec::with_capacity(m.len());
            for (k, v) in m {
                let c = v
                    .as_f64()
                    .ok_or_else(|| PolyError::Parse(format!("coefficient of `{k}` is not a number")))?;
                terms.push((parse_monomial(k, vars)?, c));
            }
            Poly::from_terms(vars, terms)
        }
        other => Err(PolyError::Parse(format!("expected number, string or object, found {other}"))),
    }
}

/// Parses a sum of signed terms `[coef][*]monomial`, e.g. `2 - rho + 0.5*rho^2`.
pub fn parse_poly_str(s: &str, vars: &VarSet) -> Result<Poly> {
    let src = s.trim();
    if src.is_empty() {
        return Err(PolyError::Parse("empty polynomial string".into()));
    }
    // split into signed chunks at +/- that are not part of a numeric exponent
    let mut chunks: Vec<(f64, String)> = Vec::new();
    let mut sign = 1.0;
    let mut body = String::new();
    for ch in src.chars() {
        if ch == '+' || ch == '-' {
            let t = body.trim();
            let sci = t.ends_with(['e', 'E'])
                && t.starts_with(|c: char| c.is_ascii_digit() || c == '.')
                && t.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E'));
            if !sci && !t.ends_with('^') {
                if t.is_empty() {
                    if ch == '-' {
                        sign = -sign;
                    }
                } else {
                    chunks.push((sign, std::mem::take(&mut body)));
                    sign = if ch == '-' { -1.0 } else { 1.0 };
                }
                continue;
            }
        }
        body.push(ch);
    }
    if body.trim().is_empty() {
        return Err(PolyError::Parse(format!("dangling sign in `{s}`")));
    }
    chunks.push((sign, body));

    let mut terms = Vec::with_capacity(chunks.len());
    for (sg, chunk) in chunks {
        let chunk = chunk.trim();
        let (coef, mono) = split_coefficient(chunk)?;
        let e = match mono {
            Some(m) => parse_monomial(m, vars)?,
            None => vec![0; vars.len()],
        };
        terms.push((e, sg * coef));
    }
    Poly::from_terms(vars, terms)
}

fn split_coefficient(chunk: &str) -> Result<(f64, Option<&str>)> {
    if chunk.is_empty() {
        return Err(PolyError::Parse("empty term".into()));
    }
    let first = chunk.chars().next().unwrap_or(' ');
    if first.is_ascii_digit() || first == '.' {
        match chunk.split_once('*') {
            Some((c, rest)) => {
                let c: f64 = c.trim().parse().map_err(|_| PolyError::Parse(format!("bad coefficient `{c}`")))?;
                Ok((c, Some(rest.trim())))
            }
            None => {
                let c: f64 = chunk.parse().map_err(|_| PolyError::Parse(format!("bad coefficient `{chunk}`")))?;
                Ok((c, None))
            }
        }
    } else {
        Ok((1.0, Some(chunk)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars() -> VarSet {
        VarSet::new(["rho", "theta"]).unwrap()
    }

    #[test]
    fn keys_round_trip() {
        let v = vars();
        assert_eq!(monomial_key(&v, &[2, 1]), "rho^2*theta");
        assert_eq!(monomial_key(&v, &[0, 0]), "1");
        assert_eq!(parse_monomial("rho^2*theta", &v).unwrap(), vec![2, 1]);
        assert_eq!(parse_monomial("theta*rho*rho", &v).unwrap(), vec![2, 1]);
        assert!(parse_monomial("sigma", &v).is_err());
    }

    #[test]
    fn parses_strings() {
        let v = vars();
        let p = parse_poly_str("2 - rho + 0.5*rho^2*theta", &v).unwrap();
        assert_eq!(p.coeff(&[0, 0]), Some(&2.0));
        assert_eq!(p.coeff(&[1, 0]), Some(&-1.0));
        assert_eq!(p.coeff(&[2, 1]), Some(&0.5));
        let q = parse_poly_str("-3+rho/2", &v);
        assert!(q.is_err());
        let r = parse_poly_str("-3 + 0.5*rho", &v).unwrap();
        assert_eq!(r.coeff(&[0, 0]), Some(&-3.0));
        let s = parse_poly_str("1e-3*theta - 2.5e+1", &v).unwrap();
        assert_eq!(s.coeff(&[0, 1]), Some(&1e-3));
        assert_eq!(s.coeff(&[0, 0]), Some(&-25.0));
        assert!(parse_poly_str("", &v).is_err());
        assert!(parse_poly_str("rho -", &v).is_err());
    }

    #[test]
    fn json_forms() {
        let v = vars();
        let p = from_json(&serde_json::json!({"1": 2.0, "rho^2": -1}), &v).unwrap();
        let back = from_json(&to_json(&p), &v).unwrap();
        assert_eq!(p, back);
        assert_eq!(from_json(&serde_json::json!(4.5), &v).unwrap(), Poly::constant(&v, 4.5));
        assert!(from_json(&serde_json::json!([1, 2]), &v).is_err());
    }
}
