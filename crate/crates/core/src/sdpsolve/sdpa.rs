//! SDPA sparse (`.dat-s`) files.
//!
//! The primal problem `min <C, X> s.t. <A_k, X> = b_k` is the SDPA dual
//! `max <F_0, Y> s.t. <F_k, Y> = c_k` with `F_0 = -C`, `F_k = A_k`, `c = b`.
//! Entries are written in problem order and values use the shortest
//! round-tripping decimal form, so import after export reproduces the
//! problem entry for entry.

use std::fmt::Write as _;
use std::path::Path;

use super::{BlockKind, Constraint, Entry, SdpError, SdpProblem};

pub fn to_sdpa_string(problem: &SdpProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\"lpvjump SDP export");
    let _ = writeln!(out, "{}", problem.constraints.len());
    let _ = writeln!(out, "{}", problem.blocks.len());
    let sizes: Vec<String> = problem.blocks.iter().map(|b| b.sdpa_size().to_string()).collect();
    let _ = writeln!(out, "{}", sizes.join(" "));
    let rhs: Vec<String> = problem.constraints.iter().map(|c| format!("{:e}", c.rhs)).collect();
    let _ = writeln!(out, "{}", rhs.join(" "));
    for e in &problem.objective {
        let _ = writeln!(out, "0 {} {} {} {:e}", e.block + 1, e.i + 1, e.j + 1, -e.v);
    }
    for (k, c) in problem.constraints.iter().enumerate() {
        for e in &c.entries {
            let _ = writeln!(out, "{} {} {} {} {:e}", k + 1, e.block + 1, e.i + 1, e.j + 1, e.v);
        }
    }
    out
}

pub fn export_sdpa(problem: &SdpProblem, path: impl AsRef<Path>) -> Result<(), SdpError> {
    problem.validate()?;
    std::fs::write(path, to_sdpa_string(problem))?;
    Ok(())
}

pub fn import_sdpa(path: impl AsRef<Path>) -> Result<SdpProblem, SdpError> {
    from_sdpa_str(&std::fs::read_to_string(path)?)
}

fn perr(line: usize, msg: impl Into<String>) -> SdpError {
    SdpError::Parse { line, msg: msg.into() }
}

/// Tokens of the header, tolerating the `{ } ( ) ,` punctuation some writers use.
fn header_tokens(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c.is_whitespace() || matches!(c, ',' | '{' | '}' | '(' | ')')).filter(|t| !t.is_empty())
}

pub fn from_sdpa_str(text: &str) -> Result<SdpProblem, SdpError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('"') && !l.starts_with('*'));

    let mut next_line = |what: &str| lines.next().ok_or_else(|| perr(text.lines().count().max(1), format!("missing {what}")));

    let (ln, l) = next_line("constraint count")?;
    let m: usize = header_tokens(l)
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(ln, format!("expected constraint count, found `{l}`")))?;
    if m == 0 {
        return Err(perr(ln, "problem has no constraints"));
    }
    let (ln, l) = next_line("block count")?;
    let nb: usize = header_tokens(l)
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(ln, format!("expected block count, found `{l}`")))?;
    if nb == 0 {
        return Err(perr(ln, "problem has no blocks"));
    }

    let mut blocks = Vec::with_capacity(nb);
    while blocks.len() < nb {
        let (ln, l) = next_line("block sizes")?;
        for t in header_tokens(l) {
            if blocks.len() == nb {
                break;
            }
            let s: i64 = t.parse().map_err(|_| perr(ln, format!("bad block size `{t}`")))?;
            blocks.push(match s {
                0 => return Err(perr(ln, "zero block size")),
                s if s > 0 => BlockKind::Psd(s as usize),
                s => BlockKind::Diag(s.unsigned_abs() as usize),
            });
        }
    }

    let mut rhs = Vec::with_capacity(m);
    while rhs.len() < m {
        let (ln, l) = next_line("right-hand side vector")?;
        for t in header_tokens(l) {
            if rhs.len() == m {
                break;
            }
            let v: f64 = t.parse().map_err(|_| perr(ln, format!("bad number `{t}`")))?;
            if !v.is_finite() {
                return Err(perr(ln, "non-finite right-hand side"));
            }
            rhs.push(v);
        }
    }

    let mut objective = Vec::new();
    let mut constraints: Vec<Constraint> = rhs.into_iter().map(|rhs| Constraint { rhs, entries: Vec::new() }).collect();
    for (ln, l) in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(perr(ln, format!("expected 5 fields, found {}", toks.len())));
        }
        let int = |t: &str| -> Result<usize, SdpError> { t.parse().map_err(|_| perr(ln, format!("bad index `{t}`"))) };
        let k = int(toks[0])?;
        let b = int(toks[1])?;
        let i = int(toks[2])?;
        let j = int(toks[3])?;
        let v: f64 = toks[4].parse().map_err(|_| perr(ln, format!("bad value `{}`", toks[4])))?;
        if !v.is_finite() {
            return Err(perr(ln, "non-finite value"));
        }
        if k > m {
            return Err(perr(ln, format!("matrix index {k} exceeds {m}")));
        }
        if b == 0 || b > nb {
            return Err(perr(ln, format!("block index {b} out of range")));
        }
        let n = blocks[b - 1].dim();
        if i == 0 || j == 0 || i > n || j > n {
            return Err(perr(ln, format!("entry ({i}, {j}) outside block {b} of order {n}")));
        }
        if matches!(blocks[b - 1], BlockKind::Diag(_)) && i != j {
            return Err(perr(ln, "off-diagonal entry in diagonal block"));
        }
        let (i, j) = if i <= j { (i - 1, j - 1) } else { (j - 1, i - 1) };
        if k == 0 {
            objective.push(Entry { block: b - 1, i, j, v: -v });
        } else {
            constraints[k - 1].entries.push(Entry { block: b - 1, i, j, v });
        }
    }

    Ok(SdpProblem { blocks, objective, constraints })
}
