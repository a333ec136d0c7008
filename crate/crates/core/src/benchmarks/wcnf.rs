//! DIMACS-wcnf ingestion: comment lines `c ...`, a header `p wcnf nv nc
//! [top]`, and clause lines `w l1 l2 ... 0`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WcnfInstance {
    pub num_vars: usize,
    /// (weight, literals); literals are 1-based, negative for negation.
    pub clauses: Vec<(f64, Vec<i32>)>,
    /// Hard-clause weight from the header, when present.
    pub top: Option<f64>,
}

impl WcnfInstance {
    pub fn total_weight(&self) -> f64 {
        self.clauses.iter().map(|(w, _)| w).sum()
    }
}

pub fn parse_wcnf(text: &str) -> Result<WcnfInstance> {
    let mut header: Option<(usize, usize, Option<f64>)> = None;
    let mut clauses: Vec<(f64, Vec<i32>)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('p') {
            if header.is_some() {
                return Err(Error::parse(line_no, "duplicate header"));
            }
            let fields: Vec<&str> = rest.split_whitespace().collect();
            if fields.len() < 3 || fields[0] != "wcnf" {
                return Err(Error::parse(line_no, format!("bad header {line:?}")));
            }
            let nv: usize = fields[1]
                .parse()
                .map_err(|_| Error::parse(line_no, "bad variable count"))?;
            let nc: usize = fields[2]
                .parse()
                .map_err(|_| Error::parse(line_no, "bad clause count"))?;
            let top = match fields.get(3) {
                Some(t) => Some(
                    t.parse::<f64>()
                        .map_err(|_| Error::parse(line_no, "bad top weight"))?,
                ),
                None => None,
            };
            header = Some((nv, nc, top));
            continue;
        }
        let Some((nv, _, _)) = header else {
            return Err(Error::parse(line_no, "clause before header"));
        };
        let mut fields = line.split_whitespace();
        let weight: f64 = fields
            .next()
            .ok_or_else(|| Error::parse(line_no, "empty clause line"))?
            .parse()
            .map_err(|_| Error::parse(line_no, "bad clause weight"))?;
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::parse(line_no, format!("weight {weight} not positive")));
        }
        let mut literals = Vec::new();
        let mut terminated = false;
        for field in fields {
            let lit: i32 = field
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad literal {field:?}")))?;
            if lit == 0 {
                terminated = true;
                break;
            }
            if lit.unsigned_abs() as usize > nv {
                return Err(Error::parse(
                    line_no,
                    format!("literal {lit} out of range for {nv} variables"),
                ));
            }
            literals.push(lit);
        }
        if !terminated {
            return Err(Error::parse(line_no, "clause missing terminating 0"));
        }
        if literals.is_empty() {
            return Err(Error::parse(line_no, "empty clause"));
        }
        clauses.push((weight, literals));
    }
    let Some((nv, nc, top)) = header else {
        return Err(Error::parse(0, "missing wcnf header"));
    };
    if clauses.len() != nc {
        return Err(Error::parse(
            0,
            format!("header declares {nc} clauses, found {}", clauses.len()),
        ));
    }
    Ok(WcnfInstance {
        num_vars: nv,
        clauses,
        top,
    })
}

pub fn serialize_wcnf(inst: &WcnfInstance) -> String {
    let mut out = String::new();
    match inst.top {
        Some(top) => out.push_str(&format!(
            "p wcnf {} {} {}\n",
            inst.num_vars,
            inst.clauses.len(),
            top
        )),
        None => out.push_str(&format!("p wcnf {} {}\n", inst.num_vars, inst.clauses.len())),
    }
    for (w, lits) in &inst.clauses {
        out.push_str(&w.to_string());
        for l in lits {
            out.push(' ');
            out.push_str(&l.to_string());
        }
        out.push_str(" 0\n");
    }
    out
}

/// Negated total weight of satisfied clauses (minimization convention).
pub fn maxsat_eval(inst: &WcnfInstance, assignment: &[bool]) -> Result<f64> {
    if assignment.len() != inst.num_vars {
        return Err(Error::invalid(format!(
            "assignment has {} variables, instance has {}",
            assignment.len(),
            inst.num_vars
        )));
    }
    let mut satisfied = 0.0;
    for (w, lits) in &inst.clauses {
        let sat = lits.iter().any(|&l| {
            let idx = (l.unsigned_abs() - 1) as usize;
            if l > 0 {
                assignment[idx]
            } else {
                !assignment[idx]
            }
        });
        if sat {
            satisfied += w;
        }
    }
    Ok(-satisfied)
}

/// Pseudo-random weighted instance with 2- and 3-literal clauses.
pub fn gen_random_wcnf(num_vars: usize, num_clauses: usize, seed: u64) -> WcnfInstance {
    let mut rng = crate::rng::RunRng::seed_from_u64(seed);
    let mut clauses = Vec::with_capacity(num_clauses);
    for _ in 0..num_clauses {
        let len = 2 + rng.below(2);
        let mut vars: Vec<usize> = Vec::new();
        while vars.len() < len {
            let v = rng.below(num_vars);
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
        let lits: Vec<i32> = vars
            .iter()
            .map(|&v| {
                let sign = if rng.uniform() < 0.5 { 1 } else { -1 };
                sign * (v as i32 + 1)
            })
            .collect();
        let weight = (rng.uniform_in(0.5, 2.0) * 100.0).round() / 100.0;
        clauses.push((weight, lits));
    }
    WcnfInstance {
        num_vars,
        clauses,
        top: None,
    }
}
