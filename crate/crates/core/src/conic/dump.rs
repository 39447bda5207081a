use super::{AffineExpr, ConicProgram};
use std::fmt::Write;

fn var_name(p: &ConicProgram, j: usize) -> String {
    match p.names.get(j) {
        Some(n) if !n.is_empty() => n.clone(),
        _ => format!("x{j}"),
    }
}

fn linear(p: &ConicProgram, terms: &[(usize, f64)]) -> String {
    if terms.is_empty() {
        return "0".into();
    }
    let mut out = String::new();
    for (k, &(j, c)) in terms.iter().enumerate() {
        if k > 0 {
            out.push_str(if c < 0.0 { " - " } else { " + " });
        } else if c < 0.0 {
            out.push('-');
        }
        let _ = write!(out, "{:e} {}", c.abs(), var_name(p, j));
    }
    out
}

fn affine(p: &ConicProgram, e: &AffineExpr) -> String {
    if e.terms.is_empty() {
        return format!("{:e}", e.constant);
    }
    if e.constant == 0.0 {
        linear(p, &e.terms)
    } else {
        format!("{} + {:e}", linear(p, &e.terms), e.constant)
    }
}

/// Human-readable listing of a program, one item per line.
pub fn dump_program(p: &ConicProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {} variables, {} equalities, {} rows, {} cones",
        p.num_vars(),
        p.equalities.len(),
        p.rows.len(),
        p.cones.len()
    );
    let obj: Vec<(usize, f64)> = p
        .objective
        .iter()
        .copied()
        .enumerate()
        .filter(|t| t.1 != 0.0)
        .collect();
    let _ = writeln!(
        out,
        "minimize {} + {:e}",
        linear(p, &obj),
        p.objective_offset
    );
    for j in 0..p.num_vars() {
        let _ = writeln!(
            out,
            "var {} in [{:e}, {:e}]",
            var_name(p, j),
            p.lower[j],
            p.upper[j]
        );
    }
    for (i, e) in p.equalities.iter().enumerate() {
        let _ = writeln!(out, "eq{i}: {} = {:e}", linear(p, &e.terms), e.rhs);
    }
    for (i, r) in p.rows.iter().enumerate() {
        let _ = writeln!(
            out,
            "row{i}: {:e} <= {} <= {:e}",
            r.lo,
            linear(p, &r.terms),
            r.hi
        );
    }
    for (i, k) in p.cones.iter().enumerate() {
        let w: Vec<String> = k.w.iter().map(|e| affine(p, e)).collect();
        let _ = writeln!(
            out,
            "cone{i}: 2 ({}) ({}) >= |[{}]|^2",
            affine(p, &k.u),
            affine(p, &k.v),
            w.join("; ")
        );
    }
    out
}
