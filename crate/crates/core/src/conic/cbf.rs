//! Conic Benchmark Format (CBF v3) writer, for handing a subproblem to an
//! external solver when debugging.
//!
//! CBF constraints read `A x + b ∈ K`. Its exponential cone is
//! `x₁ ≥ x₂ exp(x₃ / x₂)`, the reverse of the internal (x, y, z) order, so
//! exponential rows are emitted back to front.

use std::fmt::Write;

use super::{ConeKind, ConeProgram};

pub(super) fn write(program: &ConeProgram) -> String {
    let rows = program.lowered();
    let mut out = String::new();
    let n = program.num_vars();
    let _ = writeln!(out, "# {} variables, {} constraint blocks", n, rows.len());
    let _ = writeln!(out, "VER\n3\n\nOBJSENSE\nMAX\n\nVAR\n{n} 1\nF {n}\n");

    let mut blocks: Vec<(String, usize)> = Vec::new();
    let mut acoord = Vec::new();
    let mut bcoord = Vec::new();
    let mut row = 0;
    for c in &rows {
        let name = match c.kind {
            ConeKind::Zero => "L=",
            ConeKind::Nonneg => "L+",
            ConeKind::Soc => "Q",
            ConeKind::Exp => "EXP",
        };
        match blocks.last_mut() {
            Some((last, k)) if last == name && matches!(c.kind, ConeKind::Zero | ConeKind::Nonneg) => *k += c.exprs.len(),
            _ => blocks.push((name.to_string(), c.exprs.len())),
        }
        let ordered: Vec<_> = if c.kind == ConeKind::Exp {
            c.exprs.iter().rev().collect()
        } else {
            c.exprs.iter().collect()
        };
        for e in ordered {
            let e = e.compact();
            for (v, coef) in &e.terms {
                acoord.push(format!("{row} {} {coef:e}", v.0));
            }
            if e.constant != 0.0 {
                bcoord.push(format!("{row} {:e}", e.constant));
            }
            row += 1;
        }
    }

    let _ = writeln!(out, "CON\n{row} {}", blocks.len());
    for (name, k) in &blocks {
        let _ = writeln!(out, "{name} {k}");
    }
    let obj = program.objective().compact();
    let _ = writeln!(out, "\nOBJACOORD\n{}", obj.terms.len());
    for (v, c) in &obj.terms {
        let _ = writeln!(out, "{} {c:e}", v.0);
    }
    if obj.constant != 0.0 {
        let _ = writeln!(out, "\nOBJBCOORD\n{:e}", obj.constant);
    }
    let _ = writeln!(out, "\nACOORD\n{}", acoord.len());
    for line in &acoord {
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out, "\nBCOORD\n{}", bcoord.len());
    for line in &bcoord {
        let _ = writeln!(out, "{line}");
    }
    out
}

#[cfg(test)]
mod tests {
    use crate::conic::ConeProgram;

    #[test]
    fn small_program_layout() {
        let mut p = ConeProgram::new();
        let x = p.var("x");
        let t = p.var("t");
        p.add_le(x, 3.0, "cap").unwrap();
        p.add_exp(x, 1.0, t, "exp").unwrap();
        p.maximize(x - t);
        let s = p.to_cbf();
        assert!(s.contains("VER\n3"));
        assert!(s.contains("OBJSENSE\nMAX"));
        assert!(s.contains("VAR\n2 1\nF 2"));
        assert!(s.contains("CON\n4 2\nL+ 1\nEXP 3"));
        // exp rows reversed: first exp row is t (var 1), last is x (var 0)
        assert!(s.contains("1 1 1e0"));
        assert!(s.contains("3 0 1e0"));
        assert!(s.contains("2 1e0"), "y = 1 lands in the middle exp row");
    }
}
