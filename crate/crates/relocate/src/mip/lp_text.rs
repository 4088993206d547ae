//! Textual dump of programs in the LP file format, for cross-checking
//! models with external tools. Write-only; never parsed back.

use std::fmt::Write as _;

use super::{IntegerProgram, Relation};

fn sanitize(name: &str) -> String {
    let mut out: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if out.is_empty() || out.starts_with(|c: char| c.is_ascii_digit()) {
        out.insert(0, 'x');
    }
    out
}

fn fmt_coeff(first: bool, coeff: f64, name: &str, out: &mut String) {
    let sign = if coeff < 0.0 {
        "-"
    } else if first {
        ""
    } else {
        "+"
    };
    let mag = coeff.abs();
    if first && sign.is_empty() {
        let _ = write!(out, "{mag} {name}");
    } else {
        let _ = write!(out, " {sign} {mag} {name}");
    }
}

/// Renders the program in LP file format.
pub fn write_lp(program: &IntegerProgram, problem_name: &str) -> String {
    let names: Vec<String> = program
        .variables
        .iter()
        .map(|v| sanitize(&v.name))
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "\\ Problem: {problem_name}");
    let _ = writeln!(out, "Minimize");
    let mut obj_line = String::from(" obj: ");
    let mut first = true;
    for (j, &c) in program.objective.iter().enumerate() {
        if c != 0.0 {
            fmt_coeff(first, c, &names[j], &mut obj_line);
            first = false;
        }
    }
    if first {
        let _ = write!(obj_line, "0 {}", names.first().map(String::as_str).unwrap_or("x"));
    }
    let _ = writeln!(out, "{obj_line}");

    let _ = writeln!(out, "Subject To");
    for (i, c) in program.constraints.iter().enumerate() {
        let cname = if c.name.is_empty() {
            format!("c{i}")
        } else {
            sanitize(&c.name)
        };
        let mut line = format!(" {cname}: ");
        let mut first = true;
        for &(var, a) in &c.coeffs {
            if a != 0.0 {
                fmt_coeff(first, a, &names[var.0], &mut line);
                first = false;
            }
        }
        if first {
            let _ = write!(line, "0 {}", names[0]);
        }
        let rel = match c.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        let _ = writeln!(out, "{line} {rel} {}", c.rhs);
    }

    let _ = writeln!(out, "Bounds");
    for (j, v) in program.variables.iter().enumerate() {
        let name = &names[j];
        let (lo, hi) = (v.lower, v.upper);
        if lo == 0.0 && hi == f64::INFINITY {
            continue;
        }
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            let _ = writeln!(out, " {name} free");
        } else if lo == hi {
            let _ = writeln!(out, " {name} = {lo}");
        } else if hi == f64::INFINITY {
            let _ = writeln!(out, " {name} >= {lo}");
        } else if lo == f64::NEG_INFINITY {
            let _ = writeln!(out, " -infinity <= {name} <= {hi}");
        } else {
            let _ = writeln!(out, " {lo} <= {name} <= {hi}");
        }
    }

    if program.variables.iter().any(|v| v.integer) {
        let _ = writeln!(out, "General");
        for (j, v) in program.variables.iter().enumerate() {
            if v.integer {
                let _ = writeln!(out, " {}", names[j]);
            }
        }
    }
    let _ = writeln!(out, "End");
    out
}

#[cfg(test)]
mod tests {
    use super::super::{IntegerProgram, Relation};
    use super::*;

    #[test]
    fn renders_small_model() {
        let mut prog = IntegerProgram::new();
        let f = prog.add_var("f", 0.0, 7.0, true);
        let big_f = prog.add_var("F", 0.0, f64::INFINITY, true);
        prog.set_objective(f, 1.0);
        prog.set_objective(big_f, 2.0);
        prog.add_constraint("couple", vec![(f, 1.0), (big_f, -5.0)], Relation::Le, 0.0);
        prog.add_constraint("fix", vec![(f, 1.0)], Relation::Eq, 7.0);
        let text = write_lp(&prog, "tiny");
        let expected = "\\ Problem: tiny\n\
                        Minimize\n \
                        obj: 1 f + 2 F\n\
                        Subject To\n \
                        couple: 1 f - 5 F <= 0\n \
                        fix: 1 f = 7\n\
                        Bounds\n \
                        0 <= f <= 7\n\
                        General\n f\n F\n\
                        End\n";
        assert_eq!(text, expected);
    }
}
