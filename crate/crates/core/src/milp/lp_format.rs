//! CPLEX-style LP text export.

use std::collections::HashSet;
use std::fmt::Write;

use super::{MilpModel, Sense, VarId, VarKind};

fn sanitize(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.()[]{}".contains(c) { c } else { '_' })
        .collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit() || c == '.') || s.eq_ignore_ascii_case("free") {
        s.insert_str(0, "v_");
    }
    s
}

/// Unique LP-safe names, stable in variable order.
fn names(model: &MilpModel) -> Vec<String> {
    let mut used = HashSet::new();
    model
        .variables()
        .iter()
        .map(|v| {
            let base = sanitize(&v.name);
            let mut name = base.clone();
            let mut k = v.id.0;
            while !used.insert(name.to_ascii_lowercase()) {
                name = format!("{base}_{k}");
                k += 1;
            }
            name
        })
        .collect()
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn terms(out: &mut String, coeffs: &[(VarId, f64)], names: &[String]) {
    let mut merged: Vec<(usize, f64)> = Vec::new();
    for &(v, c) in coeffs {
        match merged.iter_mut().find(|(id, _)| *id == v.0) {
            Some(e) => e.1 += c,
            None => merged.push((v.0, c)),
        }
    }
    merged.retain(|(_, c)| *c != 0.0);
    if merged.is_empty() {
        // LP readers need at least one term per row.
        let _ = write!(out, " 0 {}", names.first().map_or("v_0", String::as_str));
        return;
    }
    for (k, (id, c)) in merged.iter().enumerate() {
        let sign = match (k, *c < 0.0) {
            (0, true) => "-",
            (0, false) => "",
            (_, true) => "- ",
            (_, false) => "+ ",
        };
        let _ = write!(out, " {sign}{} {}", num(c.abs()), names[*id]);
    }
}

/// Renders the model in LP format with deterministic ordering. Constraint
/// tags appear as comments.
pub fn export_lp(model: &MilpModel) -> String {
    let names = names(model);
    let mut out = String::new();
    let _ = writeln!(out, "\\ {} variables, {} constraints", model.n_vars(), model.n_constraints());
    out.push_str("Minimize\n obj:");
    terms(&mut out, &model.objective().coeffs, &names);
    let constant = model.objective().constant;
    if constant != 0.0 {
        let _ = write!(out, " {} {}", if constant < 0.0 { "-" } else { "+" }, num(constant.abs()));
    }
    out.push_str("\nSubject To\n");
    let mut last_tag: Option<&str> = None;
    for (i, c) in model.constraints().iter().enumerate() {
        if last_tag != Some(c.tag.as_str()) {
            let _ = writeln!(out, "\\ tag: {}", c.tag);
            last_tag = Some(&c.tag);
        }
        let _ = write!(out, " c{i}:");
        terms(&mut out, &c.coeffs, &names);
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        };
        let _ = writeln!(out, " {op} {}", num(c.rhs));
    }
    out.push_str("Bounds\n");
    for (v, name) in model.variables().iter().zip(&names) {
        if v.lower == v.upper {
            let _ = writeln!(out, " {name} = {}", num(v.lower));
        } else if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            let _ = writeln!(out, " {name} free");
        } else {
            let _ = writeln!(out, " {} <= {name} <= {}", num(v.lower), num(v.upper));
        }
    }
    for (kind, header) in [(VarKind::Binary, "Binaries"), (VarKind::Integer, "Generals")] {
        let list: Vec<&str> = model
            .variables()
            .iter()
            .zip(&names)
            .filter(|(v, _)| v.kind == kind)
            .map(|(_, n)| n.as_str())
            .collect();
        if !list.is_empty() {
            let _ = writeln!(out, "{header}");
            for chunk in list.chunks(8) {
                let _ = writeln!(out, " {}", chunk.join(" "));
            }
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variable_model() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, 10.0).unwrap();
        m.add_constraint(vec![(x, 1.0)], Sense::Ge, 1.0, "user").unwrap();
        m.set_objective(vec![(x, 1.0)], 0.0).unwrap();
        let text = export_lp(&m);
        assert!(text.contains("Minimize"));
        assert!(text.contains("x >= 1"));
        assert!(text.contains("\\ tag: user"));
        assert!(text.ends_with("End\n"));
    }

    #[test]
    fn binaries_and_generals_sections() {
        let mut m = MilpModel::new();
        m.add_binary("b");
        m.add_variable("k", VarKind::Integer, 0.0, 5.0).unwrap();
        let text = export_lp(&m);
        let b = text.find("Binaries\n b\n").expect("binary section");
        let g = text.find("Generals\n k\n").expect("general section");
        assert!(b < g);
    }

    #[test]
    fn names_are_sanitized_and_unique() {
        let mut m = MilpModel::new();
        m.add_continuous("x[age]", 0.0, 1.0).unwrap();
        m.add_continuous("x[age]", 0.0, 1.0).unwrap();
        m.add_continuous("3 <= y", 0.0, 1.0).unwrap();
        let n = names(&m);
        assert_eq!(n[0], "x[age]");
        assert_eq!(n[1], "x[age]_1");
        assert_eq!(n[2], "v_3____y");
    }

    #[test]
    fn export_is_deterministic() {
        let mut m = MilpModel::new();
        let a = m.add_binary("a");
        let b = m.add_continuous("b", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        m.add_constraint(vec![(a, 2.0), (b, -1.5), (a, 1.0)], Sense::Le, 4.0, "embedding:linear").unwrap();
        m.set_objective(vec![(b, -1.0)], 2.5).unwrap();
        let text = export_lp(&m);
        assert_eq!(text, export_lp(&m.clone()));
        assert!(text.contains(" c0: 3 a - 1.5 b <= 4"));
        assert!(text.contains(" b free"));
        assert!(text.contains("obj: -1 b + 2.5"));
    }
}
