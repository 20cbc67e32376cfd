use std::fmt::Write;

use super::{derived_classes, derived_kernels, Head, Literal, Rule, RuleSet};

pub(crate) fn quote_class(class: &str) -> String {
    let mut out = String::with_capacity(class.len() + 2);
    out.push('\'');
    for c in class.chars() {
        if matches!(c, '\\' | '\'' | '`') {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('\'');
    out
}

pub(crate) fn format_head(head: &Head, var: &str) -> String {
    match head {
        Head::Target(class) => format!("target({var},{})", quote_class(class)),
        Head::Ab(n) => format!("ab{n}({var})"),
    }
}

pub(crate) fn format_literal(lit: &Literal, var: &str) -> String {
    if lit.negated {
        format!("not {}({var})", lit.predicate)
    } else {
        format!("{}({var})", lit.predicate)
    }
}

/// One rule in program syntax with `X` as the variable.
pub fn format_rule(rule: &Rule) -> String {
    let head = format_head(&rule.head, "X");
    if rule.body.is_empty() {
        return format!("{head}.");
    }
    let body: Vec<String> = rule.body.iter().map(|l| format_literal(l, "X")).collect();
    format!("{head} :- {}.", body.join(", "))
}

/// Renders a rule program, one rule per line.
///
/// Metadata that cannot be recovered from the rules alone (class order, kernel
/// universe, label bindings, learned coverage) is written as `%!` comments so
/// that [`super::parse_ruleset`] restores an identical value.
pub fn print_ruleset(rs: &RuleSet) -> String {
    let mut out = String::new();
    if rs.class_labels() != derived_classes(rs.rules()) {
        let quoted: Vec<String> = rs.class_labels().iter().map(|c| quote_class(c)).collect();
        writeln!(out, "%! classes {}", quoted.join(" ")).unwrap();
    }
    if rs.kernel_universe() != derived_kernels(rs.rules(), rs.bindings()) {
        let ids: Vec<String> = rs.kernel_universe().iter().map(u32::to_string).collect();
        writeln!(out, "%! kernels {}", ids.join(" ")).unwrap();
    }
    for (label, k) in rs.bindings() {
        writeln!(out, "%! bind {label} {k}").unwrap();
    }
    for rule in rs.rules() {
        out.push_str(&format_rule(rule));
        if let Some(c) = rule.coverage {
            write!(out, " %! coverage {c}").unwrap();
        }
        out.push('\n');
    }
    out
}
