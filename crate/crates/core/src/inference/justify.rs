use std::fmt::Write;

use super::{Atom, CompiledLiteral, CompiledRule, Interpreter, Memo, Outcome};
use crate::error::Result;
use crate::ruleset::{Head, Literal, RuleSet};

/// One evaluated body literal. `value` is the truth of the literal itself,
/// so `not p` with `p` false has `value == true`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiteralTrace {
    pub literal: Literal,
    pub value: bool,
    pub ab: Option<AbTrace>,
}

/// Why an exception predicate does or does not hold.
#[derive(Debug, Clone, PartialEq)]
pub struct AbTrace {
    pub id: u32,
    pub holds: bool,
    /// Defining rules up to and including the first that fires.
    pub rules: Vec<RuleTrace>,
}

/// A rule body traced up to and including its first false literal.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleTrace {
    pub rule: usize,
    pub fired: bool,
    pub literals: Vec<LiteralTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Justification {
    pub outcome: Outcome,
    pub fired_rule: Option<usize>,
    /// Every literal of the fired rule; empty when nothing fired.
    pub literal_trace: Vec<LiteralTrace>,
    /// Target rules tried before the outcome was decided, each with its first false literal.
    pub failed_rules: Vec<(usize, Literal)>,
}

impl Interpreter<'_> {
    fn trace_literal(&self, lit: &CompiledLiteral, source: &Literal, bits: &[bool], memo: &mut Memo) -> LiteralTrace {
        let value = self.literal_value(lit, bits, memo);
        let ab = match (lit.atom, &source.predicate) {
            (Atom::Ab(g), crate::ruleset::Predicate::Ab(id)) => {
                let mut rules = Vec::new();
                for r in &self.groups[g] {
                    let t = self.trace_rule(r, bits, memo, false);
                    let fired = t.fired;
                    rules.push(t);
                    if fired {
                        break;
                    }
                }
                Some(AbTrace {
                    id: *id,
                    holds: value != lit.negated,
                    rules,
                })
            }
            _ => None,
        };
        LiteralTrace {
            literal: source.clone(),
            value,
            ab,
        }
    }

    fn trace_rule(&self, rule: &CompiledRule, bits: &[bool], memo: &mut Memo, complete: bool) -> RuleTrace {
        let source = &self.rs.rules()[rule.index].body;
        let mut literals = Vec::new();
        let mut fired = true;
        for (lit, src) in rule.body.iter().zip(source) {
            let t = self.trace_literal(lit, src, bits, memo);
            let value = t.value;
            literals.push(t);
            if !value {
                fired = false;
                if !complete {
                    break;
                }
            }
        }
        RuleTrace {
            rule: rule.index,
            fired,
            literals,
        }
    }

    pub fn justify(&self, bits: &[bool]) -> Result<Justification> {
        self.check(bits)?;
        let mut memo = self.new_memo();
        let mut failed_rules = Vec::new();
        for rule in &self.targets {
            let trace = self.trace_rule(rule, bits, &mut memo, true);
            if trace.fired {
                let Head::Target(class) = &self.rs.rules()[rule.index].head else {
                    unreachable!("only target rules are scanned")
                };
                return Ok(Justification {
                    outcome: Outcome::Class(class.clone()),
                    fired_rule: Some(rule.index),
                    literal_trace: trace.literals,
                    failed_rules,
                });
            }
            let first_false = trace.literals.into_iter().find(|t| !t.value).expect("a rule that did not fire has a false literal");
            failed_rules.push((rule.index, first_false.literal));
        }
        Ok(Justification {
            outcome: Outcome::Unclassified,
            fired_rule: None,
            literal_trace: Vec::new(),
            failed_rules,
        })
    }
}

/// Traced evaluation of one bit vector; its outcome always equals [`super::predict`].
pub fn justify(rs: &RuleSet, bits: &[bool]) -> Result<Justification> {
    Interpreter::new(rs)?.justify(bits)
}

fn render_literal(out: &mut String, rs: &RuleSet, t: &LiteralTrace, depth: usize) {
    let indent = "  ".repeat(depth);
    let name = if t.literal.negated {
        format!("not {}", t.literal.predicate)
    } else {
        t.literal.predicate.to_string()
    };
    writeln!(out, "{indent}{name}: {}", t.value).unwrap();
    if let Some(ab) = &t.ab {
        writeln!(out, "{indent}  ab{}: {}", ab.id, ab.holds).unwrap();
        for r in &ab.rules {
            render_rule(out, rs, r, depth + 2);
        }
    }
}

fn render_rule(out: &mut String, rs: &RuleSet, t: &RuleTrace, depth: usize) {
    let indent = "  ".repeat(depth);
    let verdict = if t.fired { "fires" } else { "fails" };
    writeln!(
        out,
        "{indent}rule {} {verdict}: {}",
        t.rule + 1,
        crate::ruleset::format_rule(&rs.rules()[t.rule])
    )
    .unwrap();
    for l in &t.literals {
        render_literal(out, rs, l, depth + 1);
    }
}

impl Justification {
    /// Indented tree with one line per evaluated literal. Rule numbers are 1-based.
    pub fn render(&self, rs: &RuleSet) -> String {
        let mut out = String::new();
        match self.fired_rule {
            Some(i) => {
                writeln!(out, "{}: rule {} fires", self.outcome, i + 1).unwrap();
                writeln!(out, "  {}", crate::ruleset::format_rule(&rs.rules()[i])).unwrap();
                for l in &self.literal_trace {
                    render_literal(&mut out, rs, l, 2);
                }
            }
            None => writeln!(out, "unclassified: no rule fires").unwrap(),
        }
        if !self.failed_rules.is_empty() {
            writeln!(out, "  earlier rules:").unwrap();
            for (i, lit) in &self.failed_rules {
                let name = if lit.negated {
                    format!("not {}", lit.predicate)
                } else {
                    lit.predicate.to_string()
                };
                writeln!(out, "    rule {}: {name} is false", i + 1).unwrap();
            }
        }
        out
    }
}
