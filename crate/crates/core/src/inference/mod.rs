//! Decision-list execution of a rule program over bit vectors.
//!
//! A target rule fires when every body literal holds: a kernel literal reads
//! its bit, `not` flips it, and `abN` holds when any of its defining rules
//! fires. The first firing target rule decides the class. When none fires the
//! instance is `unclassified`.

mod justify;
mod metrics;

use std::collections::BTreeMap;
use std::fmt;

pub use justify::{justify, AbTrace, Justification, LiteralTrace, RuleTrace};
pub use metrics::{
    evaluate, evaluate_predictions, load_metrics, predict_table, write_metrics, write_predictions, Metrics, Prediction,
};

use crate::error::{Error, Result};
use crate::ruleset::{Head, Literal, Predicate, RuleSet};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Class(String),
    Unclassified,
}

impl Outcome {
    pub fn class(&self) -> Option<&str> {
        match self {
            Outcome::Class(c) => Some(c),
            Outcome::Unclassified => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Class(c) => f.write_str(c),
            Outcome::Unclassified => f.write_str("unclassified"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Atom {
    Bit(usize),
    Ab(usize),
}

#[derive(Debug, Clone, Copy)]
struct CompiledLiteral {
    atom: Atom,
    negated: bool,
}

#[derive(Debug, Clone)]
struct CompiledRule {
    index: usize,
    body: Vec<CompiledLiteral>,
}

/// A rule set resolved against its kernel universe, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Interpreter<'a> {
    rs: &'a RuleSet,
    targets: Vec<CompiledRule>,
    groups: Vec<Vec<CompiledRule>>,
}

/// Truth values of the exception predicates for one instance, filled on demand.
struct Memo(Vec<Option<bool>>);

impl<'a> Interpreter<'a> {
    pub fn new(rs: &'a RuleSet) -> Result<Self> {
        let position: BTreeMap<u32, usize> = rs
            .kernel_universe()
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, i))
            .collect();
        let group_of: BTreeMap<u32, usize> = rs.strata().into_iter().enumerate().map(|(i, id)| (id, i)).collect();
        let compile_literal = |lit: &Literal| -> Result<CompiledLiteral> {
            let atom = match &lit.predicate {
                Predicate::Ab(id) => Atom::Ab(*group_of.get(id).ok_or_else(|| {
                    Error::InvalidRuleSet(format!("ab{id} is used but never defined"))
                })?),
                other => {
                    let k = rs.kernel_of(other).ok_or_else(|| {
                        Error::InvalidRuleSet(format!("predicate `{other}` is not bound to a kernel"))
                    })?;
                    Atom::Bit(*position.get(&k).ok_or_else(|| {
                        Error::InvalidRuleSet(format!("kernel {k} is outside the kernel universe"))
                    })?)
                }
            };
            Ok(CompiledLiteral {
                atom,
                negated: lit.negated,
            })
        };

        let mut targets = Vec::new();
        let mut groups = vec![Vec::new(); group_of.len()];
        for (index, rule) in rs.rules().iter().enumerate() {
            let body = rule.body.iter().map(&compile_literal).collect::<Result<Vec<_>>>()?;
            let compiled = CompiledRule { index, body };
            match &rule.head {
                Head::Target(_) => targets.push(compiled),
                Head::Ab(id) => groups[group_of[id]].push(compiled),
            }
        }
        Ok(Interpreter {
            rs,
            targets,
            groups,
        })
    }

    pub fn ruleset(&self) -> &'a RuleSet {
        self.rs
    }

    fn check(&self, bits: &[bool]) -> Result<()> {
        let want = self.rs.kernel_universe().len();
        if bits.len() != want {
            return Err(Error::Alignment(format!(
                "bit vector has {} entries, rule set expects {want}",
                bits.len()
            )));
        }
        Ok(())
    }

    fn ab_value(&self, group: usize, bits: &[bool], memo: &mut Memo) -> bool {
        if let Some(v) = memo.0[group] {
            return v;
        }
        let v = self.groups[group].iter().any(|r| self.body_holds(&r.body, bits, memo));
        memo.0[group] = Some(v);
        v
    }

    fn literal_value(&self, lit: &CompiledLiteral, bits: &[bool], memo: &mut Memo) -> bool {
        let atom = match lit.atom {
            Atom::Bit(i) => bits[i],
            Atom::Ab(g) => self.ab_value(g, bits, memo),
        };
        atom != lit.negated
    }

    fn body_holds(&self, body: &[CompiledLiteral], bits: &[bool], memo: &mut Memo) -> bool {
        body.iter().all(|lit| self.literal_value(lit, bits, memo))
    }

    fn new_memo(&self) -> Memo {
        Memo(vec![None; self.groups.len()])
    }

    /// Index (into `RuleSet::rules`) of the first target rule that fires.
    pub fn fired_rule(&self, bits: &[bool]) -> Result<Option<usize>> {
        self.check(bits)?;
        let mut memo = self.new_memo();
        Ok(self
            .targets
            .iter()
            .find(|r| self.body_holds(&r.body, bits, &mut memo))
            .map(|r| r.index))
    }

    pub fn predict(&self, bits: &[bool]) -> Result<Outcome> {
        Ok(match self.fired_rule(bits)? {
            Some(i) => match &self.rs.rules()[i].head {
                Head::Target(c) => Outcome::Class(c.clone()),
                Head::Ab(_) => unreachable!("only target rules are scanned"),
            },
            None => Outcome::Unclassified,
        })
    }
}

/// Classifies one bit vector aligned to `rs.kernel_universe()`.
pub fn predict(rs: &RuleSet, bits: &[bool]) -> Result<Outcome> {
    Interpreter::new(rs)?.predict(bits)
}
