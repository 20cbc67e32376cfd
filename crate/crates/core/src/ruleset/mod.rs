//! Rule programs: ordered default rules with negation-as-failure and `abN` exception
//! predicates, plus their concrete syntax (`.lp` files), semantic relabelling and
//! size statistics.
//!
//! A [`RuleSet`] is always stratified: exception predicates may only depend on
//! other exception predicates along an acyclic graph.

mod labels;
mod parse;
mod print;
mod stats;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::interchange::is_identifier;

pub use labels::{apply_labels, load_label_map, write_label_map, LabelMap};
pub use parse::parse_ruleset;
pub use print::{format_rule, print_ruleset};
pub use stats::{stats, RuleSetStats};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predicate {
    /// Raw kernel predicate, printed as a bare integer: `54(X)`.
    Kernel(u32),
    /// Semantically labelled predicate, e.g. `cabinets2_door1(X)`.
    Concept(String),
    /// Exception predicate `abN(X)`.
    Ab(u32),
}

impl Predicate {
    pub fn is_ab(&self) -> bool {
        matches!(self, Predicate::Ab(_))
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Kernel(k) => write!(f, "{k}"),
            Predicate::Concept(name) => f.write_str(name),
            Predicate::Ab(n) => write!(f, "ab{n}"),
        }
    }
}

/// A body literal; `negated` is negation as failure.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Literal {
    pub predicate: Predicate,
    pub negated: bool,
}

impl Literal {
    pub fn pos(predicate: Predicate) -> Self {
        Literal {
            predicate,
            negated: false,
        }
    }

    pub fn neg(predicate: Predicate) -> Self {
        Literal {
            predicate,
            negated: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Head {
    Target(String),
    Ab(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub head: Head,
    pub body: Vec<Literal>,
    /// Training examples the rule covered when it was learned.
    pub coverage: Option<usize>,
}

impl Rule {
    pub fn new(head: Head, body: Vec<Literal>) -> Self {
        Rule {
            head,
            body,
            coverage: None,
        }
    }

    pub fn target(class: impl Into<String>, body: Vec<Literal>) -> Self {
        Rule::new(Head::Target(class.into()), body)
    }

    pub fn ab(id: u32, body: Vec<Literal>) -> Self {
        Rule::new(Head::Ab(id), body)
    }

    pub fn with_coverage(mut self, coverage: usize) -> Self {
        self.coverage = Some(coverage);
        self
    }

    pub fn is_target(&self) -> bool {
        matches!(self.head, Head::Target(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<Rule>,
    class_labels: Vec<String>,
    kernel_universe: Vec<u32>,
    /// Concept predicate name → kernel it stands for.
    bindings: BTreeMap<String, u32>,
}

/// `abN` names are reserved for exception predicates.
pub(crate) fn is_ab_name(name: &str) -> bool {
    name.strip_prefix("ab")
        .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

impl RuleSet {
    pub fn new(
        rules: Vec<Rule>,
        class_labels: Vec<String>,
        kernel_universe: Vec<u32>,
        bindings: BTreeMap<String, u32>,
    ) -> Result<Self> {
        let rs = RuleSet {
            rules,
            class_labels,
            kernel_universe,
            bindings,
        };
        rs.validate()?;
        Ok(rs)
    }

    /// Builds a rule-set whose class labels (first appearance order) and kernel
    /// universe (sorted kernels referenced) are derived from the rules.
    pub fn from_rules(rules: Vec<Rule>) -> Result<Self> {
        let class_labels = derived_classes(&rules);
        let kernel_universe = derived_kernels(&rules, &BTreeMap::new());
        RuleSet::new(rules, class_labels, kernel_universe, BTreeMap::new())
    }

    pub fn empty(class_labels: Vec<String>, kernel_universe: Vec<u32>) -> Result<Self> {
        RuleSet::new(Vec::new(), class_labels, kernel_universe, BTreeMap::new())
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn kernel_universe(&self) -> &[u32] {
        &self.kernel_universe
    }

    pub fn bindings(&self) -> &BTreeMap<String, u32> {
        &self.bindings
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Target rules with their index in [`RuleSet::rules`], in decision-list order.
    pub fn target_rules(&self) -> impl Iterator<Item = (usize, &Rule)> {
        self.rules.iter().enumerate().filter(|(_, r)| r.is_target())
    }

    /// Indices of the rules defining `abN`.
    pub fn ab_definitions(&self, id: u32) -> impl Iterator<Item = usize> + '_ {
        self.rules
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.head == Head::Ab(id))
            .map(|(i, _)| i)
    }

    /// Kernel a body predicate reads, if it is bound to one.
    pub fn kernel_of(&self, predicate: &Predicate) -> Option<u32> {
        match predicate {
            Predicate::Kernel(k) => Some(*k),
            Predicate::Concept(name) => self.bindings.get(name).copied(),
            Predicate::Ab(_) => None,
        }
    }

    /// Kernels whose predicates appear in some rule body (the significant kernels).
    pub fn significant_kernels(&self) -> BTreeSet<u32> {
        self.rules
            .iter()
            .flat_map(|r| &r.body)
            .filter_map(|l| self.kernel_of(&l.predicate))
            .collect()
    }

    /// Exception ids in dependency order: every id appears after all ids its rules reference.
    pub fn strata(&self) -> Vec<u32> {
        // validate() guarantees acyclicity, so this cannot fail on a constructed value.
        ab_topological_order(&self.rules).unwrap_or_default()
    }

    pub(crate) fn with_renamed(&self, rules: Vec<Rule>, bindings: BTreeMap<String, u32>) -> Result<Self> {
        RuleSet::new(
            rules,
            self.class_labels.clone(),
            self.kernel_universe.clone(),
            bindings,
        )
    }

    fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidRuleSet(msg));

        let mut classes = HashSet::new();
        for class in &self.class_labels {
            if class.is_empty() || class.chars().any(char::is_control) {
                return invalid(format!("bad class label {class:?}"));
            }
            if !classes.insert(class.as_str()) {
                return invalid(format!("duplicate class label {class:?}"));
            }
        }
        let universe: HashSet<u32> = self.kernel_universe.iter().copied().collect();
        if universe.len() != self.kernel_universe.len() {
            return invalid("duplicate kernel id in universe".into());
        }

        let mut bound_kernels = HashSet::new();
        for (name, k) in &self.bindings {
            if !is_identifier(name) || is_ab_name(name) {
                return invalid(format!("bad label `{name}`"));
            }
            if !universe.contains(k) {
                return invalid(format!("label `{name}` bound to kernel {k} outside the universe"));
            }
            if !bound_kernels.insert(*k) {
                return Err(Error::Collision(format!("kernel {k} bound to two labels")));
            }
        }

        let defined: HashSet<u32> = self
            .rules
            .iter()
            .filter_map(|r| match r.head {
                Head::Ab(n) => Some(n),
                _ => None,
            })
            .collect();

        for (idx, rule) in self.rules.iter().enumerate() {
            match &rule.head {
                Head::Target(class) if !classes.contains(class.as_str()) => {
                    return invalid(format!("rule {}: class {class:?} not in class labels", idx + 1));
                }
                Head::Ab(0) => return invalid(format!("rule {}: exception ids start at 1", idx + 1)),
                _ => {}
            }
            let mut seen = HashSet::new();
            for lit in &rule.body {
                if !seen.insert(&lit.predicate) {
                    return invalid(format!(
                        "rule {}: predicate {} appears twice in one body",
                        idx + 1,
                        lit.predicate
                    ));
                }
                match &lit.predicate {
                    Predicate::Kernel(k) => {
                        if !universe.contains(k) {
                            return invalid(format!("rule {}: kernel {k} outside the universe", idx + 1));
                        }
                        if bound_kernels.contains(k) {
                            return invalid(format!(
                                "rule {}: kernel {k} used both raw and under a label",
                                idx + 1
                            ));
                        }
                    }
                    Predicate::Concept(name) => {
                        if !is_identifier(name) || is_ab_name(name) {
                            return invalid(format!("rule {}: bad predicate name `{name}`", idx + 1));
                        }
                    }
                    Predicate::Ab(0) => {
                        return invalid(format!("rule {}: exception ids start at 1", idx + 1))
                    }
                    Predicate::Ab(n) => {
                        if !defined.contains(n) {
                            return invalid(format!("rule {}: ab{n} has no defining rule", idx + 1));
                        }
                    }
                }
            }
        }
        ab_topological_order(&self.rules)?;
        Ok(())
    }
}

pub(crate) fn derived_classes(rules: &[Rule]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for rule in rules {
        if let Head::Target(class) = &rule.head {
            if !out.contains(class) {
                out.push(class.clone());
            }
        }
    }
    out
}

pub(crate) fn derived_kernels(rules: &[Rule], bindings: &BTreeMap<String, u32>) -> Vec<u32> {
    let set: BTreeSet<u32> = rules
        .iter()
        .flat_map(|r| &r.body)
        .filter_map(|l| match &l.predicate {
            Predicate::Kernel(k) => Some(*k),
            _ => None,
        })
        .chain(bindings.values().copied())
        .collect();
    set.into_iter().collect()
}

/// Orders exception ids so dependencies come first; fails on a cycle.
fn ab_topological_order(rules: &[Rule]) -> Result<Vec<u32>> {
    let mut deps: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for rule in rules {
        if let Head::Ab(id) = rule.head {
            let entry = deps.entry(id).or_default();
            for lit in &rule.body {
                if let Predicate::Ab(dep) = lit.predicate {
                    entry.insert(dep);
                }
            }
        }
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    let mut marks: BTreeMap<u32, Mark> = BTreeMap::new();
    let mut order = Vec::with_capacity(deps.len());
    // Iterative DFS; a node re-entered while active closes a cycle.
    for &root in deps.keys() {
        if marks.contains_key(&root) {
            continue;
        }
        let mut stack: Vec<(u32, Vec<u32>)> = vec![(root, deps[&root].iter().copied().collect())];
        marks.insert(root, Mark::Active);
        while let Some((node, pending)) = stack.last_mut() {
            let node = *node;
            match pending.pop() {
                Some(next) => match marks.get(&next) {
                    Some(Mark::Active) => {
                        let mut cycle: Vec<String> = stack
                            .iter()
                            .map(|(n, _)| *n)
                            .skip_while(|&n| n != next)
                            .map(|n| format!("ab{n}"))
                            .collect();
                        cycle.push(format!("ab{next}"));
                        return Err(Error::Stratification(format!(
                            "exception cycle {}",
                            cycle.join(" -> ")
                        )));
                    }
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(next, Mark::Active);
                        let children = deps.get(&next).map(|d| d.iter().copied().collect()).unwrap_or_default();
                        stack.push((next, children));
                    }
                },
                None => {
                    marks.insert(node, Mark::Done);
                    order.push(node);
                    stack.pop();
                }
            }
        }
    }
    Ok(order)
}
