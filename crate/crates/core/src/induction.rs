//! Default-with-exceptions rule induction over binarized kernel tables.
//!
//! A rule grows by the literal with the highest FOIL-style gain
//! `TP * (log2 p_after - log2 p_before)`, `p = TP / (TP + FP)`, until its false
//! positives fall to `ratio * TP`. Remaining false positives become the
//! positives of a recursive call with the sides swapped, whose rules define a
//! fresh `abN` predicate negated in the parent body.
//!
//! The default [`ListOrder::Sequential`] builds the decision list front to
//! back over the rows no earlier rule fires on. The other orders learn each
//! class one-vs-rest and merge the per-class lists afterwards.

use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;
use log::debug;

use crate::error::{Error, Result};
use crate::interchange::BinarizationTable;
use crate::ruleset::{Head, Literal, Predicate, Rule, RuleSet};

/// Row subset of a table.
pub type RowSet = FixedBitSet;

/// How the decision list is put together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ListOrder {
    /// Learned front to back; each step keeps the candidate rule whose greedy
    /// continuation gets the fewest rows wrong or undecided, then gives the shortest
    /// list, then covers most.
    #[default]
    Sequential,
    /// One-vs-rest per class, merged by descending coverage, ties by class
    /// label then learning order.
    Coverage,
    /// One-vs-rest, classes in label order, each block in learning order.
    ClassBlocks,
}

impl ListOrder {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sequential" => Some(ListOrder::Sequential),
            "coverage" => Some(ListOrder::Coverage),
            "class" => Some(ListOrder::ClassBlocks),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldParams {
    pub ratio: f64,
    pub tail: f64,
    pub max_exception_depth: usize,
    pub order: ListOrder,
    /// Sequential order only: how many of the best first literals per class
    /// are tried as alternative rule starts. 0 commits to the widest greedy rule.
    pub lookahead: usize,
}

impl Default for FoldParams {
    fn default() -> Self {
        FoldParams {
            ratio: 0.8,
            tail: 5e-3,
            max_exception_depth: 3,
            order: ListOrder::Sequential,
            lookahead: 8,
        }
    }
}

impl FoldParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio.is_finite() && self.ratio >= 0.0) {
            return Err(Error::InvalidParameter(format!("ratio must be >= 0, got {}", self.ratio)));
        }
        if !(self.tail > 0.0 && self.tail <= 1.0) {
            return Err(Error::InvalidParameter(format!("tail must be in (0, 1], got {}", self.tail)));
        }
        Ok(())
    }

    /// `max(1, ceil(tail * n))`.
    pub fn min_coverage(&self, n: usize) -> usize {
        ((self.tail * n as f64).ceil() as usize).max(1)
    }
}

/// Column bitsets of a binarization table, with kernels visited in ascending id order.
#[derive(Debug, Clone)]
pub struct Features {
    n_rows: usize,
    kernel_ids: Vec<u32>,
    columns: Vec<RowSet>,
    by_id: Vec<usize>,
}

impl Features {
    pub fn from_table(table: &BinarizationTable) -> Self {
        let n_rows = table.n_rows();
        let columns = (0..table.n_kernels())
            .map(|c| {
                let mut set = RowSet::with_capacity(n_rows);
                for (r, bit) in table.column(c).enumerate() {
                    set.set(r, bit);
                }
                set
            })
            .collect();
        let mut by_id: Vec<usize> = (0..table.n_kernels()).collect();
        by_id.sort_by_key(|&c| table.kernel_ids()[c]);
        Features {
            n_rows,
            kernel_ids: table.kernel_ids().to_vec(),
            columns,
            by_id,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn all_rows(&self) -> RowSet {
        let mut set = RowSet::with_capacity(self.n_rows);
        set.insert_range(..);
        set
    }

    /// Rows on which `literal` holds; `None` for predicates other than kernel ids.
    pub fn literal_rows(&self, literal: &Literal) -> Option<RowSet> {
        let Predicate::Kernel(k) = literal.predicate else {
            return None;
        };
        let col = self.kernel_ids.iter().position(|&id| id == k)?;
        let mut set = self.columns[col].clone();
        if literal.negated {
            set.toggle_range(..);
        }
        Some(set)
    }
}

fn gain(tp: usize, fp: usize, p_before: f64) -> f64 {
    if tp == 0 {
        return f64::NEG_INFINITY;
    }
    let p_after = tp as f64 / (tp + fp) as f64;
    tp as f64 * (p_after.log2() - p_before.log2())
}

/// Literals with positive gain, in tie-break order (kernel id, positive first).
fn scored_literals(features: &Features, pos: &RowSet, neg: &RowSet, used: &BTreeSet<u32>) -> Vec<(f64, Literal)> {
    let n_pos = pos.count_ones(..);
    let n_neg = neg.count_ones(..);
    if n_pos == 0 {
        return Vec::new();
    }
    let p_before = n_pos as f64 / (n_pos + n_neg) as f64;
    let mut out = Vec::new();
    for &col in &features.by_id {
        let k = features.kernel_ids[col];
        if used.contains(&k) {
            continue;
        }
        let column = &features.columns[col];
        let tp_on = pos.intersection_count(column);
        let fp_on = neg.intersection_count(column);
        for (tp, fp, negated) in [(tp_on, fp_on, false), (n_pos - tp_on, n_neg - fp_on, true)] {
            let score = gain(tp, fp, p_before);
            if score > 0.0 {
                out.push((score, Literal { predicate: Predicate::Kernel(k), negated }));
            }
        }
    }
    out
}

/// Best literal over kernels not in `used`, or `None` when no literal has positive gain.
pub fn select_literal(features: &Features, pos: &RowSet, neg: &RowSet, used: &BTreeSet<u32>) -> Option<Literal> {
    let mut best: Option<(f64, Literal)> = None;
    for (score, lit) in scored_literals(features, pos, neg, used) {
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, lit));
        }
    }
    best.map(|(_, lit)| lit)
}

/// A rule as learned, before exception ids are assigned.
#[derive(Debug, Clone)]
pub struct LearnedRule {
    /// Kernel literals only; the exception, if any, is in `exceptions`.
    pub body: Vec<Literal>,
    /// Disjunctive definition of this rule's exception predicate.
    pub exceptions: Vec<LearnedRule>,
    /// Positives of the learning call that the rule covers after exceptions.
    pub coverage: usize,
    /// Rows of the whole table on which the rule fires.
    pub fires: RowSet,
}

impl LearnedRule {
    /// Printed rules this stands for, exception rules included.
    pub fn size(&self) -> usize {
        1 + self.exceptions.iter().map(LearnedRule::size).sum::<usize>()
    }
}

struct Learner<'a> {
    features: &'a Features,
    params: FoldParams,
    min_coverage: usize,
}

impl Learner<'_> {
    fn learn_class(&self, pos: &RowSet, neg: &RowSet, used: &BTreeSet<u32>, depth: usize) -> Vec<LearnedRule> {
        let mut remaining = pos.clone();
        let mut rules = Vec::new();
        while remaining.count_ones(..) >= self.min_coverage {
            let Some(rule) = self.learn_rule(&remaining, neg, used, depth, None) else {
                break;
            };
            remaining.difference_with(&rule.fires);
            rules.push(rule);
        }
        rules
    }

    /// Grows one rule, starting from `first` when given.
    fn learn_rule(
        &self,
        pos: &RowSet,
        neg: &RowSet,
        used: &BTreeSet<u32>,
        depth: usize,
        mut first: Option<Literal>,
    ) -> Option<LearnedRule> {
        let mut body = Vec::new();
        let mut used = used.clone();
        let mut fires = self.features.all_rows();
        let mut p = pos.clone();
        let mut n = neg.clone();
        while let Some(lit) = first.take().or_else(|| select_literal(self.features, &p, &n, &used)) {
            let rows = self.features.literal_rows(&lit).expect("selected literal is a kernel");
            fires.intersect_with(&rows);
            p.intersect_with(&rows);
            n.intersect_with(&rows);
            if let Predicate::Kernel(k) = lit.predicate {
                used.insert(k);
            }
            body.push(lit);
            if n.count_ones(..) as f64 <= self.params.ratio * p.count_ones(..) as f64 {
                break;
            }
        }

        let mut exceptions = Vec::new();
        if !n.is_clear() && depth < self.params.max_exception_depth {
            exceptions = self.learn_exceptions(&p, &n, &used, depth);
            for e in &exceptions {
                fires.difference_with(&e.fires);
            }
        }
        // Without negatives to avoid, an empty body is the rule.
        if body.is_empty() && exceptions.is_empty() && !neg.is_clear() {
            return None;
        }
        let coverage = pos.intersection_count(&fires);
        if coverage < self.min_coverage {
            return None;
        }
        Some(LearnedRule {
            body,
            exceptions,
            coverage,
            fires,
        })
    }

    fn learn_exceptions(&self, covered_pos: &RowSet, covered_neg: &RowSet, used: &BTreeSet<u32>, depth: usize) -> Vec<LearnedRule> {
        self.learn_class(covered_neg, covered_pos, used, depth + 1)
    }

    /// Candidate next rules of a sequential list over the undecided rows:
    /// for each class the greedy rule and up to `starts` rules forced to begin
    /// with one of its best literals.
    fn candidates(&self, classes: &[RowSet], undecided: &RowSet, starts: usize) -> Vec<(usize, LearnedRule)> {
        let mut out = Vec::new();
        let none = BTreeSet::new();
        for (c, rows) in classes.iter().enumerate() {
            let mut pos = rows.clone();
            pos.intersect_with(undecided);
            let mut neg = undecided.clone();
            neg.difference_with(&pos);
            out.extend(self.learn_rule(&pos, &neg, &none, 0, None).map(|r| (c, r)));
            if starts > 0 {
                let mut firsts = scored_literals(self.features, &pos, &neg, &none);
                firsts.sort_by(|a, b| b.0.total_cmp(&a.0));
                for (_, lit) in firsts.into_iter().take(starts) {
                    out.extend(self.learn_rule(&pos, &neg, &none, 0, Some(lit)).map(|r| (c, r)));
                }
            }
        }
        out
    }

    fn widest(candidates: Vec<(usize, LearnedRule)>) -> Option<(usize, LearnedRule)> {
        candidates
            .into_iter()
            .reduce(|best, c| if c.1.coverage > best.1.coverage { c } else { best })
    }

    /// Undecided rows `rule` would assign to a class other than `class`.
    fn errors(classes: &[RowSet], undecided: &RowSet, class: usize, rule: &LearnedRule) -> usize {
        let mut wrong = rule.fires.clone();
        wrong.intersect_with(undecided);
        wrong.difference_with(&classes[class]);
        wrong.count_ones(..)
    }

    /// Rows misclassified or left undecided, and printed size, of the list
    /// greedy widest-first learning would append.
    fn greedy_tail(&self, classes: &[RowSet], mut undecided: RowSet) -> (usize, usize) {
        let (mut wrong, mut size) = (0, 0);
        while let Some((class, rule)) = Self::widest(self.candidates(classes, &undecided, 0)) {
            wrong += Self::errors(classes, &undecided, class, &rule);
            undecided.difference_with(&rule.fires);
            size += rule.size();
        }
        (wrong + undecided.count_ones(..), size)
    }

    fn learn_sequential(&self, classes: &[RowSet]) -> Vec<(usize, LearnedRule)> {
        let mut undecided = self.features.all_rows();
        let mut list = Vec::new();
        loop {
            let candidates = self.candidates(classes, &undecided, self.params.lookahead);
            let pick = if self.params.lookahead == 0 {
                Self::widest(candidates)
            } else {
                // ties keep the earliest candidate
                candidates
                    .into_iter()
                    .min_by_key(|(class, rule)| {
                        let mut rest = undecided.clone();
                        rest.difference_with(&rule.fires);
                        let (wrong, size) = self.greedy_tail(classes, rest);
                        let wrong = wrong + Self::errors(classes, &undecided, *class, rule);
                        (wrong, rule.size() + size, std::cmp::Reverse(rule.coverage))
                    })
            };
            let Some((class, rule)) = pick else {
                break;
            };
            undecided.difference_with(&rule.fires);
            list.push((class, rule));
        }
        list
    }
}

/// Rules defining an exception to a rule that covered `covered_pos` and
/// wrongly covered `covered_neg`; the sides are swapped and learning recurses.
/// Empty when `depth` has reached the limit or nothing could be learned.
pub fn learn_exceptions(
    features: &Features,
    covered_pos: &RowSet,
    covered_neg: &RowSet,
    params: &FoldParams,
    depth: usize,
) -> Vec<LearnedRule> {
    if depth >= params.max_exception_depth || covered_neg.is_clear() {
        return Vec::new();
    }
    let learner = Learner {
        features,
        params: *params,
        min_coverage: params.min_coverage(features.n_rows()),
    };
    learner.learn_exceptions(covered_pos, covered_neg, &BTreeSet::new(), depth)
}

/// Learns a decision list over every class of `table`.
pub fn learn_ruleset(table: &BinarizationTable, params: &FoldParams) -> Result<RuleSet> {
    params.validate()?;
    if table.n_rows() == 0 {
        return Err(Error::EmptyInput("binarization table has no rows".into()));
    }
    let classes: Vec<&str> = table
        .meta()
        .true_class
        .iter()
        .map(String::as_str)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "need at least two classes to learn from, found {}",
            classes.len()
        )));
    }
    let features = Features::from_table(table);
    let learner = Learner {
        features: &features,
        params: *params,
        min_coverage: params.min_coverage(table.n_rows()),
    };
    let class_rows: Vec<RowSet> = classes
        .iter()
        .map(|&class| {
            let mut pos = RowSet::with_capacity(table.n_rows());
            for (r, c) in table.meta().true_class.iter().enumerate() {
                pos.set(r, c == class);
            }
            pos
        })
        .collect();

    // (class index, position within its class, rule)
    let mut learned: Vec<(usize, usize, LearnedRule)> = Vec::new();
    if params.order == ListOrder::Sequential {
        learned = learner
            .learn_sequential(&class_rows)
            .into_iter()
            .enumerate()
            .map(|(i, (c, r))| (c, i, r))
            .collect();
    } else {
        for (c, pos) in class_rows.iter().enumerate() {
            let mut neg = pos.clone();
            neg.toggle_range(..);
            let rules = learner.learn_class(pos, &neg, &BTreeSet::new(), 0);
            debug!("class {}: {} rules", classes[c], rules.len());
            learned.extend(rules.into_iter().enumerate().map(|(i, r)| (c, i, r)));
        }
        match params.order {
            ListOrder::Coverage => {
                learned.sort_by(|a, b| b.2.coverage.cmp(&a.2.coverage).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)))
            }
            _ => learned.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1))),
        }
    }
    debug!("{} target rules", learned.len());

    let mut next_ab = 1;
    let mut ab_rules = Vec::new();
    let mut targets = Vec::new();
    for (class, _, rule) in &learned {
        let body = flatten(rule, &mut next_ab, &mut ab_rules);
        targets.push(Rule::target(classes[*class], body).with_coverage(rule.coverage));
    }
    ab_rules.sort_by_key(|r: &Rule| match r.head {
        Head::Ab(id) => id,
        Head::Target(_) => unreachable!(),
    });
    targets.extend(ab_rules);
    RuleSet::new(
        targets,
        classes.into_iter().map(String::from).collect(),
        table.kernel_ids().iter().copied().collect::<BTreeSet<_>>().into_iter().collect(),
        Default::default(),
    )
    .map_err(|e| Error::Internal(format!("learned rule set is invalid: {e}")))
}

/// Body of `rule` with its exception appended; nested exceptions get lower ids.
fn flatten(rule: &LearnedRule, next_ab: &mut u32, out: &mut Vec<Rule>) -> Vec<Literal> {
    let mut body = rule.body.clone();
    if !rule.exceptions.is_empty() {
        let bodies: Vec<(Vec<Literal>, usize)> = rule
            .exceptions
            .iter()
            .map(|e| (flatten(e, next_ab, out), e.coverage))
            .collect();
        let id = *next_ab;
        *next_ab += 1;
        out.extend(bodies.into_iter().map(|(b, c)| Rule::ab(id, b).with_coverage(c)));
        body.push(Literal::neg(Predicate::Ab(id)));
    }
    body
}
