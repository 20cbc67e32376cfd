use std::collections::BTreeSet;

use super::RuleSet;

/// Size measures of a rule program.
///
/// `size` counts every body literal (negated and exception literals included);
/// `unique_predicates` counts distinct non-exception predicates, with the
/// exception-inclusive count kept alongside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RuleSetStats {
    pub rule_count: usize,
    pub unique_predicates: usize,
    pub unique_predicates_with_ab: usize,
    pub size: usize,
}

pub fn stats(rs: &RuleSet) -> RuleSetStats {
    let literals = || rs.rules().iter().flat_map(|r| &r.body);
    let all: BTreeSet<_> = literals().map(|l| &l.predicate).collect();
    RuleSetStats {
        rule_count: rs.len(),
        unique_predicates: all.iter().filter(|p| !p.is_ab()).count(),
        unique_predicates_with_ab: all.len(),
        size: literals().count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ruleset::parse_ruleset;

    #[test]
    fn empty_rule_set_is_all_zero() {
        let rs = RuleSet::empty(vec!["a".into()], vec![]).unwrap();
        assert_eq!(stats(&rs), RuleSetStats::default());
    }

    #[test]
    fn three_literal_rule() {
        let rs = parse_ruleset("target(X,'2') :- not 3(X), 54(X), not ab1(X).\nab1(X) :- 7(X).").unwrap();
        let s = stats(&rs);
        assert_eq!(s.rule_count, 2);
        assert_eq!(s.size, 4);
        assert_eq!(s.unique_predicates, 3);
        assert_eq!(s.unique_predicates_with_ab, 4);
    }
}
