//! Rule learning on random and planted tables.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use nesy_rules::induction::{learn_ruleset, FoldParams, ListOrder};
use nesy_rules::inference::{evaluate, predict_table};
use nesy_rules::interchange::{BinarizationTable, InstanceMeta};
use nesy_rules::ruleset::{print_ruleset, Head, RuleSet};

const ORDERS: [ListOrder; 3] = [ListOrder::Sequential, ListOrder::Coverage, ListOrder::ClassBlocks];

/// Noisy table: labels need not be a function of the bits.
fn random_table(rng: &mut impl Rng) -> BinarizationTable {
    let n = rng.gen_range(2..60);
    let width = rng.gen_range(1..=8);
    let n_classes = rng.gen_range(2..=3);
    let classes: Vec<String> = ["a", "b", "c"][..n_classes].iter().map(|s| s.to_string()).collect();
    let mut true_class: Vec<String> = (0..n).map(|_| classes.choose(rng).unwrap().clone()).collect();
    true_class[0] = "a".into();
    true_class[1] = "b".into();
    let density = rng.gen_range(0.2..0.8);
    let cells = (0..n * width).map(|_| rng.gen_bool(density)).collect();
    let meta = InstanceMeta {
        image_ids: (0..n).map(|i| format!("r{i}")).collect(),
        true_class,
        cnn_pred: None,
        cnn_conf: None,
    };
    let mut ids: Vec<u32> = (1..40).collect();
    ids.shuffle(rng);
    ids.truncate(width);
    BinarizationTable::new(meta, ids, cells).unwrap()
}

fn random_params(rng: &mut impl Rng, order: ListOrder) -> FoldParams {
    FoldParams {
        ratio: [0.0, 0.5, 1.0, 5.0][rng.gen_range(0..4)],
        tail: [1e-9, 0.05, 0.2][rng.gen_range(0..3)],
        max_exception_depth: rng.gen_range(0..=3),
        order,
        lookahead: rng.gen_range(0..=3),
    }
}

fn ab_ids(rs: &RuleSet) -> BTreeSet<u32> {
    rs.rules()
        .iter()
        .filter_map(|r| match r.head {
            Head::Ab(id) => Some(id),
            _ => None,
        })
        .collect()
}

fn errors(rs: &RuleSet, table: &BinarizationTable) -> usize {
    let m = evaluate(rs, table).unwrap();
    table.n_rows() - (m.accuracy * table.n_rows() as f64).round() as usize
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn learning_is_deterministic(seed in any::<u64>(), order in 0..3usize) {
        let mut rng = common::rng(seed);
        let table = random_table(&mut rng);
        let params = random_params(&mut rng, ORDERS[order]);
        prop_assert_eq!(learn_ruleset(&table, &params).unwrap(), learn_ruleset(&table, &params).unwrap());
    }

    #[test]
    fn every_rule_meets_the_tail(seed in any::<u64>(), order in 0..3usize) {
        let mut rng = common::rng(seed);
        let table = random_table(&mut rng);
        let params = random_params(&mut rng, ORDERS[order]);
        let rs = learn_ruleset(&table, &params).unwrap();
        let min = params.min_coverage(table.n_rows());
        for r in rs.rules() {
            prop_assert!(r.coverage.unwrap() >= min, "{}", print_ruleset(&rs));
        }
    }

    #[test]
    fn exceptions_are_numbered_from_one_and_stratified(seed in any::<u64>(), order in 0..3usize) {
        let mut rng = common::rng(seed);
        let table = random_table(&mut rng);
        let params = random_params(&mut rng, ORDERS[order]);
        let rs = learn_ruleset(&table, &params).unwrap();
        let ids = ab_ids(&rs);
        prop_assert_eq!(ids.iter().copied().collect::<Vec<_>>(), (1..=ids.len() as u32).collect::<Vec<_>>());
        prop_assert_eq!(rs.strata().len(), ids.len());
        // targets first, then exception rules
        let first_ab = rs.rules().iter().position(|r| !r.is_target()).unwrap_or(rs.len());
        prop_assert!(rs.rules()[first_ab..].iter().all(|r| !r.is_target()));
        for r in rs.rules() {
            prop_assert!(r.body.iter().filter(|l| l.predicate.is_ab()).count() <= 1);
        }
    }

    #[test]
    fn one_vs_rest_lists_descend_by_coverage(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let table = random_table(&mut rng);
        let rs = learn_ruleset(&table, &random_params(&mut rng, ListOrder::Coverage)).unwrap();
        let covs: Vec<usize> = rs.target_rules().map(|(_, r)| r.coverage.unwrap()).collect();
        prop_assert!(covs.windows(2).all(|w| w[0] >= w[1]), "{:?}", covs);
    }

    #[test]
    fn class_blocks_follow_label_order(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let table = random_table(&mut rng);
        let rs = learn_ruleset(&table, &random_params(&mut rng, ListOrder::ClassBlocks)).unwrap();
        let heads: Vec<&str> = rs
            .target_rules()
            .map(|(_, r)| match &r.head {
                Head::Target(c) => c.as_str(),
                Head::Ab(_) => unreachable!(),
            })
            .collect();
        prop_assert!(heads.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sequential_coverage_is_what_the_rule_decides(seed in any::<u64>()) {
        // Each rule covers the rows it decides for its own class, with the
        // list read top to bottom.
        let mut rng = common::rng(seed);
        let table = random_table(&mut rng);
        let rs = learn_ruleset(&table, &random_params(&mut rng, ListOrder::Sequential)).unwrap();
        let predictions = predict_table(&rs, &table).unwrap();
        for (i, r) in rs.target_rules() {
            let Head::Target(class) = &r.head else { unreachable!() };
            let decided = predictions
                .iter()
                .zip(&table.meta().true_class)
                .filter(|(p, t)| p.fired_rule == Some(i) && *t == class)
                .count();
            prop_assert_eq!(r.coverage, Some(decided), "rule {}\n{}", i, print_ruleset(&rs));
        }
    }

    #[test]
    fn lookahead_is_never_worse_than_greedy(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let table = random_table(&mut rng);
        let greedy_params = FoldParams { lookahead: 0, ..random_params(&mut rng, ListOrder::Sequential) };
        let greedy = learn_ruleset(&table, &greedy_params).unwrap();
        for k in [1, 2, 8] {
            let looked = learn_ruleset(&table, &FoldParams { lookahead: k, ..greedy_params }).unwrap();
            let (a, b) = ((errors(&looked, &table), looked.len()), (errors(&greedy, &table), greedy.len()));
            prop_assert!(a <= b, "lookahead {} gives {:?}, greedy {:?}\n{}\n{}", k, a, b, print_ruleset(&looked), print_ruleset(&greedy));
        }
    }

    #[test]
    fn decided_rows_agree_with_the_learner(seed in any::<u64>(), order in 0..3usize) {
        // On consistent data with ratio 0, every training row is classified correctly.
        let mut rng = common::rng(seed);
        let p = common::planted(&mut rng, 100);
        let params = FoldParams {
            ratio: 0.0,
            tail: 1.0 / p.table.n_rows() as f64,
            order: ORDERS[order],
            ..FoldParams::default()
        };
        let rs = learn_ruleset(&p.table, &params).unwrap();
        let m = evaluate(&rs, &p.table).unwrap();
        prop_assert_eq!(m.accuracy, 1.0, "{:?}\n{}", p.rules, print_ruleset(&rs));
    }
}

#[test]
fn exceptions_nest_three_levels() {
    // a = f1 and not (f2 and not f3)
    let mut rows: Vec<([u8; 3], &str)> = Vec::new();
    rows.extend([([1, 0, 0], "a"); 4]);
    rows.extend([([1, 1, 1], "a"); 2]);
    rows.extend([([1, 1, 0], "b"); 2]);
    rows.extend([([0, 0, 0], "b"); 4]);
    let meta = InstanceMeta {
        image_ids: (0..rows.len()).map(|i| format!("r{i}")).collect(),
        true_class: rows.iter().map(|r| r.1.to_string()).collect(),
        cnn_pred: None,
        cnn_conf: None,
    };
    let cells = rows.iter().flat_map(|r| r.0.map(|b| b == 1)).collect();
    let table = BinarizationTable::new(meta, vec![1, 2, 3], cells).unwrap();
    let params = FoldParams {
        ratio: 1.0,
        tail: 1e-9,
        order: ListOrder::Coverage,
        ..FoldParams::default()
    };
    let rs = learn_ruleset(&table, &params).unwrap();
    let text = print_ruleset(&rs);
    assert_eq!(
        text,
        "target(X,'a') :- 1(X), not ab2(X). %! coverage 6\n\
         target(X,'b') :- not 1(X). %! coverage 4\n\
         target(X,'b') :- 2(X), not ab3(X). %! coverage 2\n\
         ab1(X) :- 3(X). %! coverage 2\n\
         ab2(X) :- 2(X), not ab1(X). %! coverage 2\n\
         ab3(X) :- 3(X). %! coverage 2\n"
    );
    assert_eq!(rs.strata()[..2], [1, 2]);
    assert_eq!(evaluate(&rs, &table).unwrap().accuracy, 1.0);
    let nests = |rs: &RuleSet| {
        rs.rules()
            .iter()
            .filter(|r| !r.is_target())
            .any(|r| r.body.iter().any(|l| l.predicate.is_ab()))
    };
    assert!(nests(&rs));
    // with the depth capped at one no exception gets its own exception
    let shallow = learn_ruleset(&table, &FoldParams { max_exception_depth: 1, ..params }).unwrap();
    assert!(!nests(&shallow), "{}", print_ruleset(&shallow));
    assert!(!ab_ids(&shallow).is_empty());
}

#[test]
fn contradictory_rows_keep_the_majority() {
    let meta = InstanceMeta {
        image_ids: vec!["x".into(), "y".into(), "z".into()],
        true_class: vec!["a".into(), "b".into(), "b".into()],
        cnn_pred: None,
        cnn_conf: None,
    };
    let table = BinarizationTable::new(meta, vec![4], vec![true, true, false]).unwrap();
    for order in ORDERS {
        let rs = learn_ruleset(&table, &FoldParams { ratio: 0.0, tail: 1e-9, order, ..FoldParams::default() }).unwrap();
        let m = evaluate(&rs, &table).unwrap();
        assert!(m.accuracy >= 2.0 / 3.0 - 1e-12, "{order:?}\n{}", print_ruleset(&rs));
    }
}
