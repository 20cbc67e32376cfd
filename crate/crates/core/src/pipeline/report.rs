use std::fmt::Write;

use crate::inference::Metrics;
use crate::ruleset::RuleSetStats;

/// One results row in the column order `Fid Acc Pred Size`.
pub fn report(metrics: Option<&Metrics>, stats: &RuleSetStats) -> String {
    let fid = metrics
        .and_then(|m| m.fidelity)
        .map_or_else(|| "n/a".to_string(), |f| format!("{f:.2}"));
    let acc = metrics.map_or_else(|| "n/a".to_string(), |m| format!("{:.2}", m.accuracy));
    format!(
        "Fid {fid}  Acc {acc}  Pred {}  Size {}",
        stats.unique_predicates, stats.size
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub stats: RuleSetStats,
    pub metrics: Metrics,
    /// `test` or `train`, whichever table the metrics were computed on.
    pub evaluated_on: &'static str,
    pub labelled: bool,
}

impl RunReport {
    pub fn render(&self) -> String {
        let s = &self.stats;
        let m = &self.metrics;
        let mut out = String::new();
        writeln!(out, "rule_count {}", s.rule_count).unwrap();
        writeln!(out, "unique_predicates {}", s.unique_predicates).unwrap();
        writeln!(out, "unique_predicates_with_ab {}", s.unique_predicates_with_ab).unwrap();
        writeln!(out, "size {}", s.size).unwrap();
        writeln!(out, "evaluated_on {}", self.evaluated_on).unwrap();
        writeln!(out, "accuracy {}", m.accuracy).unwrap();
        match m.fidelity {
            Some(f) => writeln!(out, "fidelity {f}").unwrap(),
            None => writeln!(out, "fidelity n/a").unwrap(),
        }
        writeln!(out, "coverage_rate {}", m.coverage_rate).unwrap();
        writeln!(out, "labelled {}", if self.labelled { "yes" } else { "no" }).unwrap();
        writeln!(out).unwrap();
        writeln!(out, "{}", report(Some(m), s)).unwrap();
        out
    }
}
