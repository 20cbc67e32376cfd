use std::collections::BTreeMap;
use std::path::Path;

use super::{Interpreter, Outcome};
use crate::error::{Error, Result};
use crate::interchange::{csv_error, csv_writer, BinarizationTable};
use crate::ruleset::RuleSet;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub image_id: String,
    pub outcome: Outcome,
    pub fired_rule: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    /// Agreement with the recorded CNN predictions; `None` without a `cnn_pred` column.
    pub fidelity: Option<f64>,
    pub coverage_rate: f64,
    pub per_class_accuracy: BTreeMap<String, f64>,
}

/// Runs `rs` on every row, reading each kernel of its universe from the column with that id.
pub fn predict_table(rs: &RuleSet, table: &BinarizationTable) -> Result<Vec<Prediction>> {
    let interp = Interpreter::new(rs)?;
    let columns = rs
        .kernel_universe()
        .iter()
        .map(|&k| {
            table
                .column_of(k)
                .ok_or_else(|| Error::Alignment(format!("table has no column for kernel {k}")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut bits = vec![false; columns.len()];
    let mut out = Vec::with_capacity(table.n_rows());
    for r in 0..table.n_rows() {
        let row = table.row(r);
        for (b, &c) in bits.iter_mut().zip(&columns) {
            *b = row[c];
        }
        let fired_rule = interp.fired_rule(&bits)?;
        let outcome = match fired_rule {
            Some(i) => match &rs.rules()[i].head {
                crate::ruleset::Head::Target(c) => Outcome::Class(c.clone()),
                crate::ruleset::Head::Ab(_) => unreachable!(),
            },
            None => Outcome::Unclassified,
        };
        out.push(Prediction {
            image_id: table.meta().image_ids[r].clone(),
            outcome,
            fired_rule,
        });
    }
    Ok(out)
}

/// Scores predictions against `table`'s labels. Unclassified rows count as wrong.
pub fn evaluate_predictions(predictions: &[Prediction], table: &BinarizationTable) -> Result<Metrics> {
    let meta = table.meta();
    if predictions.len() != meta.len() {
        return Err(Error::Alignment(format!(
            "{} predictions for {} rows",
            predictions.len(),
            meta.len()
        )));
    }
    let n = predictions.len();
    let frac = |hits: usize, total: usize| if total == 0 { 0.0 } else { hits as f64 / total as f64 };
    let agrees = |p: &Prediction, label: &str| p.outcome.class() == Some(label);

    let correct = predictions.iter().zip(&meta.true_class).filter(|(p, t)| agrees(p, t)).count();
    let fidelity = meta.cnn_pred.as_ref().map(|cnn| {
        frac(predictions.iter().zip(cnn).filter(|(p, c)| agrees(p, c)).count(), n)
    });
    let fired = predictions.iter().filter(|p| p.fired_rule.is_some()).count();
    let mut per_class: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (p, t) in predictions.iter().zip(&meta.true_class) {
        let e = per_class.entry(t.clone()).or_default();
        e.1 += 1;
        if agrees(p, t) {
            e.0 += 1;
        }
    }
    Ok(Metrics {
        n,
        accuracy: frac(correct, n),
        fidelity,
        coverage_rate: frac(fired, n),
        per_class_accuracy: per_class.into_iter().map(|(c, (h, t))| (c, frac(h, t))).collect(),
    })
}

pub fn evaluate(rs: &RuleSet, table: &BinarizationTable) -> Result<Metrics> {
    evaluate_predictions(&predict_table(rs, table)?, table)
}

/// `image_id,prediction,fired_rule`, with 1-based rule numbers and an empty field when nothing fired.
pub fn write_predictions(predictions: &[Prediction], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["image_id", "prediction", "fired_rule"]).map_err(|e| csv_error(path, e))?;
    for p in predictions {
        let rule = p.fired_rule.map(|i| (i + 1).to_string()).unwrap_or_default();
        w.write_record([p.image_id.as_str(), &p.outcome.to_string(), &rule])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl Metrics {
    /// `(metric, value)` pairs as written to the metrics file; missing fidelity is `n/a`.
    pub fn rows(&self) -> Vec<(String, String)> {
        let mut rows = vec![
            ("n".to_string(), self.n.to_string()),
            ("accuracy".to_string(), self.accuracy.to_string()),
            (
                "fidelity".to_string(),
                self.fidelity.map_or_else(|| "n/a".to_string(), |f| f.to_string()),
            ),
            ("coverage_rate".to_string(), self.coverage_rate.to_string()),
        ];
        for (class, acc) in &self.per_class_accuracy {
            rows.push((format!("accuracy[{class}]"), acc.to_string()));
        }
        rows
    }
}

pub fn write_metrics(metrics: &Metrics, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["metric", "value"]).map_err(|e| csv_error(path, e))?;
    for (k, v) in metrics.rows() {
        w.write_record([k, v]).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`write_metrics`].
pub fn load_metrics(path: impl AsRef<Path>) -> Result<Metrics> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().collect::<Vec<_>>() != ["metric", "value"] {
        return Err(Error::format(path, "header must be `metric,value`"));
    }
    let mut values = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        values.insert(record[0].to_string(), record[1].to_string());
    }
    let get = |key: &str| -> Result<&str> {
        values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::format(path, format!("no `{key}` row")))
    };
    let num = |key: &str, v: &str| -> Result<f64> {
        v.parse()
            .map_err(|_| Error::format(path, format!("`{key}` is not a number: {v}")))
    };
    let n = get("n")?
        .parse()
        .map_err(|_| Error::format(path, "`n` is not a count"))?;
    let fidelity = match get("fidelity")? {
        "n/a" => None,
        v => Some(num("fidelity", v)?),
    };
    let mut per_class_accuracy = BTreeMap::new();
    for (k, v) in &values {
        if let Some(class) = k.strip_prefix("accuracy[").and_then(|c| c.strip_suffix(']')) {
            per_class_accuracy.insert(class.to_string(), num(k, v)?);
        }
    }
    Ok(Metrics {
        n,
        accuracy: num("accuracy", get("accuracy")?)?,
        fidelity,
        coverage_rate: num("coverage_rate", get("coverage_rate")?)?,
        per_class_accuracy,
    })
}
