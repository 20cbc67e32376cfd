//! Feature-map norms, per-kernel thresholds and binarization.
//!
//! A kernel's threshold is `alpha * mean + gamma * std` of its norms over the
//! training images, with the population (1/n) standard deviation. A kernel is
//! active for an image when its norm is strictly greater than the threshold.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};
use crate::interchange::{
    csv_error, csv_writer, BinarizationTable, Cell, FeatureMap, KernelTable, NormsTable,
};

/// L2 norm of the flattened feature map, accumulated in `f64`.
pub fn compute_norm(map: &FeatureMap) -> f64 {
    map.values()
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector {
    pub kernel_ids: Vec<u32>,
    pub theta: Vec<f64>,
    /// `(alpha, gamma)` the thresholds were computed with; absent when loaded from CSV.
    pub weights: Option<(f64, f64)>,
}

impl ThresholdVector {
    pub fn new(kernel_ids: Vec<u32>, theta: Vec<f64>) -> Result<Self> {
        if kernel_ids.len() != theta.len() {
            return Err(Error::Alignment(format!(
                "{} kernel ids but {} thresholds",
                kernel_ids.len(),
                theta.len()
            )));
        }
        if let Some(t) = theta.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite threshold {t}")));
        }
        Ok(ThresholdVector {
            kernel_ids,
            theta,
            weights: None,
        })
    }

    pub fn get(&self, kernel_id: u32) -> Option<f64> {
        self.kernel_ids
            .iter()
            .position(|&k| k == kernel_id)
            .map(|i| self.theta[i])
    }
}

/// Per-kernel thresholds over every row of `norms`.
pub fn compute_thresholds(norms: &NormsTable, alpha: f64, gamma: f64) -> Result<ThresholdVector> {
    if !alpha.is_finite() || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "alpha and gamma must be finite (got {alpha}, {gamma})"
        )));
    }
    let n = norms.n_rows();
    if n == 0 {
        return Err(Error::EmptyInput("norms table".into()));
    }
    let theta = (0..norms.n_kernels())
        .map(|col| {
            // Fixed row order keeps the result independent of how kernels are scheduled.
            let mean = norms.column(col).sum::<f64>() / n as f64;
            let var = norms.column(col).map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
            alpha * mean + gamma * var.sqrt()
        })
        .collect();
    let mut out = ThresholdVector::new(norms.kernel_ids().to_vec(), theta)?;
    out.weights = Some((alpha, gamma));
    Ok(out)
}

pub fn binarize(norms: &NormsTable, thresholds: &ThresholdVector) -> Result<BinarizationTable> {
    if norms.kernel_ids() != thresholds.kernel_ids.as_slice() {
        return Err(Error::Alignment(
            "norms table and threshold vector list different kernels".into(),
        ));
    }
    norms.map_cells(|col, a| a > thresholds.theta[col])
}

/// Keeps, per true class, the `ceil(fraction * group_size)` rows with the highest
/// CNN confidence. Surviving rows keep their original order; confidence ties go
/// to the earlier row.
pub fn filter_top_softmax<T: Cell>(table: &KernelTable<T>, fraction: f64) -> Result<KernelTable<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "softmax fraction must lie in (0,1] (got {fraction})"
        )));
    }
    let conf = table
        .meta()
        .cnn_conf
        .as_ref()
        .ok_or_else(|| Error::MissingColumn("cnn_conf".into()))?;

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (row, class) in table.meta().true_class.iter().enumerate() {
        groups.entry(class.as_str()).or_default().push(row);
    }
    let mut keep = Vec::new();
    for rows in groups.values_mut() {
        // 1e-9 slack so that e.g. 0.7 * 10 keeps 7 rows, not 8.
        let count = ((fraction * rows.len() as f64) - 1e-9).ceil().max(1.0) as usize;
        rows.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]).then(a.cmp(&b)));
        keep.extend_from_slice(&rows[..count.min(rows.len())]);
    }
    keep.sort_unstable();
    Ok(table.select_rows(&keep))
}

/// Writes thresholds as `kernel_id,theta`.
pub fn write_thresholds(thresholds: &ThresholdVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv_writer(path)?;
    writer.write_record(["kernel_id", "theta"]).map_err(|e| csv_error(path, e))?;
    for (k, t) in thresholds.kernel_ids.iter().zip(&thresholds.theta) {
        writer
            .write_record([k.to_string(), format!("{t}")])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn load_thresholds(path: impl AsRef<Path>) -> Result<ThresholdVector> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().collect::<Vec<_>>() != ["kernel_id", "theta"] {
        return Err(Error::format(path, "header must be `kernel_id,theta`"));
    }
    let mut kernel_ids = Vec::new();
    let mut theta = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let bad = || Error::format(path, format!("row {}: malformed threshold line", row + 1));
        kernel_ids.push(record[0].trim().parse::<u32>().map_err(|_| bad())?);
        theta.push(
            record[1]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|t| t.is_finite())
                .ok_or_else(bad)?,
        );
    }
    if kernel_ids.is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }
    ThresholdVector::new(kernel_ids, theta).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interchange::InstanceMeta;

    fn norms(rows: &[&[f64]]) -> NormsTable {
        let n = rows.len();
        let k = rows[0].len();
        let meta = InstanceMeta {
            image_ids: (0..n).map(|i| format!("i{i}")).collect(),
            true_class: vec!["c".into(); n],
            ..Default::default()
        };
        NormsTable::new(meta, (0..k as u32).collect(), rows.concat()).unwrap()
    }

    #[test]
    fn norm_of_zero_and_345() {
        let zero = FeatureMap::new(0, "a", 2, 2, vec![0.0; 4]).unwrap();
        assert_eq!(compute_norm(&zero), 0.0);
        let tri = FeatureMap::new(0, "a", 2, 2, vec![3.0, 4.0, 0.0, 0.0]).unwrap();
        assert_eq!(compute_norm(&tri), 5.0);
    }

    #[test]
    fn single_image_threshold_is_alpha_times_norm() {
        let t = compute_thresholds(&norms(&[&[2.0, 5.0]]), 0.6, 0.7).unwrap();
        assert_eq!(t.theta, vec![0.6 * 2.0, 0.6 * 5.0]);
    }

    #[test]
    fn threshold_of_one_to_four() {
        let table = norms(&[&[1.0], &[2.0], &[3.0], &[4.0]]);
        let t = compute_thresholds(&table, 0.6, 0.7).unwrap();
        assert!((t.theta[0] - 2.2826237921).abs() < 1e-9);
        let bits = binarize(&table, &t).unwrap();
        assert_eq!(bits.cells(), &[false, false, true, true]);
    }

    #[test]
    fn permuting_rows_keeps_thresholds() {
        let a = compute_thresholds(&norms(&[&[1.0], &[2.0], &[3.0], &[4.0]]), 0.6, 0.7).unwrap();
        let b = compute_thresholds(&norms(&[&[3.0], &[1.0], &[4.0], &[2.0]]), 0.6, 0.7).unwrap();
        assert!((a.theta[0] - b.theta[0]).abs() < 1e-12);
    }

    #[test]
    fn norm_equal_to_threshold_is_inactive() {
        let table = norms(&[&[2.0]]);
        let t = ThresholdVector::new(vec![0], vec![2.0]).unwrap();
        assert_eq!(binarize(&table, &t).unwrap().cells(), &[false]);
    }

    #[test]
    fn zero_norms_binarize_to_zero() {
        let table = norms(&[&[0.0, 0.0], &[0.0, 0.0]]);
        let t = ThresholdVector::new(vec![0, 1], vec![0.1, 3.0]).unwrap();
        assert!(binarize(&table, &t).unwrap().cells().iter().all(|b| !b));
    }

    #[test]
    fn kernel_mismatch_is_alignment_error() {
        let table = norms(&[&[1.0, 2.0]]);
        let t = ThresholdVector::new(vec![1, 0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(binarize(&table, &t), Err(Error::Alignment(_))));
    }

    fn with_conf(classes: &[&str], conf: &[f64]) -> NormsTable {
        let n = classes.len();
        let meta = InstanceMeta {
            image_ids: (0..n).map(|i| format!("i{i}")).collect(),
            true_class: classes.iter().map(|s| s.to_string()).collect(),
            cnn_pred: None,
            cnn_conf: Some(conf.to_vec()),
        };
        NormsTable::new(meta, vec![0], vec![1.0; n]).unwrap()
    }

    #[test]
    fn softmax_filter_full_fraction_is_identity() {
        let t = with_conf(&["a", "b", "a"], &[0.2, 0.9, 0.5]);
        assert_eq!(filter_top_softmax(&t, 1.0).unwrap(), t);
    }

    #[test]
    fn softmax_filter_keeps_top_tenth() {
        let conf: Vec<f64> = (0..10).map(|i| [0.3, 0.8, 0.1, 0.95, 0.5, 0.2, 0.6, 0.7, 0.4, 0.9][i]).collect();
        let t = with_conf(&["a"; 10], &conf);
        let kept = filter_top_softmax(&t, 0.1).unwrap();
        assert_eq!(kept.meta().image_ids, vec!["i3".to_string()]);
    }

    #[test]
    fn softmax_filter_rounding_slack() {
        let t = with_conf(&["a"; 10], &[0.5; 10]);
        assert_eq!(filter_top_softmax(&t, 0.7).unwrap().n_rows(), 7);
    }

    #[test]
    fn softmax_filter_requires_confidence() {
        let t = norms(&[&[1.0]]);
        assert!(matches!(filter_top_softmax(&t, 0.5), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn thresholds_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = ThresholdVector::new(vec![4, 2], vec![0.1 + 0.2, 1e-300]).unwrap();
        let path = dir.path().join("t.csv");
        write_thresholds(&t, &path).unwrap();
        assert_eq!(load_thresholds(&path).unwrap(), t);
    }
}
