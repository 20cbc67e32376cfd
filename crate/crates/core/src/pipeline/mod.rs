//! End-to-end run: quantize, learn, label, evaluate, report.
//!
//! Every stage writes its artifacts into the output directory in a format the
//! corresponding loader reads back, so any stage can be rerun by hand.

mod config;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};

pub use config::{RunConfig, KEYS};
pub use report::{report, RunReport};

use crate::error::{Error, Result};
use crate::induction::learn_ruleset;
use crate::inference::{evaluate_predictions, predict_table, write_metrics, write_predictions};
use crate::interchange::{
    feature_map_path, load_feature_map, load_mask, load_norms, mask_paths, save_manifest, write_table, FeatureMap,
    KernelSample, Manifest, NormsTable, SegmentationMask,
};
use crate::labeller::{label_ruleset, unlabelled_kernels};
use crate::quantize::{binarize, compute_thresholds, filter_top_softmax, write_thresholds};
use crate::ruleset::{apply_labels, print_ruleset, stats, write_label_map, RuleSet};

pub const THRESHOLDS: &str = "thresholds.csv";
pub const TRAIN_BITS: &str = "train_bits.csv";
pub const TEST_BITS: &str = "test_bits.csv";
pub const RULESET: &str = "ruleset.lp";
pub const LABELS: &str = "labels.csv";
pub const LABELED_RULESET: &str = "ruleset_labeled.lp";
pub const PREDICTIONS: &str = "predictions.csv";
pub const METRICS: &str = "metrics.csv";
pub const REPORT: &str = "report.txt";
pub const MANIFEST: &str = "manifest.json";

pub fn write_ruleset(rs: &RuleSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, print_ruleset(rs)).map_err(|e| Error::io(path, e))
}

pub fn load_ruleset(path: impl AsRef<Path>) -> Result<RuleSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    crate::ruleset::parse_ruleset(&text).map_err(|e| match e {
        Error::Parse { line, column, message } => {
            Error::format(path, format!("line {line}, column {column}: {message}"))
        }
        other => other,
    })
}

fn absolute(path: &Path) -> PathBuf {
    fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

/// Top-`m` training images per kernel by norm, restricted to images that
/// have both a feature map and a mask on disk.
pub fn select_samples(
    kernels: impl IntoIterator<Item = u32>,
    norms: &NormsTable,
    featmaps: &Path,
    masks: &Path,
    m: usize,
) -> Result<BTreeMap<u32, Vec<KernelSample>>> {
    let mut out = BTreeMap::new();
    for k in kernels {
        let col = norms
            .column_of(k)
            .ok_or_else(|| Error::MissingData(format!("no norms for kernel {k}")))?;
        let mut rows: Vec<usize> = (0..norms.n_rows()).collect();
        rows.sort_by(|&a, &b| norms.get(b, col).total_cmp(&norms.get(a, col)));
        let mut picked = Vec::new();
        for r in rows {
            if picked.len() == m {
                break;
            }
            let id = &norms.meta().image_ids[r];
            let featmap = feature_map_path(featmaps, k, id);
            let (mask, concepts) = mask_paths(masks, id);
            if featmap.exists() && mask.exists() && concepts.exists() {
                picked.push(KernelSample {
                    image_id: id.clone(),
                    featmap: absolute(&featmap),
                    mask: absolute(&mask),
                    concepts: absolute(&concepts),
                });
            }
        }
        if picked.is_empty() {
            return Err(Error::MissingData(format!("kernel {k}: no image has both a feature map and a mask")));
        }
        out.insert(k, picked);
    }
    Ok(out)
}

/// Loads the feature maps and masks listed for each kernel.
pub fn load_samples(
    samples: &BTreeMap<u32, Vec<KernelSample>>,
) -> Result<BTreeMap<u32, Vec<(FeatureMap, SegmentationMask)>>> {
    samples
        .iter()
        .map(|(&k, list)| {
            let loaded = list
                .iter()
                .map(|s| {
                    let map = load_feature_map(&s.featmap)?;
                    if map.kernel_id() != k {
                        return Err(Error::format(
                            &s.featmap,
                            format!("holds kernel {} but is listed for kernel {k}", map.kernel_id()),
                        ));
                    }
                    Ok((map, load_mask(&s.mask, &s.concepts)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((k, loaded))
        })
        .collect()
}

/// Runs every stage; errors carry the stage name.
pub fn run_pipeline(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let h = &config.hyper;
    let out = config.out.clone().expect("validated");
    let norms_path = config.norms.clone().expect("validated");
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let at = |name: &str| out.join(name);
    let mut manifest = Manifest {
        norms: Some(absolute(&norms_path)),
        test_norms: config.test_norms.as_deref().map(absolute),
        thresholds: Some(THRESHOLDS.into()),
        bits: Some(TRAIN_BITS.into()),
        ruleset: Some(RULESET.into()),
        hyperparameters: *h,
        ..Default::default()
    };

    let (train_norms, train_bits, test_bits) = (|| {
        let train = load_norms(&norms_path)?;
        let thresholds = compute_thresholds(&train, h.alpha, h.gamma)?;
        write_thresholds(&thresholds, at(THRESHOLDS))?;
        let bits = binarize(&train, &thresholds)?;
        write_table(&bits, at(TRAIN_BITS))?;
        let test = match &config.test_norms {
            Some(p) => {
                let t = binarize(&load_norms(p)?, &thresholds)?;
                write_table(&t, at(TEST_BITS))?;
                Some(t)
            }
            None => None,
        };
        Ok((train, bits, test))
    })()
    .map_err(|e: Error| e.in_stage("quantize"))?;
    if test_bits.is_some() {
        manifest.test_bits = Some(TEST_BITS.into());
    }
    info!("quantize: {} train rows, {} kernels", train_bits.n_rows(), train_bits.n_kernels());

    let rs = (|| {
        let table = match h.softmax_fraction {
            Some(f) => filter_top_softmax(&train_bits, f)?,
            None => train_bits.clone(),
        };
        let rs = learn_ruleset(&table, &config.fold_params())?;
        write_ruleset(&rs, at(RULESET))?;
        Ok(rs)
    })()
    .map_err(|e: Error| e.in_stage("learn"))?;
    info!("learn: {} rules", rs.len());

    let labelled = match (&config.featmaps, &config.masks) {
        (Some(featmaps), Some(masks)) => {
            let labelled = (|| {
                let samples = select_samples(unlabelled_kernels(&rs), &train_norms, featmaps, masks, h.m)?;
                let labelling = label_ruleset(&rs, &load_samples(&samples)?, &config.label_params())?;
                write_label_map(&labelling.labels, at(LABELS))?;
                let labelled = apply_labels(&rs, &labelling.labels)?;
                write_ruleset(&labelled, at(LABELED_RULESET))?;
                manifest.kernels = samples;
                manifest.labelmap = Some(LABELS.into());
                Ok(labelled)
            })()
            .map_err(|e: Error| e.in_stage("label"))?;
            Some(labelled)
        }
        _ => {
            warn!("label: skipped, feature maps or masks not configured");
            None
        }
    };

    let (metrics, evaluated_on) = (|| {
        let final_rs = labelled.as_ref().unwrap_or(&rs);
        let (table, split) = match &test_bits {
            Some(t) => (t, "test"),
            None => (&train_bits, "train"),
        };
        let predictions = predict_table(final_rs, table)?;
        write_predictions(&predictions, at(PREDICTIONS))?;
        let metrics = evaluate_predictions(&predictions, table)?;
        write_metrics(&metrics, at(METRICS))?;
        Ok((metrics, split))
    })()
    .map_err(|e: Error| e.in_stage("evaluate"))?;

    let run = RunReport {
        stats: stats(labelled.as_ref().unwrap_or(&rs)),
        metrics,
        evaluated_on,
        labelled: labelled.is_some(),
    };
    (|| {
        let path = at(REPORT);
        fs::write(&path, run.render()).map_err(|e| Error::io(&path, e))?;
        save_manifest(&manifest, at(MANIFEST))
    })()
    .map_err(|e: Error| e.in_stage("report"))?;
    Ok(run)
}
