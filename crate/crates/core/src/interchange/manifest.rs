//! JSON run manifest: artifact locations plus the hyperparameter record.
//!
//! Relative paths inside a manifest are resolved against the manifest's own directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub alpha: f64,
    pub gamma: f64,
    pub ratio: f64,
    pub tail: f64,
    pub max_exception_depth: usize,
    pub margin: f64,
    pub m: usize,
    pub tau: f64,
    pub softmax_fraction: Option<f64>,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            alpha: 0.6,
            gamma: 0.7,
            ratio: 0.8,
            tail: 5e-3,
            max_exception_depth: 3,
            margin: 0.05,
            m: 10,
            tau: 0.5,
            softmax_fraction: None,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidParameter(what));
        if !self.alpha.is_finite() || !self.gamma.is_finite() {
            return bad(format!("alpha/gamma must be finite (got {}, {})", self.alpha, self.gamma));
        }
        if !(self.ratio.is_finite() && self.ratio >= 0.0) {
            return bad(format!("ratio must be >= 0 (got {})", self.ratio));
        }
        if !(self.tail > 0.0 && self.tail <= 1.0) {
            return bad(format!("tail must lie in (0,1] (got {})", self.tail));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return bad(format!("margin must be >= 0 (got {})", self.margin));
        }
        if self.m == 0 {
            return bad("m must be >= 1".into());
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0,1] (got {})", self.tau));
        }
        if let Some(f) = self.softmax_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("softmax fraction must lie in (0,1] (got {f})"));
            }
        }
        Ok(())
    }
}

/// One top-m image for a kernel: its feature map and segmentation mask files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSample {
    pub image_id: String,
    pub featmap: PathBuf,
    pub mask: PathBuf,
    pub concepts: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Manifest {
    pub norms: Option<PathBuf>,
    pub test_norms: Option<PathBuf>,
    pub bits: Option<PathBuf>,
    pub test_bits: Option<PathBuf>,
    pub thresholds: Option<PathBuf>,
    pub ruleset: Option<PathBuf>,
    pub labelmap: Option<PathBuf>,
    /// Per-kernel top-m samples used for semantic labelling.
    pub kernels: BTreeMap<u32, Vec<KernelSample>>,
    pub hyperparameters: Hyperparameters,
}

impl Manifest {
    fn paths_mut(&mut self) -> impl Iterator<Item = &mut PathBuf> {
        let singles = [
            &mut self.norms,
            &mut self.test_norms,
            &mut self.bits,
            &mut self.test_bits,
            &mut self.thresholds,
            &mut self.ruleset,
            &mut self.labelmap,
        ]
        .into_iter()
        .flatten();
        let samples = self
            .kernels
            .values_mut()
            .flat_map(|s| s.iter_mut())
            .flat_map(|s| [&mut s.featmap, &mut s.mask, &mut s.concepts]);
        singles.chain(samples)
    }
}

/// Reads a manifest, resolves its paths and checks that every referenced file exists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("")).to_path_buf();
    for p in manifest.paths_mut() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
        if !p.exists() {
            return Err(Error::MissingData(format!(
                "manifest {} references missing file {}",
                path.display(),
                p.display()
            )));
        }
    }
    manifest.hyperparameters.validate()?;
    Ok(manifest)
}

/// Writes a manifest as pretty-printed JSON. Paths are written as given.
pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Internal(format!("manifest serialization: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
