//! Semantic labels for significant kernels from segmentation masks.
//!
//! A kernel's feature map on one of its top-m images is resized to the mask
//! and thresholded at `tau * max` to give a pixel region. Each concept scores
//! the fraction of the region it occupies; scores are summed over the images,
//! normalized, and every concept within `margin` of the best one joins the label.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;

use crate::error::{Error, Result};
use crate::interchange::{FeatureMap, SegmentationMask};
use crate::quantize::compute_norm;
use crate::ruleset::{LabelMap, Predicate, RuleSet};

/// Slack on the margin comparison so that scores meant to sit exactly on the
/// boundary survive rounding in the normalization.
const MARGIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelRegion {
    pub image_id: String,
    pub height: u32,
    pub width: u32,
    pub members: Vec<bool>,
}

impl PixelRegion {
    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&m| m)
    }
}

/// Normalized concept scores of one kernel, highest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptScores {
    pub kernel_id: u32,
    pub scores: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelParams {
    pub m: usize,
    pub margin: f64,
    pub tau: f64,
}

impl Default for LabelParams {
    fn default() -> Self {
        LabelParams {
            m: 10,
            margin: 0.05,
            tau: 0.5,
        }
    }
}

impl LabelParams {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParameter("m must be at least 1".into()));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::InvalidParameter(format!("margin must be >= 0, got {}", self.margin)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidParameter(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        Ok(())
    }
}

/// Bilinear resize with half-pixel centers (edges clamped), row-major output.
pub fn resize_bilinear(map: &FeatureMap, out_h: u32, out_w: u32) -> Vec<f64> {
    let (in_h, in_w) = (map.height() as usize, map.width() as usize);
    let (out_h, out_w) = (out_h as usize, out_w as usize);
    let source = |o: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let cols: Vec<_> = (0..out_w).map(|x| source(x, out_w, in_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, wy) = source(y, out_h, in_h);
        for &(x0, x1, wx) in &cols {
            let at = |r: usize, c: usize| f64::from(map.at(r, c));
            let top = at(y0, x0) * (1.0 - wx) + at(y0, x1) * wx;
            let bottom = at(y1, x0) * (1.0 - wx) + at(y1, x1) * wx;
            out.push(top * (1.0 - wy) + bottom * wy);
        }
    }
    out
}

/// Pixels whose resized activation reaches `tau` times the maximum.
pub fn feature_region(map: &FeatureMap, out_h: u32, out_w: u32, tau: f64) -> PixelRegion {
    let resized = resize_bilinear(map, out_h, out_w);
    let max = resized.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let members = if max > 0.0 {
        let cut = tau * max;
        resized.iter().map(|&v| v >= cut).collect()
    } else {
        vec![false; resized.len()]
    };
    PixelRegion {
        image_id: map.image_id().to_string(),
        height: out_h,
        width: out_w,
        members,
    }
}

/// Share of the region covered by each concept present in the mask.
pub fn iou_concept(region: &PixelRegion, mask: &SegmentationMask) -> Result<BTreeMap<String, f64>> {
    if (region.height, region.width) != (mask.height(), mask.width()) {
        return Err(Error::Alignment(format!(
            "region is {}x{} but mask of {} is {}x{}",
            region.height,
            region.width,
            mask.image_id(),
            mask.height(),
            mask.width()
        )));
    }
    let size = region.len();
    if size == 0 {
        return Ok(BTreeMap::new());
    }
    let mut hits: BTreeMap<u32, usize> = mask.present_concepts().into_iter().map(|c| (c, 0)).collect();
    for (&inside, &c) in region.members.iter().zip(mask.concept_ids()) {
        if inside {
            *hits.get_mut(&c).expect("present concept") += 1;
        }
    }
    Ok(hits
        .into_iter()
        .map(|(c, n)| (mask.name_of(c).to_string(), n as f64 / size as f64))
        .collect())
}

/// Concepts scoring at least `top - margin`, in score order.
pub fn concepts_within_margin(scores: &ConceptScores, margin: f64) -> Vec<&str> {
    let Some(&(_, top)) = scores.scores.first() else {
        return Vec::new();
    };
    scores
        .scores
        .iter()
        .take_while(|(_, s)| *s >= top - margin - MARGIN_EPS)
        .map(|(c, _)| c.as_str())
        .collect()
}

/// Summed, normalized and sorted concept scores of one kernel over its images.
pub fn score_kernel(kernel_id: u32, samples: &[(FeatureMap, SegmentationMask)], tau: f64) -> Result<ConceptScores> {
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    let mut any_region = false;
    for (map, mask) in samples {
        if map.image_id() != mask.image_id() {
            return Err(Error::Alignment(format!(
                "kernel {kernel_id}: feature map of {} paired with mask of {}",
                map.image_id(),
                mask.image_id()
            )));
        }
        let region = feature_region(map, mask.height(), mask.width(), tau);
        any_region |= !region.is_empty();
        for (c, s) in iou_concept(&region, mask)? {
            *sums.entry(c).or_default() += s;
        }
    }
    if !any_region {
        return Err(Error::EmptyRegion(kernel_id));
    }
    let total: f64 = sums.values().sum();
    let mut scores: Vec<(String, f64)> = sums
        .into_iter()
        .filter(|&(_, s)| s > 0.0)
        .map(|(c, s)| (c, s / total))
        .collect();
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ConceptScores { kernel_id, scores })
}

/// Concepts naming one kernel (before suffixes) and the scores behind them.
pub fn label_kernel(
    kernel_id: u32,
    samples: &[(FeatureMap, SegmentationMask)],
    margin: f64,
    tau: f64,
) -> Result<(Vec<String>, ConceptScores)> {
    let scores = score_kernel(kernel_id, samples, tau)?;
    let concepts = concepts_within_margin(&scores, margin).into_iter().map(String::from).collect();
    Ok((concepts, scores))
}

/// Numbers each concept by how many kernels (in id order) have used it so far.
pub fn assign_suffixes(concepts: &BTreeMap<u32, Vec<String>>) -> BTreeMap<u32, String> {
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    concepts
        .iter()
        .map(|(&k, names)| {
            let parts: Vec<String> = names
                .iter()
                .map(|c| {
                    let n = counters.entry(c.as_str()).or_default();
                    *n += 1;
                    format!("{c}{n}")
                })
                .collect();
            (k, parts.join("_"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labelling {
    pub labels: LabelMap,
    pub scores: BTreeMap<u32, ConceptScores>,
    /// Significant kernels left numeric because none of their regions was non-empty.
    pub unlabelled: Vec<u32>,
}

/// Kernels referenced by raw id in some rule body.
pub fn unlabelled_kernels(rs: &RuleSet) -> BTreeSet<u32> {
    rs.rules()
        .iter()
        .flat_map(|r| &r.body)
        .filter_map(|l| match l.predicate {
            Predicate::Kernel(k) => Some(k),
            _ => None,
        })
        .collect()
}

/// Labels every kernel predicate of `rs` from its highest-norm `m` samples.
pub fn label_ruleset(
    rs: &RuleSet,
    data: &BTreeMap<u32, Vec<(FeatureMap, SegmentationMask)>>,
    params: &LabelParams,
) -> Result<Labelling> {
    params.validate()?;
    let mut concepts = BTreeMap::new();
    let mut scores = BTreeMap::new();
    let mut unlabelled = Vec::new();
    for k in unlabelled_kernels(rs) {
        let samples = data
            .get(&k)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::MissingData(format!("no feature maps or masks for kernel {k}")))?;
        let mut ranked: Vec<&(FeatureMap, SegmentationMask)> = samples.iter().collect();
        ranked.sort_by(|a, b| compute_norm(&b.0).total_cmp(&compute_norm(&a.0)).then_with(|| a.0.image_id().cmp(b.0.image_id())));
        let top: Vec<(FeatureMap, SegmentationMask)> = ranked.into_iter().take(params.m).cloned().collect();
        match label_kernel(k, &top, params.margin, params.tau) {
            Ok((names, s)) => {
                concepts.insert(k, names);
                scores.insert(k, s);
            }
            Err(Error::EmptyRegion(_)) => {
                warn!("kernel {k}: every region is empty, keeping the numeric predicate");
                unlabelled.push(k);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Labelling {
        labels: LabelMap::new(assign_suffixes(&concepts))?,
        scores,
        unlabelled,
    })
}
