//! Binary feature-map files.
//!
//! Layout (little-endian): magic `NSYF`, version `u32 = 1`, kernel id `u32`,
//! height `u32`, width `u32`, then `height * width` `f32` values in row-major
//! order. The image id is the file stem.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NSYF";
pub const VERSION: u32 = 1;
pub const EXTENSION: &str = "nsyf";
const HEADER_LEN: usize = 20;

/// One kernel's 2D activation map for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    kernel_id: u32,
    image_id: String,
    height: u32,
    width: u32,
    values: Vec<f32>,
}

impl FeatureMap {
    pub fn new(
        kernel_id: u32,
        image_id: impl Into<String>,
        height: u32,
        width: u32,
        values: Vec<f32>,
    ) -> Result<Self> {
        let image_id = image_id.into();
        if image_id.is_empty() {
            return Err(Error::InvalidData("feature map with empty image id".into()));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidData(format!(
                "feature map {image_id}/k_{kernel_id} has zero dimension {height}x{width}"
            )));
        }
        if height as usize * width as usize != values.len() {
            return Err(Error::InvalidData(format!(
                "feature map {image_id}/k_{kernel_id}: {}x{} needs {} values, got {}",
                height,
                width,
                height as usize * width as usize,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "feature map {image_id}/k_{kernel_id} contains non-finite values"
            )));
        }
        Ok(FeatureMap {
            kernel_id,
            image_id,
            height,
            width,
            values,
        })
    }

    pub fn kernel_id(&self) -> u32 {
        self.kernel_id
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width as usize + col]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        for word in [VERSION, self.kernel_id, self.height, self.width] {
            out.extend_from_slice(&word.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(image_id: &str, bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < HEADER_LEN {
            return Err(format!("truncated header ({} bytes)", bytes.len()));
        }
        if &bytes[..4] != MAGIC {
            return Err(format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4])));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        let (version, kernel_id, height, width) = (word(0), word(1), word(2), word(3));
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let count = height as usize * width as usize;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != 4 * count {
            return Err(format!(
                "payload has {} bytes, {}x{} map needs {}",
                payload.len(),
                height,
                width,
                4 * count
            ));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        FeatureMap::new(kernel_id, image_id, height, width, values).map_err(|e| e.to_string())
    }
}

fn stem(path: &Path) -> Result<&str> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::format(path, "cannot derive image id from file name"))
}

pub fn load_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureMap::from_bytes(stem(path)?, &bytes).map_err(|msg| Error::format(path, msg))
}

/// Writes a feature map; the file stem must equal the map's image id so the
/// loader reconstructs it exactly.
pub fn save_feature_map(map: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if stem(path)? != map.image_id {
        return Err(Error::InvalidParameter(format!(
            "file {} would not reload as image `{}`",
            path.display(),
            map.image_id
        )));
    }
    fs::write(path, map.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Conventional location `<root>/k_<kernel>/<image_id>.nsyf`.
pub fn feature_map_path(root: &Path, kernel_id: u32, image_id: &str) -> PathBuf {
    root.join(format!("k_{kernel_id}"))
        .join(format!("{image_id}.{EXTENSION}"))
}
