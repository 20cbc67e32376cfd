use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::induction::{FoldParams, ListOrder};
use crate::interchange::Hyperparameters;
use crate::labeller::LabelParams;

/// Inputs, output directory and hyperparameters of one pipeline run.
///
/// Read from a flat `key = value` file (`#` starts a comment); the same keys
/// are accepted as command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub norms: Option<PathBuf>,
    pub test_norms: Option<PathBuf>,
    /// Directory holding `k_<id>/<image>.nsyf` feature maps.
    pub featmaps: Option<PathBuf>,
    /// Directory holding `<image>.csv` / `<image>.concepts.csv` masks.
    pub masks: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub hyper: Hyperparameters,
    pub order: ListOrder,
    pub lookahead: usize,
}

pub const KEYS: &[&str] = &[
    "norms",
    "test_norms",
    "featmaps",
    "masks",
    "out",
    "alpha",
    "gamma",
    "ratio",
    "tail",
    "max_exception_depth",
    "margin",
    "m",
    "tau",
    "softmax_fraction",
    "order",
    "lookahead",
];

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            norms: None,
            test_norms: None,
            featmaps: None,
            masks: None,
            out: None,
            hyper: Hyperparameters::default(),
            order: ListOrder::default(),
            lookahead: FoldParams::default().lookahead,
        }
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("{key}: cannot parse `{value}`")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let h = &mut self.hyper;
        match key {
            "norms" => self.norms = Some(value.into()),
            "test_norms" => self.test_norms = Some(value.into()),
            "featmaps" => self.featmaps = Some(value.into()),
            "masks" => self.masks = Some(value.into()),
            "out" => self.out = Some(value.into()),
            "alpha" => h.alpha = number(key, value)?,
            "gamma" => h.gamma = number(key, value)?,
            "ratio" => h.ratio = number(key, value)?,
            "tail" => h.tail = number(key, value)?,
            "max_exception_depth" => h.max_exception_depth = number(key, value)?,
            "margin" => h.margin = number(key, value)?,
            "m" => h.m = number(key, value)?,
            "tau" => h.tau = number(key, value)?,
            "softmax_fraction" => {
                h.softmax_fraction = match value {
                    "" | "none" => None,
                    v => Some(number(key, v)?),
                }
            }
            "order" => {
                self.order = ListOrder::parse(value).ok_or_else(|| {
                    Error::InvalidParameter(format!("order must be `sequential`, `coverage` or `class`, got `{value}`"))
                })?
            }
            "lookahead" => self.lookahead = number(key, value)?,
            other => return Err(Error::InvalidParameter(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("config line {}: expected `key = value`", n + 1)))?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::InvalidParameter(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.norms.is_none() {
            return Err(Error::InvalidParameter("`norms` is required".into()));
        }
        if self.out.is_none() {
            return Err(Error::InvalidParameter("`out` is required".into()));
        }
        self.hyper.validate()
    }

    pub fn fold_params(&self) -> FoldParams {
        FoldParams {
            ratio: self.hyper.ratio,
            tail: self.hyper.tail,
            max_exception_depth: self.hyper.max_exception_depth,
            order: self.order,
            lookahead: self.lookahead,
        }
    }

    pub fn label_params(&self) -> LabelParams {
        LabelParams {
            m: self.hyper.m,
            margin: self.hyper.margin,
            tau: self.hyper.tau,
        }
    }
}
