//! On-disk formats exchanged between the activation exporter, the pipeline stages and users.
//!
//! Tabular data is CSV (UTF-8, `\n`, mandatory header); feature maps use a small
//! little-endian binary layout. Every loader validates before returning.

mod featmap;
mod manifest;
mod mask;
mod table;

pub use featmap::{feature_map_path, load_feature_map, save_feature_map, FeatureMap};
pub use manifest::{load_manifest, save_manifest, Hyperparameters, KernelSample, Manifest};
pub use mask::{is_identifier, load_mask, mask_paths, save_mask, SegmentationMask};
pub use table::{
    load_bits, load_norms, load_table, write_table, BinarizationTable, Cell, InstanceMeta,
    KernelTable, NormsTable,
};

pub(crate) use table::{csv_error, csv_writer};
