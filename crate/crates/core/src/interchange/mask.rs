//! Semantic segmentation masks: a CSV grid of concept ids (header `c_0,...,c_<w-1>`)
//! plus a `concept_id,name` sidecar.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::interchange::table::{csv_error, csv_writer};

/// True when `name` is usable as a predicate fragment: `[a-z][a-z0-9_]*`.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMask {
    image_id: String,
    height: u32,
    width: u32,
    concept_ids: Vec<u32>,
    concept_names: BTreeMap<u32, String>,
}

impl SegmentationMask {
    pub fn new(
        image_id: impl Into<String>,
        height: u32,
        width: u32,
        concept_ids: Vec<u32>,
        concept_names: BTreeMap<u32, String>,
    ) -> Result<Self> {
        let mask = SegmentationMask {
            image_id: image_id.into(),
            height,
            width,
            concept_ids,
            concept_names,
        };
        mask.validate().map_err(Error::InvalidData)?;
        Ok(mask)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.image_id.is_empty() {
            return Err("mask with empty image id".into());
        }
        if self.height == 0 || self.width == 0 {
            return Err(format!("mask {} has a zero dimension", self.image_id));
        }
        if self.height as usize * self.width as usize != self.concept_ids.len() {
            return Err(format!(
                "mask {}: {}x{} grid has {} cells",
                self.image_id,
                self.height,
                self.width,
                self.concept_ids.len()
            ));
        }
        let mut names = HashSet::new();
        for (id, name) in &self.concept_names {
            if !is_identifier(name) {
                return Err(format!("concept {id} has invalid name `{name}`"));
            }
            if !names.insert(name.as_str()) {
                return Err(format!("concept name `{name}` used by two ids"));
            }
        }
        if let Some(id) = self.concept_ids.iter().find(|id| !self.concept_names.contains_key(id)) {
            return Err(format!("concept id {id} has no name in the sidecar"));
        }
        Ok(())
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

    pub fn concept_ids(&self) -> &[u32] {
        &self.concept_ids
    }

    pub fn concept_names(&self) -> &BTreeMap<u32, String> {
        &self.concept_names
    }

    pub fn name_of(&self, concept_id: u32) -> &str {
        &self.concept_names[&concept_id]
    }

    /// Ids that occur somewhere in the grid.
    pub fn present_concepts(&self) -> BTreeSet<u32> {
        self.concept_ids.iter().copied().collect()
    }
}

fn grid_stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .ok_or_else(|| Error::format(path, "cannot derive image id from file name"))
}

/// Loads a mask grid and its concept-name sidecar. The image id is the grid's file stem.
pub fn load_mask(grid_path: impl AsRef<Path>, names_path: impl AsRef<Path>) -> Result<SegmentationMask> {
    let grid_path = grid_path.as_ref();
    let names_path = names_path.as_ref();
    let image_id = grid_stem(grid_path)?;

    let names_file = File::open(names_path).map_err(|e| Error::io(names_path, e))?;
    let mut names_reader = csv::ReaderBuilder::new().from_reader(names_file);
    let header = names_reader.headers().map_err(|e| csv_error(names_path, e))?;
    if header.iter().collect::<Vec<_>>() != ["concept_id", "name"] {
        return Err(Error::format(names_path, "header must be `concept_id,name`"));
    }
    let mut concept_names = BTreeMap::new();
    for (row, record) in names_reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(names_path, e.to_string()))?;
        let id = record[0].trim().parse::<u32>().map_err(|_| {
            Error::format(names_path, format!("row {}: bad concept id `{}`", row + 1, &record[0]))
        })?;
        if concept_names.insert(id, record[1].to_string()).is_some() {
            return Err(Error::format(names_path, format!("duplicate concept id {id}")));
        }
    }

    let grid_file = File::open(grid_path).map_err(|e| Error::io(grid_path, e))?;
    let mut grid_reader = csv::ReaderBuilder::new().flexible(true).from_reader(grid_file);
    let width = grid_reader.headers().map_err(|e| csv_error(grid_path, e))?.len();
    let mut concept_ids = Vec::new();
    let mut height = 0u32;
    for (row, record) in grid_reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(grid_path, e.to_string()))?;
        if record.len() != width {
            return Err(Error::format(
                grid_path,
                format!("ragged row {}: {} cells, header has {}", row + 1, record.len(), width),
            ));
        }
        for (col, raw) in record.iter().enumerate() {
            let id = raw.trim().parse::<u32>().map_err(|_| {
                Error::format(grid_path, format!("row {}, column {}: bad concept id `{raw}`", row + 1, col))
            })?;
            concept_ids.push(id);
        }
        height += 1;
    }
    if height == 0 {
        return Err(Error::EmptyInput(grid_path.display().to_string()));
    }
    let mask = SegmentationMask {
        image_id,
        height,
        width: width as u32,
        concept_ids,
        concept_names,
    };
    mask.validate().map_err(|msg| Error::format(grid_path, msg))?;
    Ok(mask)
}

pub fn save_mask(mask: &SegmentationMask, grid_path: impl AsRef<Path>, names_path: impl AsRef<Path>) -> Result<()> {
    let grid_path = grid_path.as_ref();
    let names_path = names_path.as_ref();
    if grid_stem(grid_path)? != mask.image_id {
        return Err(Error::InvalidParameter(format!(
            "grid file {} would not reload as image `{}`",
            grid_path.display(),
            mask.image_id
        )));
    }
    let mut grid = csv_writer(grid_path)?;
    let header: Vec<String> = (0..mask.width).map(|c| format!("c_{c}")).collect();
    grid.write_record(&header).map_err(|e| csv_error(grid_path, e))?;
    for row in mask.concept_ids.chunks(mask.width as usize) {
        grid.write_record(row.iter().map(u32::to_string))
            .map_err(|e| csv_error(grid_path, e))?;
    }
    grid.flush().map_err(|e| Error::io(grid_path, e))?;

    let mut names = csv_writer(names_path)?;
    names.write_record(["concept_id", "name"]).map_err(|e| csv_error(names_path, e))?;
    for (id, name) in &mask.concept_names {
        names.write_record([id.to_string(), name.clone()])
            .map_err(|e| csv_error(names_path, e))?;
    }
    names.flush().map_err(|e| Error::io(names_path, e))
}

/// Conventional pair `<dir>/<image_id>.csv` and `<dir>/<image_id>.concepts.csv`.
pub fn mask_paths(dir: &Path, image_id: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{image_id}.csv")),
        dir.join(format!("{image_id}.concepts.csv")),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn loads_two_concept_grid() {
        let dir = tempfile::tempdir().unwrap();
        let (grid, names) = mask_paths(dir.path(), "room");
        fs::write(&grid, "c_0,c_1\n1,1\n2,2\n").unwrap();
        fs::write(&names, "concept_id,name\n1,wall\n2,bed\n").unwrap();
        let mask = load_mask(&grid, &names).unwrap();
        assert_eq!(mask.image_id(), "room");
        assert_eq!((mask.height(), mask.width()), (2, 2));
        assert_eq!(mask.present_concepts().len(), 2);
        assert_eq!(mask.name_of(2), "bed");
    }

    #[test]
    fn unknown_grid_id_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let (grid, names) = mask_paths(dir.path(), "room");
        fs::write(&grid, "c_0,c_1\n1,9\n2,2\n").unwrap();
        fs::write(&names, "concept_id,name\n1,wall\n2,bed\n").unwrap();
        assert!(matches!(load_mask(&grid, &names), Err(Error::Format { .. })));
    }

    #[test]
    fn ragged_rows_are_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let (grid, names) = mask_paths(dir.path(), "room");
        fs::write(&grid, "c_0,c_1\n1,1\n2\n").unwrap();
        fs::write(&names, "concept_id,name\n1,wall\n2,bed\n").unwrap();
        assert!(matches!(load_mask(&grid, &names), Err(Error::Format { .. })));
    }

    #[test]
    fn identifier_rule() {
        assert!(is_identifier("work_surface"));
        assert!(is_identifier("a1"));
        assert!(!is_identifier("1a"));
        assert!(!is_identifier("Wall"));
        assert!(!is_identifier(""));
        assert!(!is_identifier("work surface"));
    }
}
