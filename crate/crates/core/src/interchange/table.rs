//! Per-image × per-kernel tables (norms and binarizations) and their CSV form.
//!
//! Header layout: `image_id,true_class[,cnn_pred][,cnn_conf],k_<id>,...`.

use std::collections::HashSet;
use std::fmt::Debug;
use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};

/// A value stored in a kernel column.
pub trait Cell: Copy + PartialEq + Debug {
    /// Human description used in error messages.
    const EXPECTED: &'static str;

    fn parse_cell(raw: &str) -> Option<Self>;
    fn format_cell(&self) -> String;
    fn is_valid(&self) -> bool;
}

impl Cell for f64 {
    const EXPECTED: &'static str = "a finite non-negative number";

    fn parse_cell(raw: &str) -> Option<Self> {
        raw.trim().parse::<f64>().ok().filter(|v| v.is_valid())
    }

    fn format_cell(&self) -> String {
        // Display for f64 is the shortest representation that parses back to the same bits.
        format!("{self}")
    }

    fn is_valid(&self) -> bool {
        self.is_finite() && *self >= 0.0
    }
}

impl Cell for bool {
    const EXPECTED: &'static str = "0 or 1";

    fn parse_cell(raw: &str) -> Option<Self> {
        match raw.trim() {
            "0" => Some(false),
            "1" => Some(true),
            _ => None,
        }
    }

    fn format_cell(&self) -> String {
        if *self { "1" } else { "0" }.to_string()
    }

    fn is_valid(&self) -> bool {
        true
    }
}

/// Per-image metadata shared by norms and binarization tables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InstanceMeta {
    pub image_ids: Vec<String>,
    pub true_class: Vec<String>,
    pub cnn_pred: Option<Vec<String>>,
    pub cnn_conf: Option<Vec<f64>>,
}

impl InstanceMeta {
    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let n = self.image_ids.len();
        if self.true_class.len() != n {
            return Err(format!(
                "{} image ids but {} true_class values",
                n,
                self.true_class.len()
            ));
        }
        if let Some(pred) = &self.cnn_pred {
            if pred.len() != n {
                return Err(format!("{} image ids but {} cnn_pred values", n, pred.len()));
            }
            if pred.iter().any(|p| p.is_empty()) {
                return Err("empty cnn_pred value".into());
            }
        }
        if let Some(conf) = &self.cnn_conf {
            if conf.len() != n {
                return Err(format!("{} image ids but {} cnn_conf values", n, conf.len()));
            }
            if let Some(bad) = conf.iter().find(|c| !(c.is_finite() && (0.0..=1.0).contains(*c))) {
                return Err(format!("cnn_conf value {bad} outside [0,1]"));
            }
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &self.image_ids {
            if id.is_empty() {
                return Err("empty image_id".into());
            }
            if !seen.insert(id.as_str()) {
                return Err(format!("duplicate image_id `{id}`"));
            }
        }
        if self.true_class.iter().any(|c| c.is_empty()) {
            return Err("empty true_class value".into());
        }
        Ok(())
    }

    /// Metadata restricted to the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> InstanceMeta {
        InstanceMeta {
            image_ids: rows.iter().map(|&r| self.image_ids[r].clone()).collect(),
            true_class: rows.iter().map(|&r| self.true_class[r].clone()).collect(),
            cnn_pred: self
                .cnn_pred
                .as_ref()
                .map(|p| rows.iter().map(|&r| p[r].clone()).collect()),
            cnn_conf: self
                .cnn_conf
                .as_ref()
                .map(|c| rows.iter().map(|&r| c[r]).collect()),
        }
    }
}

/// Dense row-major table: rows are images, columns are kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable<T: Cell> {
    meta: InstanceMeta,
    kernel_ids: Vec<u32>,
    cells: Vec<T>,
}

/// Real-valued feature-map norms.
pub type NormsTable = KernelTable<f64>;
/// Binarized kernel activations.
pub type BinarizationTable = KernelTable<bool>;

impl<T: Cell> KernelTable<T> {
    pub fn new(meta: InstanceMeta, kernel_ids: Vec<u32>, cells: Vec<T>) -> Result<Self> {
        let table = KernelTable {
            meta,
            kernel_ids,
            cells,
        };
        table.validate().map_err(Error::InvalidData)?;
        Ok(table)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        self.meta.validate()?;
        let expected = self.meta.len() * self.kernel_ids.len();
        if self.cells.len() != expected {
            return Err(format!(
                "{} cells for {} rows × {} kernels",
                self.cells.len(),
                self.meta.len(),
                self.kernel_ids.len()
            ));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.kernel_ids.iter().find(|k| !seen.insert(**k)) {
            return Err(format!("duplicate kernel id {dup}"));
        }
        if let Some(pos) = self.cells.iter().position(|c| !c.is_valid()) {
            let k = self.kernel_ids.len();
            return Err(format!(
                "row {}, kernel {}: {:?} is not {}",
                pos / k,
                self.kernel_ids[pos % k],
                self.cells[pos],
                T::EXPECTED
            ));
        }
        Ok(())
    }

    pub fn meta(&self) -> &InstanceMeta {
        &self.meta
    }

    pub fn kernel_ids(&self) -> &[u32] {
        &self.kernel_ids
    }

    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    pub fn n_rows(&self) -> usize {
        self.meta.len()
    }

    pub fn n_kernels(&self) -> usize {
        self.kernel_ids.len()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let k = self.kernel_ids.len();
        &self.cells[i * k..(i + 1) * k]
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.cells[row * self.kernel_ids.len() + col]
    }

    /// Column index of a kernel id.
    pub fn column_of(&self, kernel_id: u32) -> Option<usize> {
        self.kernel_ids.iter().position(|&k| k == kernel_id)
    }

    pub fn row_of(&self, image_id: &str) -> Option<usize> {
        self.meta.image_ids.iter().position(|id| id == image_id)
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.n_rows()).map(move |r| self.get(r, col))
    }

    /// Sub-table with the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut cells = Vec::with_capacity(rows.len() * self.n_kernels());
        for &r in rows {
            cells.extend_from_slice(self.row(r));
        }
        KernelTable {
            meta: self.meta.select(rows),
            kernel_ids: self.kernel_ids.clone(),
            cells,
        }
    }

    /// Same metadata and kernels with every cell mapped column-wise.
    pub(crate) fn map_cells<U: Cell>(&self, mut f: impl FnMut(usize, T) -> U) -> Result<KernelTable<U>> {
        let k = self.kernel_ids.len();
        let cells = self
            .cells
            .iter()
            .enumerate()
            .map(|(idx, &c)| f(idx % k, c))
            .collect();
        KernelTable::new(self.meta.clone(), self.kernel_ids.clone(), cells)
    }
}

struct Header {
    has_pred: bool,
    has_conf: bool,
    first_kernel: usize,
    kernel_ids: Vec<u32>,
}

fn parse_header(path: &Path, header: &csv::StringRecord) -> Result<Header> {
    let cols: Vec<&str> = header.iter().collect();
    let fail = |msg: String| Error::format(path, format!("malformed header: {msg}"));
    if cols.first() != Some(&"image_id") {
        return Err(fail("first column must be `image_id`".into()));
    }
    if cols.get(1) != Some(&"true_class") {
        return Err(fail("second column must be `true_class`".into()));
    }
    let mut idx = 2;
    let has_pred = cols.get(idx) == Some(&"cnn_pred");
    if has_pred {
        idx += 1;
    }
    let has_conf = cols.get(idx) == Some(&"cnn_conf");
    if has_conf {
        idx += 1;
    }
    let first_kernel = idx;
    let mut kernel_ids = Vec::new();
    let mut seen = HashSet::new();
    for col in &cols[first_kernel..] {
        let id = col
            .strip_prefix("k_")
            .and_then(|s| s.parse::<u32>().ok().filter(|id| id.to_string() == s))
            .ok_or_else(|| fail(format!("unexpected column `{col}`")))?;
        if !seen.insert(id) {
            return Err(fail(format!("duplicate kernel column `{col}`")));
        }
        kernel_ids.push(id);
    }
    if kernel_ids.is_empty() {
        return Err(fail("no kernel columns".into()));
    }
    Ok(Header {
        has_pred,
        has_conf,
        first_kernel,
        kernel_ids,
    })
}

/// Loads a norms or binarization table from CSV.
pub fn load_table<T: Cell>(path: impl AsRef<Path>) -> Result<KernelTable<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    let layout = parse_header(path, &header)?;

    let mut meta = InstanceMeta {
        cnn_pred: layout.has_pred.then(Vec::new),
        cnn_conf: layout.has_conf.then(Vec::new),
        ..Default::default()
    };
    let mut cells = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let text = |col: usize| record.get(col).unwrap_or_default();
        meta.image_ids.push(text(0).to_string());
        meta.true_class.push(text(1).to_string());
        let mut col = 2;
        if let Some(pred) = meta.cnn_pred.as_mut() {
            pred.push(text(col).to_string());
            col += 1;
        }
        if let Some(conf) = meta.cnn_conf.as_mut() {
            let raw = text(col);
            let value = raw
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|c| c.is_finite() && (0.0..=1.0).contains(c))
                .ok_or_else(|| {
                    Error::format(
                        path,
                        format!("row {}, column cnn_conf: `{raw}` is not a confidence in [0,1]", row + 1),
                    )
                })?;
            conf.push(value);
        }
        for (j, kernel) in layout.kernel_ids.iter().enumerate() {
            let raw = text(layout.first_kernel + j);
            let value = T::parse_cell(raw).ok_or_else(|| {
                Error::format(
                    path,
                    format!("row {}, column k_{kernel}: `{raw}` is not {}", row + 1, T::EXPECTED),
                )
            })?;
            cells.push(value);
        }
    }
    if meta.is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }
    let table = KernelTable {
        meta,
        kernel_ids: layout.kernel_ids,
        cells,
    };
    table.validate().map_err(|msg| Error::format(path, msg))?;
    Ok(table)
}

pub fn load_norms(path: impl AsRef<Path>) -> Result<NormsTable> {
    load_table(path)
}

pub fn load_bits(path: impl AsRef<Path>) -> Result<BinarizationTable> {
    load_table(path)
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

pub(crate) fn csv_error(path: &Path, err: csv::Error) -> Error {
    match err.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Writes a table in the CSV layout read by [`load_table`].
pub fn write_table<T: Cell>(table: &KernelTable<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv_writer(path)?;
    let mut header = vec!["image_id".to_string(), "true_class".to_string()];
    if table.meta.cnn_pred.is_some() {
        header.push("cnn_pred".into());
    }
    if table.meta.cnn_conf.is_some() {
        header.push("cnn_conf".into());
    }
    header.extend(table.kernel_ids.iter().map(|k| format!("k_{k}")));
    writer.write_record(&header).map_err(|e| csv_error(path, e))?;

    for row in 0..table.n_rows() {
        let mut record = vec![
            table.meta.image_ids[row].clone(),
            table.meta.true_class[row].clone(),
        ];
        if let Some(pred) = &table.meta.cnn_pred {
            record.push(pred[row].clone());
        }
        if let Some(conf) = &table.meta.cnn_conf {
            record.push(format!("{}", conf[row]));
        }
        record.extend(table.row(row).iter().map(Cell::format_cell));
        writer.write_record(&record).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
