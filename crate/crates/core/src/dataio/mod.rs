//! Tabular ingestion (CSV with header row) and the binary model container.

mod container;

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub use container::{
    load_embedding, load_model, read_embedding, read_model, save_embedding, save_model,
    write_embedding, write_model, CONTAINER_MAGIC, CONTAINER_VERSION,
};

/// Level code for categorical cells that are missing or were never seen
/// when the level list was built.
pub const UNKNOWN_LEVEL: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Tokens read as missing in addition to the empty string.
    #[serde(default)]
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    columns: Vec<ColumnSpec>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let targets = columns.iter().filter(|c| c.kind == ColumnKind::Target).count();
        if targets != 1 {
            return Err(Error::Schema(format!(
                "expected exactly one target column, found {targets}"
            )));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
        }
        Ok(FeatureSchema { columns })
    }

    /// Schema for a header: `target` is the target, names in `categorical`
    /// are categorical, every other column is numeric. `missing` applies to
    /// all columns.
    pub fn from_header(
        header: &[String],
        target: &str,
        categorical: &[String],
        missing: &[String],
    ) -> Result<Self> {
        for name in categorical.iter().map(String::as_str).chain([target]) {
            if !header.iter().any(|h| h == name) {
                return Err(Error::Schema(format!("column `{name}` not found in header")));
            }
        }
        let columns = header
            .iter()
            .map(|name| {
                let kind = if name == target {
                    ColumnKind::Target
                } else if categorical.contains(name) {
                    ColumnKind::Categorical
                } else {
                    ColumnKind::Numeric
                };
                ColumnSpec {
                    name: name.clone(),
                    kind,
                    missing: missing.to_vec(),
                }
            })
            .collect();
        FeatureSchema::new(columns)
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn target(&self) -> &ColumnSpec {
        self.columns
            .iter()
            .find(|c| c.kind == ColumnKind::Target)
            .expect("schema validated with one target")
    }

    fn names_of(&self, kind: ColumnKind) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.kind == kind)
            .map(|c| c.name.clone())
            .collect()
    }
}

/// One categorical column: level strings and per-row codes into them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalColumn {
    pub name: String,
    pub levels: Vec<String>,
    pub codes: Vec<u32>,
    pub missing: Vec<bool>,
}

impl CategoricalColumn {
    pub fn level(&self, row: usize) -> Option<&str> {
        let code = self.codes[row];
        if self.missing[row] || code == UNKNOWN_LEVEL {
            None
        } else {
            self.levels.get(code as usize).map(String::as_str)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    pub schema: FeatureSchema,
    pub numeric_names: Vec<String>,
    /// n × (#numeric columns); missing cells hold 0.0 until imputed.
    pub numeric: Matrix,
    /// Row-major mask congruent with `numeric`.
    pub numeric_missing: Vec<bool>,
    pub categorical: Vec<CategoricalColumn>,
    pub target: Vec<f64>,
}

impl TabularDataset {
    pub fn n(&self) -> usize {
        self.target.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.numeric.rows() != n || self.numeric_missing.len() != self.numeric.as_slice().len() {
            return Err(Error::Schema("numeric block does not have n rows".into()));
        }
        if self.numeric.cols() != self.numeric_names.len() {
            return Err(Error::Schema("numeric names do not match block width".into()));
        }
        for c in &self.categorical {
            if c.codes.len() != n || c.missing.len() != n {
                return Err(Error::Schema(format!("categorical column `{}` does not have n rows", c.name)));
            }
            if let Some(bad) = c
                .codes
                .iter()
                .zip(&c.missing)
                .find(|(&code, &m)| !m && code != UNKNOWN_LEVEL && code as usize >= c.levels.len())
            {
                return Err(Error::Schema(format!(
                    "column `{}` has code {} beyond {} levels",
                    c.name,
                    bad.0,
                    c.levels.len()
                )));
            }
        }
        Ok(())
    }

    pub fn is_missing(&self, row: usize, numeric_col: usize) -> bool {
        self.numeric_missing[row * self.numeric.cols() + numeric_col]
    }

    pub fn missing_count(&self) -> usize {
        self.numeric_missing.iter().filter(|&&m| m).count()
            + self
                .categorical
                .iter()
                .map(|c| c.missing.iter().filter(|&&m| m).count())
                .sum::<usize>()
    }

    /// Subset of rows, preserving level lists.
    pub fn select_rows(&self, rows: &[usize]) -> TabularDataset {
        let p = self.numeric.cols();
        TabularDataset {
            schema: self.schema.clone(),
            numeric_names: self.numeric_names.clone(),
            numeric: self.numeric.select_rows(rows),
            numeric_missing: rows
                .iter()
                .flat_map(|&r| self.numeric_missing[r * p..(r + 1) * p].iter().copied())
                .collect(),
            categorical: self
                .categorical
                .iter()
                .map(|c| CategoricalColumn {
                    name: c.name.clone(),
                    levels: c.levels.clone(),
                    codes: rows.iter().map(|&r| c.codes[r]).collect(),
                    missing: rows.iter().map(|&r| c.missing[r]).collect(),
                })
                .collect(),
            target: rows.iter().map(|&r| self.target[r]).collect(),
        }
    }
}

fn is_missing_token(cell: &str, spec: &ColumnSpec) -> bool {
    let cell = cell.trim();
    cell.is_empty() || spec.missing.iter().any(|m| m == cell)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<TabularDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

/// Reads a header-first CSV. Categorical levels get codes in order of first
/// appearance.
pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema) -> Result<TabularDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let expected = schema.names();
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(h, e)| h != e) {
        return Err(Error::Schema(format!(
            "header [{}] does not match schema [{}]",
            header.join(","),
            expected.join(",")
        )));
    }

    let numeric_names = schema.names_of(ColumnKind::Numeric);
    let mut numeric = Vec::new();
    let mut numeric_missing = Vec::new();
    let mut categorical: Vec<CategoricalColumn> = schema
        .names_of(ColumnKind::Categorical)
        .into_iter()
        .map(|name| CategoricalColumn {
            name,
            levels: Vec::new(),
            codes: Vec::new(),
            missing: Vec::new(),
        })
        .collect();
    let mut level_maps: Vec<HashMap<String, u32>> = vec![HashMap::new(); categorical.len()];
    let mut target = Vec::new();

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let mut cat_idx = 0;
        for (spec, cell) in schema.columns().iter().zip(record.iter()) {
            let missing = is_missing_token(cell, spec);
            match spec.kind {
                ColumnKind::Numeric => {
                    if missing {
                        numeric.push(0.0);
                    } else {
                        numeric.push(parse_number(cell, row, &spec.name)?);
                    }
                    numeric_missing.push(missing);
                }
                ColumnKind::Target => {
                    if missing {
                        return Err(Error::Parse {
                            row,
                            column: spec.name.clone(),
                            message: "target value is missing".into(),
                        });
                    }
                    target.push(parse_number(cell, row, &spec.name)?);
                }
                ColumnKind::Categorical => {
                    let col = &mut categorical[cat_idx];
                    if missing {
                        col.codes.push(UNKNOWN_LEVEL);
                    } else {
                        let level = cell.trim();
                        let map = &mut level_maps[cat_idx];
                        let code = match map.get(level) {
                            Some(&c) => c,
                            None => {
                                let c = col.levels.len() as u32;
                                col.levels.push(level.to_string());
                                map.insert(level.to_string(), c);
                                c
                            }
                        };
                        col.codes.push(code);
                    }
                    col.missing.push(missing);
                    cat_idx += 1;
                }
            }
        }
    }

    let n = target.len();
    let ds = TabularDataset {
        schema: schema.clone(),
        numeric: Matrix::from_vec(n, numeric_names.len(), numeric)?,
        numeric_names,
        numeric_missing,
        categorical,
        target,
    };
    ds.validate()?;
    Ok(ds)
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let parsed: f64 = cell.trim().parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("cannot parse `{cell}` as a number"),
    })?;
    if !parsed.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("non-finite value `{cell}`"),
        });
    }
    Ok(parsed)
}

pub fn save_csv(ds: &TabularDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv(ds, file)
}

/// Writes in schema column order. Numbers use the shortest round-trip
/// representation; missing cells are written empty.
pub fn write_csv<W: Write>(ds: &TabularDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(ds.schema.names())?;
    for row in 0..ds.n() {
        let mut num_idx = 0;
        let mut cat_idx = 0;
        let mut record = Vec::with_capacity(ds.schema.columns().len());
        for spec in ds.schema.columns() {
            match spec.kind {
                ColumnKind::Numeric => {
                    if ds.is_missing(row, num_idx) {
                        record.push(String::new());
                    } else {
                        record.push(ds.numeric[(row, num_idx)].to_string());
                    }
                    num_idx += 1;
                }
                ColumnKind::Categorical => {
                    record.push(ds.categorical[cat_idx].level(row).unwrap_or("").to_string());
                    cat_idx += 1;
                }
                ColumnKind::Target => record.push(ds.target[row].to_string()),
            }
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a plain numeric matrix with the given header.
pub fn write_matrix_csv<W: Write>(header: &[String], m: &Matrix, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(header)?;
    for row in m.iter_rows() {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}
