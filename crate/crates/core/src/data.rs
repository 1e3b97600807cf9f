//! CSV ingestion, missing-value handling and label encoding.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    pub index: usize,
}

/// Per-column kind overrides keyed by column name.
pub type KindOverrides = BTreeMap<String, ColumnKind>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    FillMean,
    DropRows,
}

/// Parsed CSV text before any typing. `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub cells: Vec<Vec<Option<String>>>,
    /// Position of the target column in `header`.
    pub target: usize,
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

fn parse_real(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn load_csv(path: impl AsRef<Path>, target_column: &str) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, target_column)
}

pub fn read_csv<R: Read>(reader: R, target_column: &str) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(&e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut seen = BTreeSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::Parse {
                line: 1,
                message: format!("duplicate column name {h:?}"),
            });
        }
    }
    let target = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::TargetNotFound(target_column.to_owned()))?;

    let mut cells = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        if record.len() != header.len() {
            let line = record.position().map_or(0, |p| p.line());
            return Err(Error::Parse {
                line,
                message: format!(
                    "row has {} cells, header has {}",
                    record.len(),
                    header.len()
                ),
            });
        }
        cells.push(
            record
                .iter()
                .map(|c| (!is_missing(c)).then(|| c.to_owned()))
                .collect(),
        );
    }
    Ok(RawTable {
        header,
        cells,
        target,
    })
}

fn csv_error(e: &csv::Error) -> Error {
    Error::Parse {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.cells.len()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = Option<&str>> + '_ {
        self.cells.iter().map(move |r| r[j].as_deref())
    }

    /// A column is categorical iff some present cell is not a finite real,
    /// unless overridden by name. The target is always categorical.
    pub fn infer_kinds(&self, overrides: &KindOverrides) -> Vec<ColumnKind> {
        (0..self.header.len())
            .map(|j| {
                if j == self.target {
                    return ColumnKind::Categorical;
                }
                if let Some(&k) = overrides.get(&self.header[j]) {
                    return k;
                }
                if self.column(j).flatten().all(|c| parse_real(c).is_some()) {
                    ColumnKind::Numeric
                } else {
                    ColumnKind::Categorical
                }
            })
            .collect()
    }
}

/// Resolves missing cells. Rows with a missing target are dropped under
/// either policy; there is no sensible value to impute for a label.
pub fn handle_missing(
    table: &RawTable,
    policy: MissingPolicy,
    overrides: &KindOverrides,
) -> Result<RawTable> {
    let target = table.target;
    let labelled: Vec<&Vec<Option<String>>> =
        table.cells.iter().filter(|r| r[target].is_some()).collect();

    let cells = match policy {
        MissingPolicy::DropRows => labelled
            .into_iter()
            .filter(|r| r.iter().all(Option::is_some))
            .cloned()
            .collect(),
        MissingPolicy::FillMean => {
            let kinds = table.infer_kinds(overrides);
            let mut fills: Vec<Option<String>> = vec![None; table.header.len()];
            for (j, kind) in kinds.iter().enumerate() {
                if labelled.iter().all(|r| r[j].is_some()) {
                    continue;
                }
                let present = labelled.iter().filter_map(|r| r[j].as_deref());
                fills[j] = Some(match kind {
                    ColumnKind::Numeric => {
                        let mut sum = 0.0;
                        let mut n = 0usize;
                        for (row, c) in labelled.iter().enumerate() {
                            if let Some(c) = c[j].as_deref() {
                                sum += parse_real(c).ok_or_else(|| Error::Unparsable {
                                    column: table.header[j].clone(),
                                    row,
                                    value: c.to_owned(),
                                })?;
                                n += 1;
                            }
                        }
                        if n == 0 {
                            return Err(Error::AllMissing {
                                column: table.header[j].clone(),
                            });
                        }
                        (sum / n as f64).to_string()
                    }
                    ColumnKind::Categorical => modal(present).ok_or_else(|| Error::AllMissing {
                        column: table.header[j].clone(),
                    })?,
                });
            }
            labelled
                .into_iter()
                .map(|r| {
                    r.iter()
                        .zip(&fills)
                        .map(|(c, f)| c.clone().or_else(|| f.clone()))
                        .collect()
                })
                .collect()
        }
    };
    Ok(RawTable {
        header: table.header.clone(),
        cells,
        target,
    })
}

/// Most frequent value; ties go to the lexicographically smallest.
fn modal<'a>(values: impl Iterator<Item = &'a str>) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    for (v, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((v, c));
        }
    }
    best.map(|(v, _)| v.to_owned())
}

/// Category dictionaries produced by [`encode`]. A code is the position of
/// the category in its sorted list.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EncodingMap {
    pub columns: BTreeMap<String, Vec<String>>,
    pub classes: Vec<String>,
}

impl EncodingMap {
    pub fn encode(&self, column: &str, value: &str) -> Option<usize> {
        self.columns
            .get(column)?
            .binary_search_by(|c| c.as_str().cmp(value))
            .ok()
    }

    pub fn decode(&self, column: &str, code: usize) -> Option<&str> {
        self.columns.get(column)?.get(code).map(String::as_str)
    }

    pub fn class_code(&self, name: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(name)).ok()
    }
}

/// Numeric feature matrix with integer class codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dataset<T> {
    pub x: Matrix<T>,
    pub y: Vec<usize>,
    pub schema: Vec<ColumnSchema>,
    pub classes: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        x: Matrix<T>,
        y: Vec<usize>,
        schema: Vec<ColumnSchema>,
        classes: Vec<String>,
    ) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        if x.cols() != schema.len() {
            return Err(Error::invalid(format!(
                "{} feature columns but {} schema entries",
                x.cols(),
                schema.len()
            )));
        }
        if let Some(bad) = y.iter().find(|&&c| c >= classes.len()) {
            return Err(Error::invalid(format!(
                "class code {bad} outside 0..{}",
                classes.len()
            )));
        }
        let mut names = BTreeSet::new();
        for (i, c) in schema.iter().enumerate() {
            if c.index != i || !names.insert(c.name.as_str()) {
                return Err(Error::invalid(format!(
                    "schema entry {i} ({:?}) is misindexed or duplicated",
                    c.name
                )));
            }
        }
        if x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature matrix contains non-finite values"));
        }
        Ok(Dataset {
            x,
            y,
            schema,
            classes,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.schema.iter().map(|c| c.name.clone()).collect()
    }

    pub fn kinds(&self) -> Vec<ColumnKind> {
        self.schema.iter().map(|c| c.kind).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.y, self.n_classes())
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            schema: self.schema.clone(),
            classes: self.classes.clone(),
        }
    }

    /// Writes the dataset as CSV with the target as the last column.
    /// Values use shortest round-trip formatting, so a reload is exact.
    pub fn write_csv(&self, path: impl AsRef<Path>, target_name: &str) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::Write {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.write_csv_to(file, target_name).map_err(|e| Error::Write {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn write_csv_to<W: std::io::Write>(&self, out: W, target_name: &str) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.feature_names();
        header.push(target_name.to_owned());
        w.write_record(&header)?;
        for (row, &label) in self.x.row_iter().zip(&self.y) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(self.classes[label].clone());
            w.write_record(&rec)?;
        }
        w.flush()
    }
}

pub fn class_counts(y: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for &c in y {
        counts[c] += 1;
    }
    counts
}

fn sorted_unique<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    values
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_owned)
        .collect()
}

/// Label-encodes categorical columns and the target; parses numeric columns.
pub fn encode<T: Scalar>(
    table: &RawTable,
    overrides: &KindOverrides,
) -> Result<(Dataset<T>, EncodingMap)> {
    for (row, r) in table.cells.iter().enumerate() {
        if let Some(j) = r.iter().position(Option::is_none) {
            return Err(Error::invalid(format!(
                "missing value in column {:?}, row {row}; resolve missing values first",
                table.header[j]
            )));
        }
    }
    let cell = |i: usize, j: usize| table.cells[i][j].as_deref().unwrap_or_default();
    let kinds = table.infer_kinds(overrides);
    let n = table.n_rows();
    let feature_cols: Vec<usize> = (0..table.header.len()).filter(|&j| j != table.target).collect();

    let mut map = EncodingMap {
        classes: sorted_unique((0..n).map(|i| cell(i, table.target))),
        ..Default::default()
    };
    let mut schema = Vec::with_capacity(feature_cols.len());
    let mut columns: Vec<Vec<T>> = Vec::with_capacity(feature_cols.len());
    for (index, &j) in feature_cols.iter().enumerate() {
        let name = table.header[j].clone();
        let values = match kinds[j] {
            ColumnKind::Categorical => {
                let cats = sorted_unique((0..n).map(|i| cell(i, j)));
                let codes = (0..n)
                    .map(|i| {
                        let code = cats.binary_search_by(|c| c.as_str().cmp(cell(i, j)));
                        T::from_count(code.expect("category present"))
                    })
                    .collect();
                map.columns.insert(name.clone(), cats);
                codes
            }
            ColumnKind::Numeric => (0..n)
                .map(|i| {
                    parse_real(cell(i, j))
                        .map(T::lit)
                        .ok_or_else(|| Error::Unparsable {
                            column: name.clone(),
                            row: i,
                            value: cell(i, j).to_owned(),
                        })
                })
                .collect::<Result<Vec<T>>>()?,
        };
        schema.push(ColumnSchema {
            name,
            kind: kinds[j],
            index,
        });
        columns.push(values);
    }

    let d = schema.len();
    let mut x = Matrix::zeros(n, d);
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    let y = (0..n)
        .map(|i| map.class_code(cell(i, table.target)).expect("class present"))
        .collect();
    let data = Dataset::new(x, y, schema, map.classes.clone())?;
    Ok((data, map))
}

/// `load_csv` → `handle_missing` → `encode`.
pub fn load_dataset<T: Scalar>(
    path: impl AsRef<Path>,
    target_column: &str,
    policy: MissingPolicy,
    overrides: &KindOverrides,
) -> Result<(Dataset<T>, EncodingMap)> {
    let raw = load_csv(path, target_column)?;
    let clean = handle_missing(&raw, policy, overrides)?;
    encode(&clean, overrides)
}
