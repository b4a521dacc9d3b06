//! Typed, columnar, immutable tabular datasets.
//!
//! Each row is one individual's record. Categorical values are trimmed and
//! dictionary-encoded per column; numeric values are checked against the
//! declared bounds at load time. Missing values are rejected.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::schema::{ColumnKind, Schema};

static NEXT_DATASET_ID: AtomicU64 = AtomicU64::new(1);

/// Process-local identity of a loaded dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DatasetId(u64);

impl DatasetId {
    fn fresh() -> Self {
        DatasetId(NEXT_DATASET_ID.fetch_add(1, Ordering::Relaxed))
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

/// Owned cell value.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Integer(i64),
    Real(f64),
    Categorical(String),
}

impl Value {
    pub fn cat(s: impl Into<String>) -> Self {
        Value::Categorical(s.into())
    }

    pub fn as_cell(&self) -> Cell<'_> {
        match self {
            Value::Integer(v) => Cell::Integer(*v),
            Value::Real(v) => Cell::Real(*v),
            Value::Categorical(s) => Cell::Categorical(s),
        }
    }
}

/// Borrowed cell value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell<'a> {
    Integer(i64),
    Real(f64),
    Categorical(&'a str),
}

impl<'a> Cell<'a> {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Integer(v) => Some(v as f64),
            Cell::Real(v) => Some(v),
            Cell::Categorical(_) => None,
        }
    }

    pub fn to_value(&self) -> Value {
        match *self {
            Cell::Integer(v) => Value::Integer(v),
            Cell::Real(v) => Value::Real(v),
            Cell::Categorical(s) => Value::Categorical(s.to_string()),
        }
    }

    /// Appends a self-delimiting byte encoding of the cell to `buf`.
    pub(crate) fn write_key(&self, buf: &mut Vec<u8>) {
        match *self {
            Cell::Integer(v) => {
                buf.push(b'i');
                buf.extend_from_slice(&v.to_le_bytes());
            }
            Cell::Real(v) => {
                buf.push(b'r');
                // +0.0 and -0.0 compare equal, so they share a key.
                let v = if v == 0.0 { 0.0 } else { v };
                buf.extend_from_slice(&v.to_bits().to_le_bytes());
            }
            Cell::Categorical(s) => {
                buf.push(b'c');
                buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
                buf.extend_from_slice(s.as_bytes());
            }
        }
    }

    fn render(&self) -> String {
        match *self {
            Cell::Integer(v) => v.to_string(),
            Cell::Real(v) => v.to_string(),
            Cell::Categorical(s) => s.to_string(),
        }
    }
}

impl std::fmt::Display for Cell<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.render())
    }
}

/// Positional access to the cells of one record.
pub trait Cells {
    fn cell(&self, pos: usize) -> Cell<'_>;
}

impl Cells for [Value] {
    fn cell(&self, pos: usize) -> Cell<'_> {
        self[pos].as_cell()
    }
}

impl Cells for Vec<Value> {
    fn cell(&self, pos: usize) -> Cell<'_> {
        self[pos].as_cell()
    }
}

#[derive(Clone, Debug)]
enum Column {
    Integer(Vec<i64>),
    Real(Vec<f64>),
    Categorical {
        dictionary: Vec<String>,
        codes: Vec<u32>,
    },
}

impl Column {
    fn empty(kind: ColumnKind) -> Self {
        match kind {
            ColumnKind::Integer => Column::Integer(Vec::new()),
            ColumnKind::Real => Column::Real(Vec::new()),
            ColumnKind::Categorical => Column::Categorical {
                dictionary: Vec::new(),
                codes: Vec::new(),
            },
        }
    }

    fn cell(&self, row: usize) -> Cell<'_> {
        match self {
            Column::Integer(v) => Cell::Integer(v[row]),
            Column::Real(v) => Cell::Real(v[row]),
            Column::Categorical { dictionary, codes } => {
                Cell::Categorical(&dictionary[codes[row] as usize])
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    id: DatasetId,
    schema: Schema,
    columns: Vec<Column>,
    n: usize,
}

/// One row of a [`Dataset`], usable wherever [`Cells`] is expected.
#[derive(Clone, Copy)]
pub struct RowRef<'a> {
    dataset: &'a Dataset,
    row: usize,
}

impl Cells for RowRef<'_> {
    fn cell(&self, pos: usize) -> Cell<'_> {
        self.dataset.columns[pos].cell(self.row)
    }
}

impl Dataset {
    pub fn id(&self) -> DatasetId {
        self.id
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell<'_> {
        self.columns[col].cell(row)
    }

    pub fn row(&self, row: usize) -> RowRef<'_> {
        assert!(row < self.n, "row {row} out of range for n = {}", self.n);
        RowRef { dataset: self, row }
    }

    pub fn row_values(&self, row: usize) -> Vec<Value> {
        (0..self.columns.len())
            .map(|c| self.cell(row, c).to_value())
            .collect()
    }

    pub fn from_rows(schema: Schema, rows: impl IntoIterator<Item = Vec<Value>>) -> Result<Self> {
        let mut b = DatasetBuilder::new(schema);
        for (i, row) in rows.into_iter().enumerate() {
            b.push_values(i + 1, row)?;
        }
        b.finish()
    }

    /// The neighboring dataset `x_{-i}`: this dataset with row `i` removed.
    ///
    /// Fails with [`Error::EmptyDataset`] when removing the only row.
    pub fn without_row(&self, i: usize) -> Result<Self> {
        assert!(i < self.n, "row {i} out of range for n = {}", self.n);
        if self.n == 1 {
            return Err(Error::EmptyDataset);
        }
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                Column::Integer(v) => Column::Integer(drop_index(v, i)),
                Column::Real(v) => Column::Real(drop_index(v, i)),
                Column::Categorical { dictionary, codes } => Column::Categorical {
                    dictionary: dictionary.clone(),
                    codes: drop_index(codes, i),
                },
            })
            .collect();
        Ok(Self {
            id: DatasetId::fresh(),
            schema: self.schema.clone(),
            columns,
            n: self.n - 1,
        })
    }

    /// Writes the dataset as RFC-4180 CSV with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.schema.columns().iter().map(|c| c.name.as_str()))?;
        let mut record = Vec::with_capacity(self.columns.len());
        for row in 0..self.n {
            record.clear();
            record.extend((0..self.columns.len()).map(|c| self.cell(row, c).render()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv writer emits utf-8"))
    }
}

fn drop_index<T: Copy>(v: &[T], i: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(v.len() - 1);
    out.extend_from_slice(&v[..i]);
    out.extend_from_slice(&v[i + 1..]);
    out
}

/// Row-at-a-time dataset construction with validation.
pub struct DatasetBuilder {
    schema: Schema,
    columns: Vec<Column>,
    dictionaries: Vec<HashMap<String, u32>>,
    n: usize,
}

impl DatasetBuilder {
    pub fn new(schema: Schema) -> Self {
        let columns = schema.columns().iter().map(|c| Column::empty(c.kind)).collect();
        let dictionaries = vec![HashMap::new(); schema.len()];
        Self {
            schema,
            columns,
            dictionaries,
            n: 0,
        }
    }

    pub fn with_capacity(schema: Schema, rows: usize) -> Self {
        let mut b = Self::new(schema);
        for c in &mut b.columns {
            match c {
                Column::Integer(v) => v.reserve(rows),
                Column::Real(v) => v.reserve(rows),
                Column::Categorical { codes, .. } => codes.reserve(rows),
            }
        }
        b
    }

    fn cell_error(&self, row: usize, col: usize, message: impl Into<String>) -> Error {
        Error::Cell {
            row,
            column: self.schema.columns()[col].name.clone(),
            message: message.into(),
        }
    }

    fn check_bounds(&self, row: usize, col: usize, v: f64) -> Result<()> {
        if let Some(b) = self.schema.columns()[col].bounds {
            if !b.contains(v) {
                return Err(self.cell_error(
                    row,
                    col,
                    format!("value {v} outside bounds [{}, {}]", b.lo(), b.hi()),
                ));
            }
        }
        Ok(())
    }

    fn push_category(&mut self, col: usize, s: &str) {
        let code = match self.dictionaries[col].get(s) {
            Some(&c) => c,
            None => {
                let Column::Categorical { dictionary, .. } = &mut self.columns[col] else {
                    unreachable!("dictionary exists only for categorical columns")
                };
                let c = dictionary.len() as u32;
                dictionary.push(s.to_string());
                self.dictionaries[col].insert(s.to_string(), c);
                c
            }
        };
        if let Column::Categorical { codes, .. } = &mut self.columns[col] {
            codes.push(code);
        }
    }

    /// Pushes one row of typed values. `row_no` is used only in error messages.
    pub fn push_values(&mut self, row_no: usize, row: Vec<Value>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Cell {
                row: row_no,
                column: String::new(),
                message: format!("expected {} values, got {}", self.columns.len(), row.len()),
            });
        }
        // Validate the whole row before mutating any column.
        for (col, v) in row.iter().enumerate() {
            let kind = self.schema.columns()[col].kind;
            match (kind, v) {
                (ColumnKind::Integer, Value::Integer(x)) => self.check_bounds(row_no, col, *x as f64)?,
                (ColumnKind::Real, Value::Real(x)) => {
                    if !x.is_finite() {
                        return Err(self.cell_error(row_no, col, "non-finite real"));
                    }
                    self.check_bounds(row_no, col, *x)?
                }
                (ColumnKind::Categorical, Value::Categorical(s)) => {
                    if s.trim().is_empty() {
                        return Err(self.cell_error(row_no, col, "missing value"));
                    }
                }
                (kind, v) => {
                    return Err(self.cell_error(row_no, col, format!("expected {kind:?}, got {v:?}")))
                }
            }
        }
        for (col, v) in row.into_iter().enumerate() {
            match v {
                Value::Integer(x) => match &mut self.columns[col] {
                    Column::Integer(c) => c.push(x),
                    _ => unreachable!(),
                },
                Value::Real(x) => match &mut self.columns[col] {
                    Column::Real(c) => c.push(x),
                    _ => unreachable!(),
                },
                Value::Categorical(s) => self.push_category(col, s.trim()),
            }
        }
        self.n += 1;
        Ok(())
    }

    /// Pushes one row of raw text fields (already ordered as the schema).
    pub fn push_text(&mut self, row_no: usize, fields: &[&str]) -> Result<()> {
        let mut values = Vec::with_capacity(fields.len());
        for (col, raw) in fields.iter().enumerate() {
            let raw = raw.trim();
            if raw.is_empty() {
                return Err(self.cell_error(row_no, col, "missing value"));
            }
            let v = match self.schema.columns()[col].kind {
                ColumnKind::Integer => Value::Integer(raw.parse::<i64>().map_err(|_| {
                    self.cell_error(row_no, col, format!("cannot parse `{raw}` as integer"))
                })?),
                ColumnKind::Real => {
                    let x = raw.parse::<f64>().map_err(|_| {
                        self.cell_error(row_no, col, format!("cannot parse `{raw}` as real"))
                    })?;
                    Value::Real(x)
                }
                ColumnKind::Categorical => Value::Categorical(raw.to_string()),
            };
            values.push(v);
        }
        self.push_values(row_no, values)
    }

    pub fn finish(self) -> Result<Dataset> {
        if self.n == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Dataset {
            id: DatasetId::fresh(),
            schema: self.schema,
            columns: self.columns,
            n: self.n,
        })
    }
}

/// Loads a CSV byte stream whose header names exactly the schema's columns
/// (in any order). Row order is preserved.
pub fn load_dataset<R: Read>(csv_source: R, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(csv_source);
    let headers = reader.headers()?.clone();

    // position in the CSV record for each schema column
    let mut source_pos = vec![usize::MAX; schema.len()];
    for (pos, name) in headers.iter().enumerate() {
        let idx = schema
            .index_of(name)
            .ok_or_else(|| Error::Header(format!("column `{name}` is not in the schema")))?;
        if source_pos[idx] != usize::MAX {
            return Err(Error::Header(format!("duplicate column `{name}`")));
        }
        source_pos[idx] = pos;
    }
    if let Some(missing) = source_pos.iter().position(|&p| p == usize::MAX) {
        return Err(Error::Header(format!(
            "missing column `{}`",
            schema.columns()[missing].name
        )));
    }

    let mut b = DatasetBuilder::new(schema.clone());
    let mut record = csv::StringRecord::new();
    let mut row_no = 0;
    while reader.read_record(&mut record)? {
        row_no += 1;
        if record.len() != headers.len() {
            return Err(Error::Cell {
                row: row_no,
                column: String::new(),
                message: format!("expected {} fields, got {}", headers.len(), record.len()),
            });
        }
        let fields: Vec<&str> = source_pos.iter().map(|&p| &record[p]).collect();
        b.push_text(row_no, &fields)?;
    }
    b.finish()
}
