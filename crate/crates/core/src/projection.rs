//! Projection of a dataset onto the attributes a query references, with
//! duplicate projected records grouped by multiplicity.

use std::collections::HashMap;
use std::sync::Arc;

use crate::dataset::{Cells, Dataset, DatasetId, Value};
use crate::error::Result;
use crate::query::{Query, QueryOutput, QueryTarget};
use crate::schema::ColumnKind;

#[derive(Clone, Debug)]
pub struct ProjectedDataset {
    source: DatasetId,
    n: usize,
    attrs: Vec<String>,
    kinds: Vec<ColumnKind>,
    records: Vec<Vec<Value>>,
    keys: Vec<Vec<u8>>,
    row_uid: Arc<[u32]>,
    rows_of: Vec<Vec<usize>>,
}

impl ProjectedDataset {
    pub fn source(&self) -> DatasetId {
        self.source
    }

    /// Row count of the source dataset.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Projected attribute names, in schema order.
    pub fn attrs(&self) -> &[String] {
        &self.attrs
    }

    /// Number of unique projected records.
    pub fn unique_count(&self) -> usize {
        self.records.len()
    }

    /// Unique projected records in order of first appearance.
    pub fn records(&self) -> &[Vec<Value>] {
        &self.records
    }

    /// Byte key of each unique record.
    pub fn keys(&self) -> &[Vec<u8>] {
        &self.keys
    }

    /// Original row indices of unique record `u`, ascending.
    pub fn rows_of(&self, u: usize) -> &[usize] {
        &self.rows_of[u]
    }

    pub fn multiplicity(&self, u: usize) -> usize {
        self.rows_of[u].len()
    }

    /// Unique record index of original row `row`.
    pub fn unique_of(&self, row: usize) -> usize {
        self.row_uid[row] as usize
    }

    pub(crate) fn row_uid(&self) -> &Arc<[u32]> {
        &self.row_uid
    }

    pub(crate) fn layout(&self) -> Vec<(&str, ColumnKind)> {
        self.attrs
            .iter()
            .map(String::as_str)
            .zip(self.kinds.iter().copied())
            .collect()
    }
}

impl QueryTarget for ProjectedDataset {
    fn evaluate(&self, q: &Query) -> Result<QueryOutput> {
        let compiled = q.compile(&self.layout())?;
        let mut acc = compiled.accumulator();
        for &uid in self.row_uid.iter() {
            acc.add(compiled.contribution(&self.records[uid as usize])?);
        }
        acc.finish()
    }
}

/// Projects `d` onto exactly the attributes referenced by `q` and groups
/// duplicate projected records.
pub fn project_query_attributes(d: &Dataset, q: &Query) -> Result<ProjectedDataset> {
    q.validate(d.schema())?;
    let referenced = q.referenced_attrs();
    let positions: Vec<usize> = d
        .schema()
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| referenced.contains(c.name.as_str()))
        .map(|(i, _)| i)
        .collect();
    let attrs = positions
        .iter()
        .map(|&i| d.schema().columns()[i].name.clone())
        .collect();
    let kinds = positions.iter().map(|&i| d.schema().columns()[i].kind).collect();

    let mut index: HashMap<Vec<u8>, u32> = HashMap::new();
    let mut records = Vec::new();
    let mut keys = Vec::new();
    let mut rows_of: Vec<Vec<usize>> = Vec::new();
    let mut row_uid = Vec::with_capacity(d.n());
    let mut buf = Vec::new();
    for r in 0..d.n() {
        let row = d.row(r);
        buf.clear();
        for &p in &positions {
            row.cell(p).write_key(&mut buf);
        }
        let uid = match index.get(buf.as_slice()) {
            Some(&u) => u,
            None => {
                let u = u32::try_from(records.len()).expect("fewer than 2^32 unique records");
                index.insert(buf.clone(), u);
                records.push(positions.iter().map(|&p| row.cell(p).to_value()).collect());
                keys.push(buf.clone());
                rows_of.push(Vec::new());
                u
            }
        };
        rows_of[uid as usize].push(r);
        row_uid.push(uid);
    }
    Ok(ProjectedDataset {
        source: d.id(),
        n: d.n(),
        attrs,
        kinds,
        records,
        keys,
        row_uid: row_uid.into(),
        rows_of,
    })
}
