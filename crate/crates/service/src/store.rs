//! On-disk layout under the data directory:
//!
//! ```text
//! datasets/<id>/data.csv
//! datasets/<id>/schema.json
//! datasets/<id>/meta.json
//! journals/<id>.jsonl
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use riskscope_core::{load_dataset, Dataset, Odometer, PrivacyAmount, Schema};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    n: usize,
    delta_g: PrivacyAmount,
}

pub(crate) struct Stored {
    pub id: String,
    pub dataset: Dataset,
    pub odometer: Odometer,
    pub meta_path: PathBuf,
}

pub(crate) fn write_meta(path: &Path, n: usize, delta_g: PrivacyAmount) -> Result<(), ServiceError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(&Meta { n, delta_g }).map_err(riskscope_core::Error::from)?)?;
    fs::rename(tmp, path)?;
    Ok(())
}

fn journal_path(root: &Path, id: &str) -> PathBuf {
    root.join("journals").join(format!("{id}.jsonl"))
}

pub(crate) fn save(
    root: &Path,
    id: &str,
    csv: &str,
    schema: &Schema,
    dataset: &Dataset,
    delta_g: PrivacyAmount,
) -> Result<(Odometer, PathBuf), ServiceError> {
    let dir = root.join("datasets").join(id);
    fs::create_dir_all(&dir)?;
    fs::create_dir_all(root.join("journals"))?;
    fs::write(dir.join("data.csv"), csv)?;
    fs::write(
        dir.join("schema.json"),
        serde_json::to_vec_pretty(schema).map_err(riskscope_core::Error::from)?,
    )?;
    let meta_path = dir.join("meta.json");
    write_meta(&meta_path, dataset.n(), delta_g)?;
    let odometer = Odometer::open(journal_path(root, id), id, delta_g)?;
    Ok((odometer, meta_path))
}

pub(crate) fn load_all(root: &Path) -> Result<Vec<Stored>, ServiceError> {
    let dir = root.join("datasets");
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut ids: Vec<String> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join("meta.json").exists())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    ids.sort();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let base = dir.join(&id);
        let meta: Meta = serde_json::from_slice(&fs::read(base.join("meta.json"))?)
            .map_err(|e| ServiceError::Storage(format!("{id}: {e}")))?;
        let schema = Schema::from_json(&fs::read_to_string(base.join("schema.json"))?)?;
        let dataset = load_dataset(fs::File::open(base.join("data.csv"))?, &schema)?;
        if dataset.n() != meta.n {
            return Err(ServiceError::Storage(format!(
                "{id}: expected {} rows, found {}",
                meta.n,
                dataset.n()
            )));
        }
        let odometer = Odometer::open(journal_path(root, &id), id.as_str(), meta.delta_g)?;
        out.push(Stored {
            id,
            dataset,
            odometer,
            meta_path: base.join("meta.json"),
        });
    }
    Ok(out)
}
