//! Parameter (de)serialization: a JSON object mapping parameter names to
//! shape plus flat data. Values round-trip exactly (serde_json emits the
//! shortest decimal that parses back to the same f64).

use super::store::ParamStore;
use super::DiffError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamRecord {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

pub fn store_to_json(store: &ParamStore) -> BTreeMap<String, ParamRecord> {
    store
        .entries
        .iter()
        .map(|e| {
            (
                e.name.clone(),
                ParamRecord {
                    shape: [e.rows, e.cols],
                    data: e.data.clone(),
                },
            )
        })
        .collect()
}

/// Overwrite the values of an already-shaped store from a checkpoint map.
pub fn read_into_store(
    map: &BTreeMap<String, ParamRecord>,
    store: &mut ParamStore,
) -> Result<(), DiffError> {
    for id in store.ids().collect::<Vec<_>>() {
        let name = store.name(id).to_string();
        let rec = map
            .get(&name)
            .ok_or_else(|| DiffError::MissingParam(name.clone()))?;
        let expected = store.shape(id);
        if rec.shape != [expected.0, expected.1] || rec.data.len() != expected.0 * expected.1 {
            return Err(DiffError::ShapeMismatch {
                name,
                expected,
                got: (rec.shape[0], rec.shape[1]),
            });
        }
        store.value_mut(id).copy_from_slice(&rec.data);
    }
    Ok(())
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<(), DiffError> {
    let map = store_to_json(store);
    let file = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(file), &map)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, store: &mut ParamStore) -> Result<(), DiffError> {
    let file = std::fs::File::open(path)?;
    let map: BTreeMap<String, ParamRecord> = serde_json::from_reader(std::io::BufReader::new(file))?;
    read_into_store(&map, store)
}
