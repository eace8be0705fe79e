// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{EngineError, Result};
use crate::fdb::{FdbDataset, MANIFEST_FILE};
use crate::schema::{print_schema, Schema};

pub struct DatasetEntry {
    pub name: String,
    /// Directory of an on-disk dataset; `None` for in-memory shards.
    pub path: Option<PathBuf>,
    pub dataset: Arc<FdbDataset>,
    /// Manifest digest, the dataset's version for checkpoint fingerprints.
    pub digest: u64,
}

/// Registered datasets and schemas, by unique name.
#[derive(Default)]
pub struct Catalog {
    datasets: BTreeMap<String, DatasetEntry>,
    schemas: BTreeMap<String, Schema>,
}

impl Catalog {
    pub fn new() -> Self {
        Catalog::default()
    }

    /// Registers every subdirectory of `root` that holds a manifest, under
    /// the directory name.
    pub fn load_root(root: &Path) -> Result<Catalog> {
        let mut c = Catalog::new();
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(MANIFEST_FILE).is_file())
            .collect();
        dirs.sort();
        for d in dirs {
            let name = d.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            c.register_path(&name, &d)?;
        }
        Ok(c)
    }

    /// Opens and registers an on-disk dataset. Registering the same
    /// manifest again under the same name is a no-op.
    pub fn register_path(&mut self, name: &str, path: &Path) -> Result<()> {
        let ds = FdbDataset::open(path)?;
        let digest = ds.manifest().digest();
        if let Some(e) = self.datasets.get(name) {
            return if e.digest == digest { Ok(()) } else { Err(EngineError::DuplicateName(name.to_string())) };
        }
        self.datasets.insert(
            name.to_string(),
            DatasetEntry { name: name.to_string(), path: Some(path.to_path_buf()), dataset: Arc::new(ds), digest },
        );
        Ok(())
    }

    pub fn register_dataset(&mut self, name: &str, ds: Arc<FdbDataset>) -> Result<()> {
        let digest = ds.manifest().digest();
        if let Some(e) = self.datasets.get(name) {
            return if e.digest == digest { Ok(()) } else { Err(EngineError::DuplicateName(name.to_string())) };
        }
        self.datasets.insert(name.to_string(), DatasetEntry { name: name.to_string(), path: None, dataset: ds, digest });
        Ok(())
    }

    /// Replaces a registration, used after re-saving a dataset.
    pub fn replace_path(&mut self, name: &str, path: &Path) -> Result<()> {
        self.datasets.remove(name);
        self.register_path(name, path)
    }

    pub fn register_schema(&mut self, name: &str, s: Schema) -> Result<()> {
        if let Some(old) = self.schemas.get(name) {
            return if print_schema(old) == print_schema(&s) { Ok(()) } else { Err(EngineError::DuplicateName(name.to_string())) };
        }
        self.schemas.insert(name.to_string(), s);
        Ok(())
    }

    pub fn dataset(&self, name: &str) -> Result<&DatasetEntry> {
        self.datasets.get(name).ok_or_else(|| EngineError::UnknownDataset(name.to_string()))
    }

    pub fn schema(&self, name: &str) -> Option<&Schema> {
        self.schemas.get(name)
    }

    /// Registered dataset names in order.
    pub fn list(&self) -> Vec<&DatasetEntry> {
        self.datasets.values().collect()
    }

    pub fn schema_names(&self) -> Vec<&str> {
        self.schemas.keys().map(|s| s.as_str()).collect()
    }
}
