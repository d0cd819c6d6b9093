//! One JSON document per experiment, replaced atomically on every write.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;
use uuid::Uuid;

use crate::record::ExperimentRecord;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store io at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt record {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

#[derive(Debug, Clone)]
pub struct FileStore {
    dir: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl FileStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, id: Uuid) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn save(&self, record: &ExperimentRecord) -> Result<(), StoreError> {
        let path = self.path_for(record.id);
        let tmp = self.dir.join(format!(".{}.tmp", record.id));
        let body = serde_json::to_vec_pretty(record).map_err(|e| StoreError::Corrupt {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(&body).map_err(io_err(&tmp))?;
        file.sync_all().map_err(io_err(&tmp))?;
        drop(file);
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    pub fn load(&self, id: Uuid) -> Result<Option<ExperimentRecord>, StoreError> {
        let path = self.path_for(id);
        match fs::read(&path) {
            Ok(bytes) => Self::decode(&path, &bytes).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn decode(path: &Path, bytes: &[u8]) -> Result<ExperimentRecord, StoreError> {
        serde_json::from_slice(bytes).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Every stored record, ordered by creation time then id.
    pub fn load_all(&self) -> Result<Vec<ExperimentRecord>, StoreError> {
        let mut records = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(io_err(&self.dir))? {
            let path = entry.map_err(io_err(&self.dir))?.path();
            let is_record = path.extension().is_some_and(|e| e == "json")
                && !path.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.'));
            if !is_record {
                continue;
            }
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            records.push(Self::decode(&path, &bytes)?);
        }
        records.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.id.cmp(&b.id)));
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::RunSetup;
    use greenrunner_core::{DatasetManifest, ModelCard, Repository, Strategy};

    fn record() -> ExperimentRecord {
        let repo = Repository::new(vec![ModelCard::new("a", 1.0, 1.0, 0.5)]).unwrap();
        ExperimentRecord::new_draft(
            repo,
            DatasetManifest::new("d", 10, 1),
            "x".into(),
            RunSetup::new(Strategy::Greedy, 3),
            None,
        )
    }

    #[test]
    fn save_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        let mut r = record();
        store.save(&r).unwrap();
        r.use_case = "changed".into();
        store.save(&r).unwrap();
        assert_eq!(store.load(r.id).unwrap(), Some(r.clone()));
        assert_eq!(store.load_all().unwrap(), vec![r]);
        assert_eq!(store.load(Uuid::nil()).unwrap(), None);
        // No temporary files are left behind.
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn corrupt_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("bad.json"), "{").unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        assert!(matches!(store.load_all(), Err(StoreError::Corrupt { .. })));
    }
}
