//! A directory of artifacts keyed by content hash.
//!
//! Files are written to a temporary file in the same directory and renamed
//! into place, so readers never see a partial artifact. Two writers racing
//! on the same id produce the same bytes; the last rename wins.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::io::artifact::{read_run, write_run, ArtifactError, RunArtifact};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("artifact {id}: {source}")]
    Artifact { id: String, source: ArtifactError },
    #[error("invalid run id `{0}`")]
    InvalidId(String),
}

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    dir: PathBuf,
}

fn valid_id(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

impl ArtifactStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| StoreError::Io { path: dir.clone(), source })?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Store a sealed artifact and return its id.
    pub fn put(&self, artifact: &RunArtifact) -> Result<String, StoreError> {
        let id = artifact.content_hash.clone();
        if !valid_id(&id) {
            return Err(StoreError::InvalidId(id));
        }
        let bytes = write_run(artifact).map_err(|source| StoreError::Artifact { id: id.clone(), source })?;
        write_atomic(&self.path_for(&id), &bytes)?;
        Ok(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        valid_id(id) && self.path_for(id).is_file()
    }

    /// `Ok(None)` when no artifact has this id.
    pub fn get(&self, id: &str) -> Result<Option<RunArtifact>, StoreError> {
        if !valid_id(id) {
            return Ok(None);
        }
        let path = self.path_for(id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        read_run(&bytes)
            .map(Some)
            .map_err(|source| StoreError::Artifact { id: id.to_string(), source })
    }

    /// Ids of every stored artifact, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let entries = fs::read_dir(&self.dir).map_err(|source| StoreError::Io {
            path: self.dir.clone(),
            source,
        })?;
        let mut ids: Vec<String> = entries
            .filter_map(Result::ok)
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let id = name.strip_suffix(".json")?;
                valid_id(id).then(|| id.to_string())
            })
            .collect();
        ids.sort();
        Ok(ids)
    }
}

/// Write `bytes` to `path` via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}
