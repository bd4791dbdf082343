//! Project files, content-addressed images and export bundles.
//!
//! Layout under a storage root:
//!
//! ```text
//! root/
//!   projects/<id>.json     ProjectFile
//!   images/<sha256>.png    image bytes, named by their hash
//! ```

pub mod export;

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use storyboard_core::{
    validate_project, FrameStatus, ImageRef, PipelineEvent, ProjectId, StoryboardProject, Violation,
};
use thiserror::Error;

use crate::pipeline::ProjectState;

pub use export::{build_manifest, export, parse_formats, ExportBundle, ExportFormat, Manifest};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("project fails validation: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unsupported schema version {found} (supported: {SCHEMA_VERSION})")]
    UnsupportedSchema { found: u64 },
    #[error("corrupt project file: {0}")]
    Corrupt(String),
    #[error("project {0} not found")]
    NotFound(String),
    #[error("image {0} not found")]
    ImageMissing(String),
    #[error("no frame has been rendered yet")]
    NothingRendered,
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Lowercase hex SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Append-only, content-addressed image storage. Storing the same bytes
/// twice yields the same ref and one copy.
pub trait ImageStore: Send + Sync {
    fn put(&self, bytes: &[u8]) -> Result<ImageRef, StoreError>;
    fn get(&self, r: &ImageRef) -> Result<Vec<u8>, StoreError>;
    fn contains(&self, r: &ImageRef) -> bool;
}

#[derive(Default)]
pub struct MemImageStore {
    images: RwLock<HashMap<String, Vec<u8>>>,
}

impl MemImageStore {
    pub fn new() -> Self {
        MemImageStore::default()
    }

    pub fn len(&self) -> usize {
        self.images.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ImageStore for MemImageStore {
    fn put(&self, bytes: &[u8]) -> Result<ImageRef, StoreError> {
        let h = content_hash(bytes);
        self.images
            .write()
            .unwrap()
            .entry(h.clone())
            .or_insert_with(|| bytes.to_vec());
        Ok(ImageRef(h))
    }

    fn get(&self, r: &ImageRef) -> Result<Vec<u8>, StoreError> {
        self.images
            .read()
            .unwrap()
            .get(r.as_str())
            .cloned()
            .ok_or_else(|| StoreError::ImageMissing(r.0.clone()))
    }

    fn contains(&self, r: &ImageRef) -> bool {
        self.images.read().unwrap().contains_key(r.as_str())
    }
}

pub struct FsImageStore {
    dir: PathBuf,
}

impl FsImageStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FsImageStore { dir: dir.into() }
    }

    fn path(&self, r: &ImageRef) -> Option<PathBuf> {
        // refs come from files and requests; only accept plain hex names
        let ok = r.0.len() == 64 && r.0.bytes().all(|b| b.is_ascii_hexdigit());
        ok.then(|| self.dir.join(format!("{}.png", r.0)))
    }
}

impl ImageStore for FsImageStore {
    fn put(&self, bytes: &[u8]) -> Result<ImageRef, StoreError> {
        let r = ImageRef(content_hash(bytes));
        let path = self.path(&r).expect("hash is valid hex");
        if path.exists() {
            return Ok(r);
        }
        write_atomic(&path, bytes)?;
        Ok(r)
    }

    fn get(&self, r: &ImageRef) -> Result<Vec<u8>, StoreError> {
        let path = self
            .path(r)
            .ok_or_else(|| StoreError::ImageMissing(r.0.clone()))?;
        match fs::read(&path) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(StoreError::ImageMissing(r.0.clone()))
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn contains(&self, r: &ImageRef) -> bool {
        self.path(r).is_some_and(|p| p.is_file())
    }
}

/// Writes via a temp file in the same directory, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectFile {
    pub schema_version: u32,
    pub project: StoryboardProject,
    pub event_log: Vec<PipelineEvent>,
}

/// A loaded project and anything that had to be repaired on the way in.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub state: ProjectState,
    pub warnings: Vec<String>,
}

/// Decodes a project file, checking the schema version before the body.
pub fn decode_project_file(bytes: &[u8]) -> Result<ProjectFile, StoreError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| StoreError::Corrupt(e.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| StoreError::Corrupt("missing schema_version".into()))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(StoreError::UnsupportedSchema { found: version });
    }
    serde_json::from_value(value).map_err(|e| StoreError::Corrupt(e.to_string()))
}

pub struct ProjectStore {
    root: PathBuf,
    images: FsImageStore,
}

impl ProjectStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        ProjectStore {
            images: FsImageStore::new(root.join("images")),
            root,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn images(&self) -> &FsImageStore {
        &self.images
    }

    pub fn project_path(&self, id: &ProjectId) -> Result<PathBuf, StoreError> {
        let safe = !id.0.is_empty()
            && id
                .0
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !safe {
            return Err(StoreError::NotFound(id.0.clone()));
        }
        Ok(self.root.join("projects").join(format!("{}.json", id.0)))
    }

    /// Validates and writes the project file atomically under an advisory
    /// lock. Returns the file path.
    pub fn save(&self, state: &ProjectState) -> Result<PathBuf, StoreError> {
        let violations = validate_project(&state.project);
        if !violations.is_empty() {
            return Err(StoreError::Invalid(violations));
        }
        let path = self.project_path(&state.project.id)?;
        let file = ProjectFile {
            schema_version: SCHEMA_VERSION,
            project: state.project.clone(),
            event_log: state.events.clone(),
        };
        let bytes =
            serde_json::to_vec_pretty(&file).map_err(|e| StoreError::Corrupt(e.to_string()))?;
        let dir = path.parent().expect("project path has a parent");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let lock_path = path.with_extension("lock");
        let lock = File::create(&lock_path).map_err(io_err(&lock_path))?;
        lock.lock().map_err(io_err(&lock_path))?;
        let result = write_atomic(&path, &bytes);
        let _ = lock.unlock();
        result.map(|()| path)
    }

    pub fn load(&self, id: &ProjectId) -> Result<Loaded, StoreError> {
        let path = self.project_path(id)?;
        if !path.exists() {
            return Err(StoreError::NotFound(id.0.clone()));
        }
        self.load_file(&path)
    }

    pub fn load_file(&self, path: &Path) -> Result<Loaded, StoreError> {
        let lock_path = path.with_extension("lock");
        let lock = File::open(&lock_path).ok();
        if let Some(l) = &lock {
            let _ = l.lock_shared();
        }
        let bytes = fs::read(path).map_err(io_err(path));
        if let Some(l) = &lock {
            let _ = l.unlock();
        }
        let file = decode_project_file(&bytes?)?;
        let mut state = ProjectState {
            project: file.project,
            events: file.event_log,
        };
        let warnings = self.repair_dangling(&mut state);
        Ok(Loaded { state, warnings })
    }

    /// Loads a project file by path, taking the storage root to be the
    /// directory above `projects/`.
    pub fn load_path(path: &Path) -> Result<Loaded, StoreError> {
        let root = path
            .parent()
            .and_then(Path::parent)
            .unwrap_or(Path::new("."));
        ProjectStore::new(root).load_file(path)
    }

    /// Frames whose image is missing from the store become stale with no
    /// image. The event log is left as written.
    fn repair_dangling(&self, state: &mut ProjectState) -> Vec<String> {
        let mut warnings = Vec::new();
        for f in &mut state.project.frames {
            let Some(r) = f.image_ref.clone() else {
                continue;
            };
            if self.images.contains(&r) {
                continue;
            }
            warnings.push(format!(
                "frame {}: image {} is missing from the store; marked stale",
                f.index + 1,
                r
            ));
            f.image_ref = None;
            f.status = FrameStatus::Stale;
            f.error = Some(format!("image {r} missing from store"));
        }
        warnings
    }

    /// Ids of all saved projects, sorted.
    pub fn list(&self) -> Result<Vec<ProjectId>, StoreError> {
        let dir = self.root.join("projects");
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        let mut ids: Vec<ProjectId> = entries
            .filter_map(Result::ok)
            .filter_map(|e| {
                let p = e.path();
                if p.extension()? != "json" {
                    return None;
                }
                Some(ProjectId(p.file_stem()?.to_str()?.to_string()))
            })
            .collect();
        ids.sort();
        Ok(ids)
    }
}
