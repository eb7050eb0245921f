//! Object and ref storage backends.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::id::ObjectId;

use super::StoreError;

/// Raw key/value storage beneath a [`Store`](super::Store). Backends do no
/// hashing or verification of their own.
pub trait Backend {
    fn read(&self, id: &ObjectId) -> Result<Option<Vec<u8>>, StoreError>;
    fn contains(&self, id: &ObjectId) -> Result<bool, StoreError>;
    /// Writes an object. Callers only write ids that are not yet present.
    fn write(&mut self, id: &ObjectId, bytes: &[u8]) -> Result<(), StoreError>;
    /// Every stored id in ascending order.
    fn list(&self) -> Result<Vec<ObjectId>, StoreError>;
    fn read_ref(&self, name: &str) -> Result<Option<ObjectId>, StoreError>;
    fn write_ref(&mut self, name: &str, id: &ObjectId) -> Result<(), StoreError>;
    fn list_refs(&self) -> Result<BTreeMap<String, ObjectId>, StoreError>;
}

/// Ref names are restricted to `[A-Za-z0-9._-]+` and may not start with `.`.
pub fn check_ref_name(name: &str) -> Result<(), StoreError> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidRef(name.to_string()))
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemoryBackend {
    objects: BTreeMap<ObjectId, Vec<u8>>,
    refs: BTreeMap<String, ObjectId>,
}

impl MemoryBackend {
    /// Direct access to stored bytes, bypassing content addressing. Meant
    /// for corruption tests.
    pub fn raw_mut(&mut self, id: &ObjectId) -> Option<&mut Vec<u8>> {
        self.objects.get_mut(id)
    }
}

impl Backend for MemoryBackend {
    fn read(&self, id: &ObjectId) -> Result<Option<Vec<u8>>, StoreError> {
        Ok(self.objects.get(id).cloned())
    }

    fn contains(&self, id: &ObjectId) -> Result<bool, StoreError> {
        Ok(self.objects.contains_key(id))
    }

    fn write(&mut self, id: &ObjectId, bytes: &[u8]) -> Result<(), StoreError> {
        self.objects.insert(*id, bytes.to_vec());
        Ok(())
    }

    fn list(&self) -> Result<Vec<ObjectId>, StoreError> {
        Ok(self.objects.keys().copied().collect())
    }

    fn read_ref(&self, name: &str) -> Result<Option<ObjectId>, StoreError> {
        check_ref_name(name)?;
        Ok(self.refs.get(name).copied())
    }

    fn write_ref(&mut self, name: &str, id: &ObjectId) -> Result<(), StoreError> {
        check_ref_name(name)?;
        self.refs.insert(name.to_string(), *id);
        Ok(())
    }

    fn list_refs(&self) -> Result<BTreeMap<String, ObjectId>, StoreError> {
        Ok(self.refs.clone())
    }
}

/// On-disk layout:
///
/// ```text
/// <root>/objects/<first 2 hex>/<remaining 62 hex>   canonical object bytes
/// <root>/refs/<name>                                64 hex + "\n"
/// ```
///
/// Every file is written to a temporary file in its target directory and
/// renamed into place.
#[derive(Debug, Clone)]
pub struct DirBackend {
    root: PathBuf,
}

fn io_err(path: &Path, source: io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        message: source.to_string(),
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".tmp-")
        .tempfile_in(dir)
        .map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

impl DirBackend {
    /// Creates the directory layout if needed.
    pub fn init(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["objects", "refs"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).map_err(|e| io_err(&p, e))?;
        }
        Ok(DirBackend { root })
    }

    /// Opens an existing store directory.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        if !root.join("objects").is_dir() || !root.join("refs").is_dir() {
            return Err(StoreError::NotAStore(root.display().to_string()));
        }
        Ok(DirBackend { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn object_path(&self, id: &ObjectId) -> PathBuf {
        let hex = id.to_hex();
        self.root.join("objects").join(&hex[..2]).join(&hex[2..])
    }

    fn ref_path(&self, name: &str) -> PathBuf {
        self.root.join("refs").join(name)
    }
}

fn read_optional(path: &Path) -> Result<Option<Vec<u8>>, StoreError> {
    match fs::read(path) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path, e)),
    }
}

fn parse_ref(name: &str, bytes: &[u8]) -> Result<ObjectId, StoreError> {
    std::str::from_utf8(bytes)
        .ok()
        .and_then(|s| s.strip_suffix('\n'))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| StoreError::CorruptRef(name.to_string()))
}

impl Backend for DirBackend {
    fn read(&self, id: &ObjectId) -> Result<Option<Vec<u8>>, StoreError> {
        read_optional(&self.object_path(id))
    }

    fn contains(&self, id: &ObjectId) -> Result<bool, StoreError> {
        Ok(self.object_path(id).is_file())
    }

    fn write(&mut self, id: &ObjectId, bytes: &[u8]) -> Result<(), StoreError> {
        write_atomic(&self.object_path(id), bytes)
    }

    fn list(&self) -> Result<Vec<ObjectId>, StoreError> {
        let objects = self.root.join("objects");
        let mut out = Vec::new();
        for fanout in fs::read_dir(&objects).map_err(|e| io_err(&objects, e))? {
            let fanout = fanout.map_err(|e| io_err(&objects, e))?;
            let prefix = fanout.file_name().to_string_lossy().into_owned();
            if prefix.len() != 2 || !fanout.path().is_dir() {
                continue;
            }
            for entry in fs::read_dir(fanout.path()).map_err(|e| io_err(&fanout.path(), e))? {
                let entry = entry.map_err(|e| io_err(&fanout.path(), e))?;
                let name = entry.file_name().to_string_lossy().into_owned();
                if let Ok(id) = format!("{prefix}{name}").parse::<ObjectId>() {
                    out.push(id);
                }
            }
        }
        out.sort();
        Ok(out)
    }

    fn read_ref(&self, name: &str) -> Result<Option<ObjectId>, StoreError> {
        check_ref_name(name)?;
        read_optional(&self.ref_path(name))?
            .map(|b| parse_ref(name, &b))
            .transpose()
    }

    fn write_ref(&mut self, name: &str, id: &ObjectId) -> Result<(), StoreError> {
        check_ref_name(name)?;
        write_atomic(&self.ref_path(name), format!("{id}\n").as_bytes())
    }

    fn list_refs(&self) -> Result<BTreeMap<String, ObjectId>, StoreError> {
        let dir = self.root.join("refs");
        let mut out = BTreeMap::new();
        for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
            let entry = entry.map_err(|e| io_err(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if check_ref_name(&name).is_err() {
                continue;
            }
            let bytes = fs::read(entry.path()).map_err(|e| io_err(&entry.path(), e))?;
            out.insert(name.clone(), parse_ref(&name, &bytes)?);
        }
        Ok(out)
    }
}
