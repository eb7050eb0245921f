//! Content-addressed, structurally shared versioning of workspaces.
//!
//! A commit is stored as a small Merkle DAG:
//!
//! ```text
//! commit -> tree -> model objects -> node objects
//! ```
//!
//! Each node, each model (node references, edges, subjects) and each tree
//! is its own object keyed by the SHA-256 of its canonical bytes. Objects
//! already present are never rewritten, so a commit that changes one node
//! adds only that node, the models containing it, one tree and the commit.

mod backend;
mod merge;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::PathBuf;

use serde::Serialize;

pub use backend::{check_ref_name, write_atomic, Backend, DirBackend, MemoryBackend};
pub use merge::{Conflict, ElementKind, MergeResult};

use crate::encoding::{
    decode_str_set, encode_str_set, ensure_ascending, Canonical, DecodeError, Decoder, Encoder, Tag,
};
use crate::id::ObjectId;
use crate::model::{ModelGraph, Node, NodeId};
use crate::workspace::{Workspace, WorkspaceError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("unknown parent commit {0}")]
    UnknownParent(ObjectId),
    #[error("unknown commit {0}")]
    UnknownCommit(ObjectId),
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("corrupt object {id}: {reason}")]
    CorruptObject { id: ObjectId, reason: String },
    #[error("object {id} is a {found:?}, expected {expected:?}")]
    WrongKind {
        id: ObjectId,
        expected: ObjectKind,
        found: ObjectKind,
    },
    #[error("a commit has at most two parents, got {0}")]
    TooManyParents(usize),
    #[error("invalid ref name {0:?}")]
    InvalidRef(String),
    #[error("corrupt ref {0:?}")]
    CorruptRef(String),
    #[error("unknown revision {0:?}")]
    UnknownRevision(String),
    #[error("{0} is not a store directory")]
    NotAStore(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("rename must cover exactly the clone chain (missing: {missing:?}, unexpected: {unexpected:?})")]
    IncompleteRename {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("model id {0:?} is already in use")]
    NameCollision(String),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
}

impl StoreError {
    /// Whether the error indicates damaged stored data rather than a bad
    /// request.
    pub fn is_corruption(&self) -> bool {
        matches!(
            self,
            StoreError::CorruptObject { .. } | StoreError::CorruptRef(_) | StoreError::WrongKind { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Blob,
    Node,
    Model,
    Tree,
    Commit,
}

impl ObjectKind {
    fn from_tag(byte: u8) -> Option<ObjectKind> {
        match Tag::from_byte(byte)? {
            Tag::Blob => Some(ObjectKind::Blob),
            Tag::Node => Some(ObjectKind::Node),
            Tag::ModelObject => Some(ObjectKind::Model),
            Tag::Tree => Some(ObjectKind::Tree),
            Tag::Commit => Some(ObjectKind::Commit),
            _ => None,
        }
    }
}

/// Who, when and why of a new commit. The store never reads a clock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitInfo {
    pub author: String,
    pub message: String,
    pub timestamp: i64,
}

impl CommitInfo {
    pub fn new(author: impl Into<String>, message: impl Into<String>, timestamp: i64) -> Self {
        CommitInfo {
            author: author.into(),
            message: message.into(),
            timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Commit {
    pub parents: Vec<ObjectId>,
    pub root: ObjectId,
    pub author: String,
    pub message: String,
    pub timestamp: i64,
}

impl Commit {
    pub fn id(&self) -> ObjectId {
        ObjectId::digest(&self.canonical_bytes())
    }
}

impl Canonical for Commit {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.tag(Tag::Commit);
        enc.id(&self.root);
        enc.len(self.parents.len());
        for p in &self.parents {
            enc.id(p);
        }
        enc.str(&self.author);
        enc.str(&self.message);
        enc.i64(self.timestamp);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.expect_tag(Tag::Commit)?;
        let root = dec.id()?;
        let n = dec.count()?;
        if n > 2 {
            return Err(DecodeError::Invalid(format!("{n} parents")));
        }
        let parents = (0..n).map(|_| dec.id()).collect::<Result<_, _>>()?;
        Ok(Commit {
            parents,
            root,
            author: dec.str()?,
            message: dec.str()?,
            timestamp: dec.i64()?,
        })
    }
}

/// Stored form of a model: node object ids in node-id order, edges as index
/// pairs into that list, and subjects.
#[derive(Debug, Clone, PartialEq, Eq)]
struct ModelObject {
    model_id: String,
    nodes: Vec<ObjectId>,
    edges: Vec<(u32, u32)>,
    subjects: BTreeSet<String>,
}

impl Canonical for ModelObject {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.tag(Tag::ModelObject);
        enc.str(&self.model_id);
        enc.len(self.nodes.len());
        for id in &self.nodes {
            enc.id(id);
        }
        enc.len(self.edges.len());
        for (f, t) in &self.edges {
            enc.u32(*f);
            enc.u32(*t);
        }
        encode_str_set(enc, &self.subjects);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.expect_tag(Tag::ModelObject)?;
        let model_id = dec.str()?;
        let n = dec.count()?;
        let nodes = (0..n).map(|_| dec.id()).collect::<Result<Vec<_>, _>>()?;
        let e = dec.count()?;
        let mut edges = Vec::with_capacity(e);
        for _ in 0..e {
            edges.push((dec.u32()?, dec.u32()?));
        }
        ensure_ascending(&edges, "model edges")?;
        let subjects = decode_str_set(dec, "model subjects")?;
        Ok(ModelObject {
            model_id,
            nodes,
            edges,
            subjects,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct TreeObject {
    models: BTreeMap<String, ObjectId>,
}

impl Canonical for TreeObject {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.tag(Tag::Tree);
        enc.len(self.models.len());
        for (name, id) in &self.models {
            enc.str(name);
            enc.id(id);
        }
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.expect_tag(Tag::Tree)?;
        let n = dec.count()?;
        let mut pairs = Vec::with_capacity(n);
        for _ in 0..n {
            pairs.push((dec.str()?, dec.id()?));
        }
        let names: Vec<&String> = pairs.iter().map(|(k, _)| k).collect();
        ensure_ascending(&names, "tree entries")?;
        Ok(TreeObject {
            models: pairs.into_iter().collect(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StorageStats {
    pub object_count: u64,
    pub total_bytes: u64,
    pub objects_by_kind: BTreeMap<ObjectKind, u64>,
}

/// A workspace together with the commit it was checked out from. Only the
/// store constructs these, so the pairing is always genuine.
#[derive(Debug, Clone)]
pub struct Snapshot {
    commit_id: ObjectId,
    workspace: Workspace,
}

impl Snapshot {
    pub fn commit_id(&self) -> ObjectId {
        self.commit_id
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }
}

/// An object store with single-writer semantics.
#[derive(Debug, Clone, Default)]
pub struct Store<B = MemoryBackend> {
    backend: B,
}

impl Store<MemoryBackend> {
    pub fn in_memory() -> Self {
        Store {
            backend: MemoryBackend::default(),
        }
    }
}

impl Store<DirBackend> {
    pub fn init(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Ok(Store {
            backend: DirBackend::init(path)?,
        })
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Ok(Store {
            backend: DirBackend::open(path)?,
        })
    }
}

impl<B: Backend> Store<B> {
    pub fn with_backend(backend: B) -> Self {
        Store { backend }
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn backend_mut(&mut self) -> &mut B {
        &mut self.backend
    }

    fn put_bytes(&mut self, bytes: &[u8]) -> Result<ObjectId, StoreError> {
        let id = ObjectId::digest(bytes);
        if !self.backend.contains(&id)? {
            self.backend.write(&id, bytes)?;
        }
        Ok(id)
    }

    /// Reads an object and re-verifies its hash.
    pub fn read_object(&self, id: &ObjectId) -> Result<Vec<u8>, StoreError> {
        let bytes = self
            .backend
            .read(id)?
            .ok_or(StoreError::UnknownObject(*id))?;
        if ObjectId::digest(&bytes) != *id {
            return Err(StoreError::CorruptObject {
                id: *id,
                reason: "content hash mismatch".into(),
            });
        }
        Ok(bytes)
    }

    pub fn contains(&self, id: &ObjectId) -> Result<bool, StoreError> {
        self.backend.contains(id)
    }

    pub fn object_kind(&self, id: &ObjectId) -> Result<ObjectKind, StoreError> {
        let bytes = self.read_object(id)?;
        bytes
            .first()
            .and_then(|&b| ObjectKind::from_tag(b))
            .ok_or_else(|| StoreError::CorruptObject {
                id: *id,
                reason: "unknown object tag".into(),
            })
    }

    fn decode<T: Canonical>(&self, id: &ObjectId, expected: ObjectKind) -> Result<T, StoreError> {
        let bytes = self.read_object(id)?;
        let found = bytes.first().and_then(|&b| ObjectKind::from_tag(b));
        match found {
            Some(k) if k == expected => {}
            Some(found) => {
                return Err(StoreError::WrongKind {
                    id: *id,
                    expected,
                    found,
                })
            }
            None => {
                return Err(StoreError::CorruptObject {
                    id: *id,
                    reason: "unknown object tag".into(),
                })
            }
        }
        T::from_canonical_bytes(&bytes).map_err(|e| StoreError::CorruptObject {
            id: *id,
            reason: e.to_string(),
        })
    }

    /// Stores opaque bytes, such as evidence payloads.
    pub fn put_blob(&mut self, payload: &[u8]) -> Result<ObjectId, StoreError> {
        let mut enc = Encoder::default();
        enc.tag(Tag::Blob);
        enc.raw(payload);
        self.put_bytes(&enc.finish())
    }

    pub fn read_blob(&self, id: &ObjectId) -> Result<Vec<u8>, StoreError> {
        let bytes = self.read_object(id)?;
        match bytes.first().and_then(|&b| ObjectKind::from_tag(b)) {
            Some(ObjectKind::Blob) => Ok(bytes[1..].to_vec()),
            Some(found) => Err(StoreError::WrongKind {
                id: *id,
                expected: ObjectKind::Blob,
                found,
            }),
            None => Err(StoreError::CorruptObject {
                id: *id,
                reason: "unknown object tag".into(),
            }),
        }
    }

    fn write_model(&mut self, model: &ModelGraph) -> Result<ObjectId, StoreError> {
        let mut nodes = Vec::with_capacity(model.nodes.len());
        for node in model.nodes.values() {
            nodes.push(self.put_bytes(&node.canonical_bytes())?);
        }
        let index: BTreeMap<&NodeId, u32> = model
            .nodes
            .keys()
            .enumerate()
            .map(|(i, k)| (k, i as u32))
            .collect();
        let edges = model
            .edges
            .iter()
            .map(|(f, t)| (index[f], index[t]))
            .collect();
        let obj = ModelObject {
            model_id: model.model_id.clone(),
            nodes,
            edges,
            subjects: model.subjects.clone(),
        };
        self.put_bytes(&obj.canonical_bytes())
    }

    /// Stores the workspace's nodes, models and tree; returns the tree id.
    pub fn write_tree(&mut self, workspace: &Workspace) -> Result<ObjectId, StoreError> {
        let mut models = BTreeMap::new();
        for (name, model) in workspace.models() {
            models.insert(name.clone(), self.write_model(model)?);
        }
        self.put_bytes(&TreeObject { models }.canonical_bytes())
    }

    /// Reconstructs the workspace stored under a tree id, verifying every
    /// object on the way.
    pub fn read_tree(&self, id: &ObjectId) -> Result<Workspace, StoreError> {
        let tree: TreeObject = self.decode(id, ObjectKind::Tree)?;
        let mut node_cache: HashMap<ObjectId, Node> = HashMap::new();
        let mut models = Vec::with_capacity(tree.models.len());
        for (name, model_id) in &tree.models {
            let obj: ModelObject = self.decode(model_id, ObjectKind::Model)?;
            let corrupt = |reason: String| StoreError::CorruptObject {
                id: *model_id,
                reason,
            };
            if &obj.model_id != name {
                return Err(corrupt(format!("model id {:?} under tree entry {name:?}", obj.model_id)));
            }
            let mut nodes = Vec::with_capacity(obj.nodes.len());
            for nid in &obj.nodes {
                if !node_cache.contains_key(nid) {
                    let node: Node = self.decode(nid, ObjectKind::Node)?;
                    node_cache.insert(*nid, node);
                }
                nodes.push(node_cache[nid].clone());
            }
            let ids: Vec<NodeId> = nodes.iter().map(|n| n.id.clone()).collect();
            ensure_ascending(&ids, "model nodes").map_err(|e| corrupt(e.to_string()))?;
            let edges = obj
                .edges
                .iter()
                .map(|&(f, t)| match (ids.get(f as usize), ids.get(t as usize)) {
                    (Some(f), Some(t)) => Ok((f.clone(), t.clone())),
                    _ => Err(corrupt(format!("edge index ({f}, {t}) out of range"))),
                })
                .collect::<Result<BTreeSet<_>, _>>()?;
            models.push(ModelGraph {
                model_id: obj.model_id,
                nodes: nodes.into_iter().map(|n| (n.id.clone(), n)).collect(),
                edges,
                subjects: obj.subjects,
            });
        }
        Workspace::from_models(models).map_err(|e| StoreError::CorruptObject {
            id: *id,
            reason: e.to_string(),
        })
    }

    /// Persists `workspace` as a new commit with the given parents.
    pub fn commit(
        &mut self,
        workspace: &Workspace,
        parents: &[ObjectId],
        info: &CommitInfo,
    ) -> Result<ObjectId, StoreError> {
        if parents.len() > 2 {
            return Err(StoreError::TooManyParents(parents.len()));
        }
        for p in parents {
            match self.read_commit(p) {
                Ok(_) => {}
                Err(StoreError::UnknownCommit(_)) => return Err(StoreError::UnknownParent(*p)),
                Err(e) => return Err(e),
            }
        }
        let root = self.write_tree(workspace)?;
        let commit = Commit {
            parents: parents.to_vec(),
            root,
            author: info.author.clone(),
            message: info.message.clone(),
            timestamp: info.timestamp,
        };
        self.put_bytes(&commit.canonical_bytes())
    }

    pub fn read_commit(&self, id: &ObjectId) -> Result<Commit, StoreError> {
        match self.decode(id, ObjectKind::Commit) {
            Err(StoreError::UnknownObject(_)) | Err(StoreError::WrongKind { .. }) => {
                Err(StoreError::UnknownCommit(*id))
            }
            other => other,
        }
    }

    pub fn checkout(&self, commit_id: &ObjectId) -> Result<Workspace, StoreError> {
        let commit = self.read_commit(commit_id)?;
        self.read_tree(&commit.root)
    }

    pub fn snapshot(&self, commit_id: &ObjectId) -> Result<Snapshot, StoreError> {
        Ok(Snapshot {
            commit_id: *commit_id,
            workspace: self.checkout(commit_id)?,
        })
    }

    /// Commits copies of every model in the clone chain of `model` under the
    /// names given by `rename`, which must cover the chain exactly. Node
    /// identities are kept, so the copies share nodes exactly as the
    /// originals do. The new commit's only parent is `commit_id`.
    pub fn clone_models(
        &mut self,
        commit_id: &ObjectId,
        model: &str,
        rename: &BTreeMap<String, String>,
        info: &CommitInfo,
    ) -> Result<(Workspace, ObjectId), StoreError> {
        let base = self.checkout(commit_id)?;
        let chain = base.clone_chain(model)?;
        let named: BTreeSet<String> = rename.keys().cloned().collect();
        if named != chain {
            return Err(StoreError::IncompleteRename {
                missing: chain.difference(&named).cloned().collect(),
                unexpected: named.difference(&chain).cloned().collect(),
            });
        }
        let mut targets = BTreeSet::new();
        for new_id in rename.values() {
            if new_id.is_empty() {
                return Err(WorkspaceError::InvalidModelId.into());
            }
            if base.models().contains_key(new_id) || !targets.insert(new_id) {
                return Err(StoreError::NameCollision(new_id.clone()));
            }
        }
        let mut next = base.clone();
        for (old, new) in rename {
            let mut copy = base.model(old)?.clone();
            copy.model_id = new.clone();
            next.insert_model(copy)?;
        }
        let id = self.commit(&next, &[*commit_id], info)?;
        Ok((next, id))
    }

    /// Exact counts over every stored object.
    pub fn stats(&self) -> Result<StorageStats, StoreError> {
        let mut stats = StorageStats::default();
        for id in self.backend.list()? {
            let bytes = self.backend.read(&id)?.ok_or(StoreError::UnknownObject(id))?;
            stats.object_count += 1;
            stats.total_bytes += bytes.len() as u64;
            if let Some(kind) = bytes.first().and_then(|&b| ObjectKind::from_tag(b)) {
                *stats.objects_by_kind.entry(kind).or_default() += 1;
            }
        }
        Ok(stats)
    }

    pub fn object_ids(&self) -> Result<Vec<ObjectId>, StoreError> {
        self.backend.list()
    }

    /// Re-hashes and decodes every object; returns the ids that fail with a
    /// reason, in id order.
    pub fn verify_objects(&self) -> Result<Vec<(ObjectId, String)>, StoreError> {
        let mut bad = Vec::new();
        for id in self.backend.list()? {
            let result = self.object_kind(&id).and_then(|kind| match kind {
                ObjectKind::Blob => Ok(()),
                ObjectKind::Node => self.decode::<Node>(&id, kind).map(drop),
                ObjectKind::Model => self.decode::<ModelObject>(&id, kind).map(drop),
                ObjectKind::Tree => self.decode::<TreeObject>(&id, kind).map(drop),
                ObjectKind::Commit => self.decode::<Commit>(&id, kind).map(drop),
            });
            if let Err(e) = result {
                bad.push((id, e.to_string()));
            }
        }
        Ok(bad)
    }

    pub fn read_ref(&self, name: &str) -> Result<Option<ObjectId>, StoreError> {
        self.backend.read_ref(name)
    }

    pub fn write_ref(&mut self, name: &str, id: &ObjectId) -> Result<(), StoreError> {
        self.backend.write_ref(name, id)
    }

    pub fn refs(&self) -> Result<BTreeMap<String, ObjectId>, StoreError> {
        self.backend.list_refs()
    }

    /// Resolves a 64-hex commit id or a ref name.
    pub fn resolve(&self, rev: &str) -> Result<ObjectId, StoreError> {
        if let Ok(id) = rev.parse::<ObjectId>() {
            return Ok(id);
        }
        if check_ref_name(rev).is_ok() {
            if let Some(id) = self.read_ref(rev)? {
                return Ok(id);
            }
        }
        Err(StoreError::UnknownRevision(rev.to_string()))
    }

    /// Every commit reachable from `head`, newest first (timestamp
    /// descending, then id ascending).
    pub fn history(&self, head: &ObjectId) -> Result<Vec<(ObjectId, Commit)>, StoreError> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([*head]);
        let mut out = Vec::new();
        while let Some(id) = queue.pop_front() {
            if !seen.insert(id) {
                continue;
            }
            let commit = self.read_commit(&id)?;
            queue.extend(commit.parents.iter().copied());
            out.push((id, commit));
        }
        out.sort_by(|(ia, a), (ib, b)| b.timestamp.cmp(&a.timestamp).then(ia.cmp(ib)));
        Ok(out)
    }

    /// Three-way merge of `ours` and `theirs` relative to `base`. A clean
    /// merge is committed with parents `[ours, theirs]`.
    pub fn merge(
        &mut self,
        base: &ObjectId,
        ours: &ObjectId,
        theirs: &ObjectId,
        info: &CommitInfo,
    ) -> Result<MergeResult, StoreError> {
        let b = self.checkout(base)?;
        let o = self.checkout(ours)?;
        let t = self.checkout(theirs)?;
        match merge::merge_workspaces(&b, &o, &t) {
            Ok(ws) => {
                let id = self.commit(&ws, &[*ours, *theirs], info)?;
                Ok(MergeResult::Merged {
                    workspace: ws,
                    commit: id,
                })
            }
            Err(conflicts) => Ok(MergeResult::Conflicts(conflicts)),
        }
    }
}

pub use merge::merge_workspaces;
