//! The provenance log: an append-only, hash-chained record of
//! contributions, and the contribution graph derived from it.
//!
//! Each contribution's id is the SHA-256 of its canonical encoding (every
//! field except the id). The log keeps a running chain digest per entry:
//!
//! ```text
//! chain[0] = H(ZERO     || id[0])
//! chain[i] = H(chain[i-1] || id[i])
//! ```
//!
//! so the head digest commits to every entry. Upstream references may only
//! point at earlier entries, which makes the contribution graph acyclic by
//! construction.
//!
//! On disk the log is one canonical JSON object per line, keys in the fixed
//! order `id, seq, author, model_id, commit_id, node_id, subjects,
//! payload_digest, upstream, chain`.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::encoding::{encode_str_set, Canonical, DecodeError, Decoder, Encoder, Tag};
use crate::id::ObjectId;
use crate::model::NodeId;
use crate::store::{Backend, Snapshot, Store, StoreError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProvenanceError {
    #[error("unknown upstream contribution {0}")]
    UnknownUpstream(ObjectId),
    #[error("unknown commit {0}")]
    UnknownCommit(ObjectId),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("node {node} is not in model {model:?}")]
    UnknownNode { model: String, node: NodeId },
    #[error("upstream contribution {upstream} comes from node {upstream_node}, which is not upstream of {node} in the same model")]
    NotUpstream {
        upstream: ObjectId,
        upstream_node: NodeId,
        node: NodeId,
    },
    #[error("corrupt log: {0}")]
    CorruptLog(Finding),
    #[error("log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// What a caller supplies to record a contribution. The subject set is
/// snapshotted from the model at `commit_id`; id and seq are assigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContributionDraft {
    pub author: String,
    pub model_id: String,
    pub commit_id: ObjectId,
    pub node_id: NodeId,
    pub payload_digest: ObjectId,
    pub upstream: BTreeSet<ObjectId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contribution {
    pub id: ObjectId,
    pub seq: u64,
    pub author: String,
    pub model_id: String,
    pub commit_id: ObjectId,
    pub node_id: NodeId,
    pub subjects: BTreeSet<String>,
    pub payload_digest: ObjectId,
    pub upstream: BTreeSet<ObjectId>,
}

/// Encoding of every field except `id`, used to derive the id.
struct ContributionBody<'a>(&'a Contribution);

impl Canonical for ContributionBody<'_> {
    fn encode_into(&self, enc: &mut Encoder) {
        let c = self.0;
        enc.tag(Tag::Contribution);
        enc.u64(c.seq);
        enc.str(&c.author);
        enc.str(&c.model_id);
        enc.id(&c.commit_id);
        enc.str(c.node_id.as_str());
        encode_str_set(enc, &c.subjects);
        enc.id(&c.payload_digest);
        enc.len(c.upstream.len());
        for u in &c.upstream {
            enc.id(u);
        }
    }

    fn decode_from(_: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Err(DecodeError::Invalid("contribution bodies are hash input only".into()))
    }
}

impl Contribution {
    /// Recomputes the id from the other fields.
    pub fn compute_id(&self) -> ObjectId {
        ObjectId::digest(&ContributionBody(self).canonical_bytes())
    }
}

/// A contribution plus the running chain digest at its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub contribution: Contribution,
    pub chain: ObjectId,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogLine {
    id: ObjectId,
    seq: u64,
    author: String,
    model_id: String,
    commit_id: ObjectId,
    node_id: NodeId,
    subjects: BTreeSet<String>,
    payload_digest: ObjectId,
    upstream: BTreeSet<ObjectId>,
    chain: ObjectId,
}

impl From<&LogEntry> for LogLine {
    fn from(e: &LogEntry) -> Self {
        let c = e.contribution.clone();
        LogLine {
            id: c.id,
            seq: c.seq,
            author: c.author,
            model_id: c.model_id,
            commit_id: c.commit_id,
            node_id: c.node_id,
            subjects: c.subjects,
            payload_digest: c.payload_digest,
            upstream: c.upstream,
            chain: e.chain,
        }
    }
}

impl From<LogLine> for LogEntry {
    fn from(l: LogLine) -> Self {
        LogEntry {
            contribution: Contribution {
                id: l.id,
                seq: l.seq,
                author: l.author,
                model_id: l.model_id,
                commit_id: l.commit_id,
                node_id: l.node_id,
                subjects: l.subjects,
                payload_digest: l.payload_digest,
                upstream: l.upstream,
            },
            chain: l.chain,
        }
    }
}

pub fn chain_step(prev: &ObjectId, id: &ObjectId) -> ObjectId {
    ObjectId::digest_parts(&[prev.as_bytes(), id.as_bytes()])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "finding", rename_all = "snake_case")]
pub enum FindingKind {
    Malformed { message: String },
    SeqMismatch { found: u64 },
    IdMismatch,
    UnknownUpstream { upstream: ObjectId },
    ChainMismatch,
}

/// The first position at which a log diverges from what its contents imply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("entry {position}: {kind:?}")]
pub struct Finding {
    pub position: usize,
    #[serde(flatten)]
    pub kind: FindingKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub entries_checked: usize,
    pub first_divergence: Option<Finding>,
}

impl VerificationReport {
    pub fn is_clean(&self) -> bool {
        self.first_divergence.is_none()
    }
}

/// φ = (C, E). Edges are oriented dependent → dependency, so the in-degree
/// of a contribution counts the contributions that build on it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ContributionGraph {
    pub vertices: BTreeSet<ObjectId>,
    pub edges: BTreeSet<(ObjectId, ObjectId)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProvenanceLog {
    entries: Vec<LogEntry>,
    index: HashMap<ObjectId, usize>,
}

impl ProvenanceLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps entries as found (for example, loaded from disk) without
    /// checking them. Use [`ProvenanceLog::verify`] before trusting them.
    pub fn from_entries(entries: Vec<LogEntry>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.contribution.id, i))
            .collect();
        ProvenanceLog { entries, index }
    }

    pub fn into_entries(self) -> Vec<LogEntry> {
        self.entries
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn contributions(&self) -> impl Iterator<Item = &Contribution> {
        self.entries.iter().map(|e| &e.contribution)
    }

    pub fn get(&self, id: &ObjectId) -> Option<&Contribution> {
        self.index.get(id).map(|&i| &self.entries[i].contribution)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Chain digest of the last entry, or [`ObjectId::ZERO`] when empty.
    pub fn head_digest(&self) -> ObjectId {
        self.entries.last().map_or(ObjectId::ZERO, |e| e.chain)
    }

    /// Records a contribution against a commit in `store`.
    pub fn record<B: Backend>(
        &mut self,
        store: &Store<B>,
        draft: ContributionDraft,
    ) -> Result<ObjectId, ProvenanceError> {
        let snapshot = store.snapshot(&draft.commit_id).map_err(|e| match e {
            StoreError::UnknownCommit(id) => ProvenanceError::UnknownCommit(id),
            other => ProvenanceError::Store(other),
        })?;
        self.record_at(&snapshot, draft)
    }

    /// Records a contribution against an already checked-out commit.
    pub fn record_at(
        &mut self,
        snapshot: &Snapshot,
        draft: ContributionDraft,
    ) -> Result<ObjectId, ProvenanceError> {
        if draft.commit_id != snapshot.commit_id() {
            return Err(ProvenanceError::UnknownCommit(draft.commit_id));
        }
        let model = snapshot
            .workspace()
            .model(&draft.model_id)
            .map_err(|_| ProvenanceError::UnknownModel(draft.model_id.clone()))?;
        if !model.contains_node(&draft.node_id) {
            return Err(ProvenanceError::UnknownNode {
                model: draft.model_id.clone(),
                node: draft.node_id.clone(),
            });
        }
        let mut node_upstream = None;
        for u in &draft.upstream {
            let up = self.get(u).ok_or(ProvenanceError::UnknownUpstream(*u))?;
            if up.model_id == draft.model_id && up.commit_id == draft.commit_id {
                let allowed = node_upstream.get_or_insert_with(|| {
                    model
                        .upstream_set(&draft.node_id)
                        .expect("node checked above")
                });
                if !allowed.contains(&up.node_id) {
                    return Err(ProvenanceError::NotUpstream {
                        upstream: *u,
                        upstream_node: up.node_id.clone(),
                        node: draft.node_id.clone(),
                    });
                }
            }
        }
        let mut contribution = Contribution {
            id: ObjectId::ZERO,
            seq: self.entries.len() as u64,
            author: draft.author,
            subjects: model.subjects.clone(),
            model_id: draft.model_id,
            commit_id: draft.commit_id,
            node_id: draft.node_id,
            payload_digest: draft.payload_digest,
            upstream: draft.upstream,
        };
        contribution.id = contribution.compute_id();
        let chain = chain_step(&self.head_digest(), &contribution.id);
        let id = contribution.id;
        self.index.insert(id, self.entries.len());
        self.entries.push(LogEntry {
            contribution,
            chain,
        });
        Ok(id)
    }

    /// Recomputes every id and the hash chain; reports the first divergence.
    pub fn verify(&self) -> VerificationReport {
        let mut prev = ObjectId::ZERO;
        let mut seen = HashMap::new();
        for (position, entry) in self.entries.iter().enumerate() {
            let c = &entry.contribution;
            let fail = |kind| VerificationReport {
                entries_checked: position,
                first_divergence: Some(Finding { position, kind }),
            };
            if c.seq != position as u64 {
                return fail(FindingKind::SeqMismatch { found: c.seq });
            }
            let id = c.compute_id();
            if id != c.id {
                return fail(FindingKind::IdMismatch);
            }
            if let Some(u) = c.upstream.iter().find(|u| !seen.contains_key(*u)) {
                return fail(FindingKind::UnknownUpstream { upstream: *u });
            }
            let chain = chain_step(&prev, &id);
            if chain != entry.chain {
                return fail(FindingKind::ChainMismatch);
            }
            seen.insert(id, position);
            prev = chain;
        }
        VerificationReport {
            entries_checked: self.entries.len(),
            first_divergence: None,
        }
    }

    /// Builds φ = (C, E) from a log that verifies.
    pub fn derive_graph(&self) -> Result<ContributionGraph, ProvenanceError> {
        if let Some(finding) = self.verify().first_divergence {
            return Err(ProvenanceError::CorruptLog(finding));
        }
        let mut graph = ContributionGraph::default();
        for c in self.contributions() {
            graph.vertices.insert(c.id);
            for u in &c.upstream {
                graph.edges.insert((c.id, *u));
            }
        }
        Ok(graph)
    }

    /// One canonical JSON object per line, each terminated by `\n`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(&LogLine::from(e)).expect("log lines serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses a log file. Every line must be in canonical form; the entries
    /// are not otherwise checked.
    pub fn from_jsonl(text: &str) -> Result<ProvenanceLog, ProvenanceError> {
        let mut entries = Vec::new();
        if !text.is_empty() && !text.ends_with('\n') {
            return Err(ProvenanceError::Parse {
                line: text.lines().count(),
                message: "missing final newline".into(),
            });
        }
        for (i, line) in text.split_terminator('\n').enumerate() {
            entries.push(parse_line(line).map_err(|message| ProvenanceError::Parse {
                line: i + 1,
                message,
            })?);
        }
        Ok(ProvenanceLog::from_entries(entries))
    }

    /// Verifies raw log bytes: a line that does not parse canonically is
    /// reported as a divergence at its position.
    pub fn verify_bytes(bytes: &[u8]) -> VerificationReport {
        let malformed = |position: usize, message: String| VerificationReport {
            entries_checked: position,
            first_divergence: Some(Finding {
                position,
                kind: FindingKind::Malformed { message },
            }),
        };
        let text = match std::str::from_utf8(bytes) {
            Ok(t) => t,
            Err(e) => {
                let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count();
                return malformed(line, "invalid UTF-8".into());
            }
        };
        match ProvenanceLog::from_jsonl(text) {
            Ok(log) => log.verify(),
            Err(ProvenanceError::Parse { line, message }) => malformed(line.saturating_sub(1), message),
            Err(other) => malformed(0, other.to_string()),
        }
    }
}

fn parse_line(line: &str) -> Result<LogEntry, String> {
    let parsed: LogLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let canonical = serde_json::to_string(&parsed).map_err(|e| e.to_string())?;
    if canonical != line {
        return Err("line is not in canonical form".into());
    }
    Ok(parsed.into())
}
