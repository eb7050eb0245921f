//! Financial models as acyclic dataflow graphs.
//!
//! A [`ModelGraph`] holds source, processor and sink [`Node`]s joined by
//! directed edges. Nodes are identified by [`NodeId`] and the same id in two
//! models denotes the same node, which is what makes models "share"
//! processors.
//!
//! Checked mutators (`insert_*`) keep the graph acyclic and kind-consistent
//! and leave it untouched on error. The `add_*`/`tag_subject` forms return a
//! new graph and never modify the receiver. Fields are public so that
//! arbitrary (possibly invalid) graphs can be built by hand and checked with
//! [`ModelGraph::validate`].

pub mod text;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoding::{
    decode_str_map, decode_str_set, encode_str_map, encode_str_set, ensure_ascending, Canonical,
    DecodeError, Decoder, Encoder, Tag,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("node id must be nonempty")]
    InvalidNodeId,
    #[error("node {0} already exists")]
    DuplicateNode(NodeId),
    #[error("invalid node {id}: {reason}")]
    InvalidNode { id: NodeId, reason: String },
    #[error("node {0} does not exist")]
    MissingNode(NodeId),
    #[error("edge {from} -> {to} already exists")]
    DuplicateEdge { from: NodeId, to: NodeId },
    #[error("edge {from} -> {to} does not exist")]
    MissingEdge { from: NodeId, to: NodeId },
    #[error("edge {from} -> {to} would close a cycle")]
    CycleError { from: NodeId, to: NodeId },
    #[error("edge {from} -> {to} violates node kinds: {reason}")]
    KindError {
        from: NodeId,
        to: NodeId,
        reason: &'static str,
    },
    #[error("subject tags must be nonempty")]
    InvalidSubject,
}

/// Identity of a node across every model of a workspace.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Result<Self, GraphError> {
        let id = id.into();
        if id.is_empty() {
            return Err(GraphError::InvalidNodeId);
        }
        Ok(NodeId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl FromStr for NodeId {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeId::new(s)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        NodeId::new(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Source,
    Processor,
    Sink,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Source => "source",
            NodeKind::Processor => "processor",
            NodeKind::Sink => "sink",
        }
    }

    fn code(self) -> u8 {
        match self {
            NodeKind::Source => 0,
            NodeKind::Processor => 1,
            NodeKind::Sink => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self, DecodeError> {
        match code {
            0 => Ok(NodeKind::Source),
            1 => Ok(NodeKind::Processor),
            2 => Ok(NodeKind::Sink),
            other => Err(DecodeError::Invalid(format!("node kind {other}"))),
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "source" => Ok(NodeKind::Source),
            "processor" => Ok(NodeKind::Processor),
            "sink" => Ok(NodeKind::Sink),
            other => Err(format!("unknown node kind {other:?}")),
        }
    }
}

/// A processor or endpoint. `params` is opaque configuration, `facets` are
/// named aspects attached to the node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: String,
    pub params: BTreeMap<String, String>,
    pub facets: BTreeMap<String, String>,
}

impl Node {
    pub fn new(id: NodeId, kind: NodeKind, label: impl Into<String>) -> Self {
        Node {
            id,
            kind,
            label: label.into(),
            params: BTreeMap::new(),
            facets: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }

    pub fn with_facet(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.facets.insert(key.into(), value.into());
        self
    }

    fn check(&self) -> Result<(), GraphError> {
        let invalid = |reason: &str| GraphError::InvalidNode {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.label.is_empty() {
            return Err(invalid("label is empty"));
        }
        if self.facets.keys().any(String::is_empty) {
            return Err(invalid("facet key is empty"));
        }
        Ok(())
    }
}

impl Canonical for Node {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.tag(Tag::Node);
        enc.str(self.id.as_str());
        enc.u8(self.kind.code());
        enc.str(&self.label);
        encode_str_map(enc, &self.params);
        encode_str_map(enc, &self.facets);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.expect_tag(Tag::Node)?;
        let id = NodeId::new(dec.str()?).map_err(|e| DecodeError::Invalid(e.to_string()))?;
        let kind = NodeKind::from_code(dec.u8()?)?;
        let label = dec.str()?;
        let params = decode_str_map(dec, "node params")?;
        let facets = decode_str_map(dec, "node facets")?;
        Ok(Node {
            id,
            kind,
            label,
            params,
            facets,
        })
    }
}

/// One finding of [`ModelGraph::validate`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    /// Nodes lying on at least one directed cycle.
    Cycle { nodes: Vec<NodeId> },
    DanglingEdge { from: NodeId, to: NodeId },
    SelfEdge { node: NodeId },
    SourceWithInbound { node: NodeId, from: NodeId },
    SinkWithOutbound { node: NodeId, to: NodeId },
    /// A `nodes` map key that differs from the node's own id.
    IdMismatch { key: NodeId, node: NodeId },
    EmptyLabel { node: NodeId },
    EmptyFacetKey { node: NodeId },
    DuplicateFacetKey { node: NodeId, key: String },
    EmptySubject,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// A model: nodes, directed edges between them, and subject tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelGraph {
    pub model_id: String,
    pub nodes: BTreeMap<NodeId, Node>,
    pub edges: BTreeSet<(NodeId, NodeId)>,
    pub subjects: BTreeSet<String>,
}

impl ModelGraph {
    pub fn new(model_id: impl Into<String>) -> Self {
        ModelGraph {
            model_id: model_id.into(),
            nodes: BTreeMap::new(),
            edges: BTreeSet::new(),
            subjects: BTreeSet::new(),
        }
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn contains_node(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    /// Returns a copy of the graph with `node` added.
    pub fn add_node(&self, node: Node) -> Result<ModelGraph, GraphError> {
        let mut next = self.clone();
        next.insert_node(node)?;
        Ok(next)
    }

    /// Returns a copy of the graph with the edge `from -> to` added.
    pub fn add_edge(&self, from: &NodeId, to: &NodeId) -> Result<ModelGraph, GraphError> {
        let mut next = self.clone();
        next.insert_edge(from, to)?;
        Ok(next)
    }

    /// Returns a copy of the graph tagged with `subject`. Idempotent.
    pub fn tag_subject(&self, subject: &str) -> Result<ModelGraph, GraphError> {
        let mut next = self.clone();
        next.insert_subject(subject)?;
        Ok(next)
    }

    pub fn insert_node(&mut self, node: Node) -> Result<(), GraphError> {
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        node.check()?;
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    /// Replaces the definition of an existing node. Fails without changing
    /// the graph if the new kind is incompatible with the node's edges.
    pub fn replace_node(&mut self, node: Node) -> Result<(), GraphError> {
        if !self.nodes.contains_key(&node.id) {
            return Err(GraphError::MissingNode(node.id));
        }
        node.check()?;
        if node.kind == NodeKind::Source {
            let first = self.predecessors(&node.id).next().cloned();
            if let Some(from) = first {
                return Err(GraphError::KindError {
                    from,
                    to: node.id,
                    reason: "source nodes cannot have inbound edges",
                });
            }
        }
        if node.kind == NodeKind::Sink {
            let first = self.successors(&node.id).next().cloned();
            if let Some(to) = first {
                return Err(GraphError::KindError {
                    from: node.id,
                    to,
                    reason: "sink nodes cannot have outbound edges",
                });
            }
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    /// Removes a node together with every edge touching it.
    pub fn remove_node(&mut self, id: &NodeId) -> Result<Node, GraphError> {
        let node = self
            .nodes
            .remove(id)
            .ok_or_else(|| GraphError::MissingNode(id.clone()))?;
        self.edges.retain(|(from, to)| from != id && to != id);
        Ok(node)
    }

    pub fn insert_edge(&mut self, from: &NodeId, to: &NodeId) -> Result<(), GraphError> {
        let from_node = self
            .nodes
            .get(from)
            .ok_or_else(|| GraphError::MissingNode(from.clone()))?;
        let to_node = self
            .nodes
            .get(to)
            .ok_or_else(|| GraphError::MissingNode(to.clone()))?;
        let kind_error = |reason| GraphError::KindError {
            from: from.clone(),
            to: to.clone(),
            reason,
        };
        if from_node.kind == NodeKind::Sink {
            return Err(kind_error("sink nodes cannot have outbound edges"));
        }
        if to_node.kind == NodeKind::Source {
            return Err(kind_error("source nodes cannot have inbound edges"));
        }
        let edge = (from.clone(), to.clone());
        if self.edges.contains(&edge) {
            return Err(GraphError::DuplicateEdge {
                from: from.clone(),
                to: to.clone(),
            });
        }
        if from == to || self.reaches(to, from) {
            return Err(GraphError::CycleError {
                from: from.clone(),
                to: to.clone(),
            });
        }
        self.edges.insert(edge);
        Ok(())
    }

    pub fn remove_edge(&mut self, from: &NodeId, to: &NodeId) -> Result<(), GraphError> {
        if self.edges.remove(&(from.clone(), to.clone())) {
            Ok(())
        } else {
            Err(GraphError::MissingEdge {
                from: from.clone(),
                to: to.clone(),
            })
        }
    }

    pub fn insert_subject(&mut self, subject: &str) -> Result<(), GraphError> {
        if subject.is_empty() {
            return Err(GraphError::InvalidSubject);
        }
        self.subjects.insert(subject.to_string());
        Ok(())
    }

    /// Direct successors of `id`, in id order.
    pub fn successors<'a>(&'a self, id: &'a NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        let start = (id.clone(), NodeId(String::new()));
        self.edges
            .range(start..)
            .take_while(move |(from, _)| from == id)
            .map(|(_, to)| to)
    }

    /// Direct predecessors of `id`. Linear in the number of edges.
    pub fn predecessors<'a>(&'a self, id: &'a NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.edges
            .iter()
            .filter(move |(_, to)| to == id)
            .map(|(from, _)| from)
    }

    /// Whether `target` is reachable from `start` along one or more edges,
    /// or `start == target`.
    fn reaches(&self, start: &NodeId, target: &NodeId) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            if n == target {
                return true;
            }
            if seen.insert(n) {
                stack.extend(self.successors(n));
            }
        }
        false
    }

    /// Every node from which `id` is reachable, excluding `id` itself.
    pub fn upstream_set(&self, id: &NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
        if !self.nodes.contains_key(id) {
            return Err(GraphError::MissingNode(id.clone()));
        }
        let mut preds: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
        for (from, to) in &self.edges {
            preds.entry(to).or_default().push(from);
        }
        let mut out = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            for &p in preds.get(n).map(Vec::as_slice).unwrap_or_default() {
                if p != id && out.insert(p.clone()) {
                    stack.push(p);
                }
            }
        }
        Ok(out)
    }

    /// Checks every structural invariant and lists the violations found.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for (key, node) in &self.nodes {
            if key != &node.id {
                violations.push(Violation::IdMismatch {
                    key: key.clone(),
                    node: node.id.clone(),
                });
            }
            if node.label.is_empty() {
                violations.push(Violation::EmptyLabel {
                    node: key.clone(),
                });
            }
            if node.facets.keys().any(String::is_empty) {
                violations.push(Violation::EmptyFacetKey {
                    node: key.clone(),
                });
            }
        }
        if self.subjects.iter().any(String::is_empty) {
            violations.push(Violation::EmptySubject);
        }
        for (from, to) in &self.edges {
            let (Some(f), Some(t)) = (self.nodes.get(from), self.nodes.get(to)) else {
                violations.push(Violation::DanglingEdge {
                    from: from.clone(),
                    to: to.clone(),
                });
                continue;
            };
            if from == to {
                violations.push(Violation::SelfEdge { node: from.clone() });
            }
            if t.kind == NodeKind::Source {
                violations.push(Violation::SourceWithInbound {
                    node: to.clone(),
                    from: from.clone(),
                });
            }
            if f.kind == NodeKind::Sink {
                violations.push(Violation::SinkWithOutbound {
                    node: from.clone(),
                    to: to.clone(),
                });
            }
        }
        let cyclic = self.cyclic_nodes();
        if !cyclic.is_empty() {
            violations.push(Violation::Cycle { nodes: cyclic });
        }
        ValidationReport { violations }
    }

    /// Nodes that lie on a cycle of length >= 2. Self-edges are reported
    /// separately by `validate`.
    fn cyclic_nodes(&self) -> Vec<NodeId> {
        let live: Vec<(&NodeId, &NodeId)> = self
            .edges
            .iter()
            .filter(|(f, t)| f != t && self.nodes.contains_key(f) && self.nodes.contains_key(t))
            .map(|(f, t)| (f, t))
            .collect();
        // Peel sources and sinks repeatedly; what remains contains every cycle.
        let mut remaining: BTreeSet<&NodeId> = self.nodes.keys().collect();
        loop {
            let mut indeg: BTreeMap<&NodeId, usize> = BTreeMap::new();
            let mut outdeg: BTreeMap<&NodeId, usize> = BTreeMap::new();
            for &(f, t) in &live {
                if remaining.contains(f) && remaining.contains(t) {
                    *outdeg.entry(f).or_default() += 1;
                    *indeg.entry(t).or_default() += 1;
                }
            }
            let before = remaining.len();
            remaining.retain(|n| indeg.contains_key(n) && outdeg.contains_key(n));
            if remaining.len() == before {
                break;
            }
        }
        let mut succ: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
        for &(f, t) in &live {
            if remaining.contains(f) && remaining.contains(t) {
                succ.entry(f).or_default().push(t);
            }
        }
        remaining
            .iter()
            .filter(|&&n| {
                let mut seen = BTreeSet::new();
                let mut stack: Vec<&NodeId> = succ.get(n).cloned().unwrap_or_default();
                while let Some(m) = stack.pop() {
                    if m == n {
                        return true;
                    }
                    if seen.insert(m) {
                        stack.extend(succ.get(m).into_iter().flatten());
                    }
                }
                false
            })
            .map(|&n| n.clone())
            .collect()
    }

    /// Node ids in an order where every edge points forward.
    pub fn topological_order(&self) -> Vec<NodeId> {
        let mut indeg: BTreeMap<&NodeId, usize> = self.nodes.keys().map(|k| (k, 0)).collect();
        for (_, to) in &self.edges {
            if let Some(d) = indeg.get_mut(to) {
                *d += 1;
            }
        }
        let mut ready: VecDeque<&NodeId> =
            indeg.iter().filter(|(_, &d)| d == 0).map(|(&k, _)| k).collect();
        let mut out = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_front() {
            out.push(n.clone());
            for m in self.successors(n) {
                if let Some(d) = indeg.get_mut(m) {
                    *d -= 1;
                    if *d == 0 {
                        ready.push_back(m);
                    }
                }
            }
        }
        out
    }
}

/// Ids of nodes present in both models, regardless of node kind.
pub fn shared_processors(g1: &ModelGraph, g2: &ModelGraph) -> BTreeSet<NodeId> {
    let (small, large) = if g1.nodes.len() <= g2.nodes.len() {
        (g1, g2)
    } else {
        (g2, g1)
    };
    small
        .nodes
        .keys()
        .filter(|id| large.nodes.contains_key(*id))
        .cloned()
        .collect()
}

// Inline encoding: full node definitions, then edges as index pairs into
// the sorted node list, then subjects.
impl Canonical for ModelGraph {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.tag(Tag::ModelGraph);
        enc.str(&self.model_id);
        enc.len(self.nodes.len());
        for node in self.nodes.values() {
            node.encode_into(enc);
        }
        let index: BTreeMap<&NodeId, u32> = self
            .nodes
            .keys()
            .enumerate()
            .map(|(i, k)| (k, i as u32))
            .collect();
        encode_edges(enc, &self.edges, &index);
        encode_str_set(enc, &self.subjects);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.expect_tag(Tag::ModelGraph)?;
        let model_id = dec.str()?;
        let n = dec.count()?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            nodes.push(Node::decode_from(dec)?);
        }
        let ids: Vec<NodeId> = nodes.iter().map(|n| n.id.clone()).collect();
        ensure_ascending(&ids, "model nodes")?;
        let edges = decode_edges(dec, &ids)?;
        let subjects = decode_str_set(dec, "model subjects")?;
        Ok(ModelGraph {
            model_id,
            nodes: nodes.into_iter().map(|n| (n.id.clone(), n)).collect(),
            edges,
            subjects,
        })
    }
}

/// Edges as `(from, to)` index pairs into a sorted node list. Edges whose
/// endpoints are not in `index` cannot be represented and must have been
/// rejected by validation beforehand.
pub(crate) fn encode_edges(
    enc: &mut Encoder,
    edges: &BTreeSet<(NodeId, NodeId)>,
    index: &BTreeMap<&NodeId, u32>,
) {
    enc.len(edges.len());
    for (from, to) in edges {
        enc.u32(index[from]);
        enc.u32(index[to]);
    }
}

pub(crate) fn decode_edges(
    dec: &mut Decoder<'_>,
    ids: &[NodeId],
) -> Result<BTreeSet<(NodeId, NodeId)>, DecodeError> {
    let n = dec.count()?;
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        pairs.push((dec.u32()? as usize, dec.u32()? as usize));
    }
    ensure_ascending(&pairs, "model edges")?;
    pairs
        .into_iter()
        .map(|(f, t)| match (ids.get(f), ids.get(t)) {
            (Some(f), Some(t)) => Ok((f.clone(), t.clone())),
            _ => Err(DecodeError::Invalid(format!("edge index ({f}, {t}) out of range"))),
        })
        .collect()
}
