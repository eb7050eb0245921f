//! A workspace: a set of models over one shared node catalog.
//!
//! The catalog is the single authority for node definitions. Every model
//! copy of a node equals its catalog entry, and the catalog holds exactly
//! the nodes referenced by at least one model.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::encoding::{
    decode_str_set, encode_str_set, ensure_ascending, Canonical, DecodeError, Decoder, Encoder, Tag,
};
use crate::model::{decode_edges, encode_edges, GraphError, ModelGraph, Node, NodeId, ValidationReport};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorkspaceError {
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("model {0:?} already exists")]
    DuplicateModel(String),
    #[error("model id must be nonempty")]
    InvalidModelId,
    #[error("node {0} conflicts with its existing catalog definition")]
    NodeConflict(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("model {model:?} is invalid: {} violation(s)", report.violations.len())]
    InvalidModel {
        model: String,
        report: ValidationReport,
    },
    #[error("facet keys must be nonempty")]
    InvalidFacetKey,
    #[error("model {model:?}: {source}")]
    Graph { model: String, source: GraphError },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Workspace {
    models: BTreeMap<String, ModelGraph>,
    catalog: BTreeMap<NodeId, Node>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a workspace from models, checking catalog consistency.
    pub fn from_models(models: impl IntoIterator<Item = ModelGraph>) -> Result<Self, WorkspaceError> {
        let mut ws = Workspace::new();
        for m in models {
            ws.insert_model(m)?;
        }
        Ok(ws)
    }

    pub fn models(&self) -> &BTreeMap<String, ModelGraph> {
        &self.models
    }

    pub fn model(&self, id: &str) -> Result<&ModelGraph, WorkspaceError> {
        self.models
            .get(id)
            .ok_or_else(|| WorkspaceError::UnknownModel(id.to_string()))
    }

    pub fn catalog(&self) -> &BTreeMap<NodeId, Node> {
        &self.catalog
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.catalog.get(id)
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    fn check_model(&self, model: &ModelGraph) -> Result<(), WorkspaceError> {
        if model.model_id.is_empty() {
            return Err(WorkspaceError::InvalidModelId);
        }
        let report = model.validate();
        if !report.is_clean() {
            return Err(WorkspaceError::InvalidModel {
                model: model.model_id.clone(),
                report,
            });
        }
        Ok(())
    }

    fn check_against_catalog(
        &self,
        model: &ModelGraph,
        ignore: Option<&str>,
    ) -> Result<(), WorkspaceError> {
        for node in model.nodes.values() {
            if let Some(existing) = self.catalog.get(&node.id) {
                // When replacing a model, nodes only it references may change.
                let shared_elsewhere = self
                    .models
                    .iter()
                    .any(|(id, m)| Some(id.as_str()) != ignore && m.contains_node(&node.id));
                if existing != node && shared_elsewhere {
                    return Err(WorkspaceError::NodeConflict(node.id.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn insert_model(&mut self, model: ModelGraph) -> Result<(), WorkspaceError> {
        self.check_model(&model)?;
        if self.models.contains_key(&model.model_id) {
            return Err(WorkspaceError::DuplicateModel(model.model_id));
        }
        self.check_against_catalog(&model, None)?;
        for node in model.nodes.values() {
            self.catalog.insert(node.id.clone(), node.clone());
        }
        self.models.insert(model.model_id.clone(), model);
        Ok(())
    }

    /// Inserts or replaces a model. Nodes shared with other models must keep
    /// their catalog definition.
    pub fn put_model(&mut self, model: ModelGraph) -> Result<(), WorkspaceError> {
        self.check_model(&model)?;
        self.check_against_catalog(&model, Some(&model.model_id))?;
        for node in model.nodes.values() {
            self.catalog.insert(node.id.clone(), node.clone());
        }
        self.models.insert(model.model_id.clone(), model);
        self.prune_catalog();
        Ok(())
    }

    pub fn remove_model(&mut self, id: &str) -> Result<ModelGraph, WorkspaceError> {
        let model = self
            .models
            .remove(id)
            .ok_or_else(|| WorkspaceError::UnknownModel(id.to_string()))?;
        self.prune_catalog();
        Ok(model)
    }

    fn prune_catalog(&mut self) {
        let models = &self.models;
        self.catalog
            .retain(|id, _| models.values().any(|m| m.contains_node(id)));
    }

    fn model_mut(&mut self, id: &str) -> Result<&mut ModelGraph, WorkspaceError> {
        self.models
            .get_mut(id)
            .ok_or_else(|| WorkspaceError::UnknownModel(id.to_string()))
    }

    /// Sets (`Some`) or clears (`None`) a facet on a node in every model
    /// that contains it.
    pub fn set_facet(
        &mut self,
        node: &NodeId,
        key: &str,
        value: Option<&str>,
    ) -> Result<(), WorkspaceError> {
        if key.is_empty() {
            return Err(WorkspaceError::InvalidFacetKey);
        }
        let mut def = self
            .catalog
            .get(node)
            .cloned()
            .ok_or_else(|| WorkspaceError::UnknownNode(node.clone()))?;
        match value {
            Some(v) => def.facets.insert(key.to_string(), v.to_string()),
            None => def.facets.remove(key),
        };
        self.replace_node(def)
    }

    /// Replaces a node definition everywhere. Atomic: if any model rejects
    /// the new definition, nothing changes.
    pub fn replace_node(&mut self, node: Node) -> Result<(), WorkspaceError> {
        if !self.catalog.contains_key(&node.id) {
            return Err(WorkspaceError::UnknownNode(node.id));
        }
        let mut updated = Vec::new();
        for (id, model) in &self.models {
            if model.contains_node(&node.id) {
                let mut m = model.clone();
                m.replace_node(node.clone()).map_err(|source| WorkspaceError::Graph {
                    model: id.clone(),
                    source,
                })?;
                updated.push(m);
            }
        }
        for m in updated {
            self.models.insert(m.model_id.clone(), m);
        }
        self.catalog.insert(node.id.clone(), node);
        Ok(())
    }

    /// Adds a node to a model. A node already in the catalog must be passed
    /// with its catalog definition.
    pub fn add_node(&mut self, model: &str, node: Node) -> Result<(), WorkspaceError> {
        if let Some(existing) = self.catalog.get(&node.id) {
            if existing != &node {
                return Err(WorkspaceError::NodeConflict(node.id));
            }
        }
        let m = self.model_mut(model)?;
        m.insert_node(node.clone()).map_err(|source| WorkspaceError::Graph {
            model: model.to_string(),
            source,
        })?;
        self.catalog.insert(node.id.clone(), node);
        Ok(())
    }

    pub fn remove_node(&mut self, model: &str, node: &NodeId) -> Result<(), WorkspaceError> {
        let m = self.model_mut(model)?;
        m.remove_node(node).map_err(|source| WorkspaceError::Graph {
            model: model.to_string(),
            source,
        })?;
        self.prune_catalog();
        Ok(())
    }

    pub fn add_edge(&mut self, model: &str, from: &NodeId, to: &NodeId) -> Result<(), WorkspaceError> {
        self.model_mut(model)?
            .insert_edge(from, to)
            .map_err(|source| WorkspaceError::Graph {
                model: model.to_string(),
                source,
            })
    }

    pub fn remove_edge(&mut self, model: &str, from: &NodeId, to: &NodeId) -> Result<(), WorkspaceError> {
        self.model_mut(model)?
            .remove_edge(from, to)
            .map_err(|source| WorkspaceError::Graph {
                model: model.to_string(),
                source,
            })
    }

    pub fn tag_subject(&mut self, model: &str, subject: &str) -> Result<(), WorkspaceError> {
        self.model_mut(model)?
            .insert_subject(subject)
            .map_err(|source| WorkspaceError::Graph {
                model: model.to_string(),
                source,
            })
    }

    pub fn untag_subject(&mut self, model: &str, subject: &str) -> Result<(), WorkspaceError> {
        self.model_mut(model)?.subjects.remove(subject);
        Ok(())
    }

    /// Models transitively forced into a clone of `model` through shared
    /// nodes: the connected component of `model` in the sharing relation.
    pub fn clone_chain(&self, model: &str) -> Result<BTreeSet<String>, WorkspaceError> {
        self.model(model)?;
        let mut users: BTreeMap<&NodeId, Vec<&str>> = BTreeMap::new();
        for (id, m) in &self.models {
            for n in m.node_ids() {
                users.entry(n).or_default().push(id);
            }
        }
        let mut chain = BTreeSet::from([model.to_string()]);
        let mut queue = VecDeque::from([model]);
        let mut visited_nodes = BTreeSet::new();
        while let Some(current) = queue.pop_front() {
            for n in self.models[current].node_ids() {
                if !visited_nodes.insert(n) {
                    continue;
                }
                for &other in &users[n] {
                    if chain.insert(other.to_string()) {
                        queue.push_back(other);
                    }
                }
            }
        }
        Ok(chain)
    }

    /// Partition of all models into clone chains, each chain sorted.
    pub fn clone_chains(&self) -> Vec<BTreeSet<String>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for id in self.models.keys() {
            if seen.contains(id) {
                continue;
            }
            let chain = self.clone_chain(id).expect("model exists");
            seen.extend(chain.iter().cloned());
            out.push(chain);
        }
        out
    }
}

// Catalog first (full node encodings), then each model as catalog indices,
// model-local edge index pairs and subjects.
impl Canonical for Workspace {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.tag(Tag::Workspace);
        enc.len(self.catalog.len());
        for node in self.catalog.values() {
            node.encode_into(enc);
        }
        let catalog_index: BTreeMap<&NodeId, u32> = self
            .catalog
            .keys()
            .enumerate()
            .map(|(i, k)| (k, i as u32))
            .collect();
        enc.len(self.models.len());
        for model in self.models.values() {
            enc.str(&model.model_id);
            enc.len(model.nodes.len());
            for id in model.nodes.keys() {
                enc.u32(catalog_index[id]);
            }
            let local: BTreeMap<&NodeId, u32> = model
                .nodes
                .keys()
                .enumerate()
                .map(|(i, k)| (k, i as u32))
                .collect();
            encode_edges(enc, &model.edges, &local);
            encode_str_set(enc, &model.subjects);
        }
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.expect_tag(Tag::Workspace)?;
        let n = dec.count()?;
        let mut catalog = Vec::with_capacity(n);
        for _ in 0..n {
            catalog.push(Node::decode_from(dec)?);
        }
        let ids: Vec<&NodeId> = catalog.iter().map(|n| &n.id).collect();
        ensure_ascending(&ids, "workspace catalog")?;
        let models_len = dec.count()?;
        let mut models = Vec::with_capacity(models_len);
        for _ in 0..models_len {
            let model_id = dec.str()?;
            let count = dec.count()?;
            let mut idx = Vec::with_capacity(count);
            for _ in 0..count {
                idx.push(dec.u32()? as usize);
            }
            ensure_ascending(&idx, "model node indices")?;
            let nodes = idx
                .iter()
                .map(|&i| {
                    catalog
                        .get(i)
                        .cloned()
                        .ok_or_else(|| DecodeError::Invalid(format!("catalog index {i} out of range")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let local: Vec<NodeId> = nodes.iter().map(|n| n.id.clone()).collect();
            let edges = decode_edges(dec, &local)?;
            let subjects = decode_str_set(dec, "model subjects")?;
            models.push(ModelGraph {
                model_id,
                nodes: nodes.into_iter().map(|n| (n.id.clone(), n)).collect(),
                edges,
                subjects,
            });
        }
        let ids: Vec<&String> = models.iter().map(|m| &m.model_id).collect();
        ensure_ascending(&ids, "workspace models")?;
        let ws = Workspace::from_models(models).map_err(|e| DecodeError::Invalid(e.to_string()))?;
        if ws.catalog.len() != catalog.len() {
            return Err(DecodeError::NonCanonical("catalog holds unreferenced nodes"));
        }
        Ok(ws)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NodeKind;

    fn id(s: &str) -> NodeId {
        NodeId::new(s).unwrap()
    }

    fn model(name: &str, nodes: &[&str]) -> ModelGraph {
        let mut g = ModelGraph::new(name);
        for n in nodes {
            g.insert_node(Node::new(id(n), NodeKind::Processor, *n)).unwrap();
        }
        for w in nodes.windows(2) {
            g.insert_edge(&id(w[0]), &id(w[1])).unwrap();
        }
        g
    }

    fn chain_fixture() -> Workspace {
        Workspace::from_models([
            model("phi1", &["a1", "P"]),
            model("phi2", &["P", "Q"]),
            model("phi3", &["Q", "c3"]),
            model("phi4", &["d4"]),
        ])
        .unwrap()
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn chain_follows_transitive_sharing() {
        let ws = chain_fixture();
        assert_eq!(ws.clone_chain("phi1").unwrap(), set(&["phi1", "phi2", "phi3"]));
        assert_eq!(ws.clone_chain("phi4").unwrap(), set(&["phi4"]));
        assert_eq!(
            ws.clone_chain("nope"),
            Err(WorkspaceError::UnknownModel("nope".into()))
        );
        assert_eq!(ws.clone_chains().len(), 2);
    }

    #[test]
    fn conflicting_node_definitions_rejected() {
        let mut ws = chain_fixture();
        let mut other = ModelGraph::new("phi5");
        other
            .insert_node(Node::new(id("P"), NodeKind::Processor, "different"))
            .unwrap();
        assert_eq!(ws.insert_model(other), Err(WorkspaceError::NodeConflict(id("P"))));
    }

    #[test]
    fn facet_edit_reaches_every_model() {
        let mut ws = chain_fixture();
        ws.set_facet(&id("P"), "owner", Some("alice")).unwrap();
        for m in ["phi1", "phi2"] {
            assert_eq!(ws.model(m).unwrap().node(&id("P")).unwrap().facets["owner"], "alice");
        }
        assert_eq!(ws.node(&id("P")).unwrap().facets["owner"], "alice");
        ws.set_facet(&id("P"), "owner", None).unwrap();
        assert!(ws.node(&id("P")).unwrap().facets.is_empty());
    }

    #[test]
    fn catalog_is_pruned() {
        let mut ws = chain_fixture();
        ws.remove_model("phi4").unwrap();
        assert!(ws.node(&id("d4")).is_none());
        ws.remove_node("phi1", &id("a1")).unwrap();
        assert!(ws.node(&id("a1")).is_none());
        assert!(ws.node(&id("P")).is_some());
    }

    #[test]
    fn replace_node_is_atomic() {
        let mut ws = chain_fixture();
        let before = ws.clone();
        // P has an inbound edge in phi1, so it cannot become a source.
        let bad = Node::new(id("P"), NodeKind::Source, "P");
        assert!(ws.replace_node(bad).is_err());
        assert_eq!(ws, before);
    }

    #[test]
    fn canonical_round_trip() {
        let mut ws = chain_fixture();
        ws.tag_subject("phi2", "value").unwrap();
        let bytes = ws.canonical_bytes();
        assert_eq!(Workspace::from_canonical_bytes(&bytes).unwrap(), ws);
        assert_eq!(
            Workspace::from_canonical_bytes(&Workspace::new().canonical_bytes()).unwrap(),
            Workspace::new()
        );
    }
}
