//! Three-way merge of workspaces over element-level edit sets.
//!
//! A workspace is flattened into a map of elements (models, model
//! membership, edges, subjects, node definitions, facets). Each element is
//! merged independently: a change on one side wins over an unchanged
//! other side, identical changes apply once, and different changes to the
//! same element conflict. Two further checks run on top:
//!
//! - removing a node (or model) on one side while the other side edits
//!   something that refers to it is a conflict, not a silent drop;
//! - the merged result must satisfy the model invariants (acyclic,
//!   kind-consistent, no dangling edges), otherwise the offending edges are
//!   reported.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::id::ObjectId;
use crate::model::{ModelGraph, Node, NodeId, NodeKind, Violation};
use crate::workspace::Workspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Model,
    Node,
    Edge,
    Facet,
    Subject,
}

/// One merge conflict. `ids` names the element (for example
/// `[node, facet-key]` or `[model, from, to]`); `ours`/`theirs` describe
/// each side's version, `None` meaning absent or removed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Conflict {
    pub element: ElementKind,
    pub ids: Vec<String>,
    pub ours: Option<String>,
    pub theirs: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MergeResult {
    Merged {
        workspace: Workspace,
        commit: ObjectId,
    },
    /// Always non-empty, sorted by element and ids.
    Conflicts(Vec<Conflict>),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Model(String),
    Member(String, NodeId),
    Edge(String, NodeId, NodeId),
    Subject(String, String),
    NodeDef(NodeId),
    Facet(NodeId, String),
}

impl Key {
    fn model(&self) -> Option<&str> {
        match self {
            Key::Model(m) | Key::Member(m, _) | Key::Edge(m, _, _) | Key::Subject(m, _) => Some(m),
            Key::NodeDef(_) | Key::Facet(_, _) => None,
        }
    }

    fn mentions(&self, node: &NodeId) -> bool {
        match self {
            Key::Member(_, n) | Key::NodeDef(n) | Key::Facet(n, _) => n == node,
            Key::Edge(_, f, t) => f == node || t == node,
            Key::Model(_) | Key::Subject(_, _) => false,
        }
    }

    fn describe(&self) -> (ElementKind, Vec<String>) {
        match self {
            Key::Model(m) => (ElementKind::Model, vec![m.clone()]),
            Key::Member(m, n) => (ElementKind::Node, vec![m.clone(), n.to_string()]),
            Key::Edge(m, f, t) => (ElementKind::Edge, vec![m.clone(), f.to_string(), t.to_string()]),
            Key::Subject(m, s) => (ElementKind::Subject, vec![m.clone(), s.clone()]),
            Key::NodeDef(n) => (ElementKind::Node, vec![n.to_string()]),
            Key::Facet(n, k) => (ElementKind::Facet, vec![n.to_string(), k.clone()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Value {
    Present,
    Def {
        kind: NodeKind,
        label: String,
        params: BTreeMap<String, String>,
    },
    Facet(String),
}

impl Value {
    fn render(&self) -> String {
        match self {
            Value::Present => "present".to_string(),
            Value::Facet(v) => v.clone(),
            Value::Def {
                kind,
                label,
                params,
            } => {
                let mut s = format!("{kind} {label}");
                for (k, v) in params {
                    s.push_str(&format!(" {k}={v}"));
                }
                s
            }
        }
    }
}

type Elements = BTreeMap<Key, Value>;

fn elements(ws: &Workspace) -> Elements {
    let mut out = Elements::new();
    for (id, node) in ws.catalog() {
        out.insert(
            Key::NodeDef(id.clone()),
            Value::Def {
                kind: node.kind,
                label: node.label.clone(),
                params: node.params.clone(),
            },
        );
        for (k, v) in &node.facets {
            out.insert(Key::Facet(id.clone(), k.clone()), Value::Facet(v.clone()));
        }
    }
    for (m, model) in ws.models() {
        out.insert(Key::Model(m.clone()), Value::Present);
        for n in model.node_ids() {
            out.insert(Key::Member(m.clone(), n.clone()), Value::Present);
        }
        for (f, t) in &model.edges {
            out.insert(Key::Edge(m.clone(), f.clone(), t.clone()), Value::Present);
        }
        for s in &model.subjects {
            out.insert(Key::Subject(m.clone(), s.clone()), Value::Present);
        }
    }
    out
}

/// Keys that `side` added or changed relative to `base` (removals excluded).
fn touched<'a>(base: &'a Elements, side: &'a Elements) -> impl Iterator<Item = &'a Key> + 'a {
    side.iter()
        .filter(move |(k, v)| base.get(*k) != Some(*v))
        .map(|(k, _)| k)
}

fn render(v: Option<&Value>) -> Option<String> {
    v.map(Value::render)
}

/// Merges `ours` and `theirs` against `base`. Returns the merged workspace
/// or the sorted, non-empty list of conflicts.
pub fn merge_workspaces(
    base: &Workspace,
    ours: &Workspace,
    theirs: &Workspace,
) -> Result<Workspace, Vec<Conflict>> {
    let eb = elements(base);
    let eo = elements(ours);
    let et = elements(theirs);
    let mut conflicts = Vec::new();

    // Remove-vs-use on nodes and models.
    let mut blocked_nodes = BTreeSet::new();
    let mut blocked_models = BTreeSet::new();
    for key in eb.keys() {
        let removed_o = !eo.contains_key(key);
        let removed_t = !et.contains_key(key);
        if removed_o == removed_t {
            continue;
        }
        let user = if removed_o { &et } else { &eo };
        match key {
            Key::NodeDef(n) => {
                if touched(&eb, user).any(|k| k.mentions(n)) {
                    blocked_nodes.insert(n.clone());
                    conflicts.push(Conflict {
                        element: ElementKind::Node,
                        ids: vec![n.to_string()],
                        ours: render(eo.get(key)),
                        theirs: render(et.get(key)),
                    });
                }
            }
            Key::Model(m) if touched(&eb, user).any(|k| k.model() == Some(m.as_str())) => {
                blocked_models.insert(m.clone());
                conflicts.push(Conflict {
                    element: ElementKind::Model,
                    ids: vec![m.clone()],
                    ours: render(eo.get(key)),
                    theirs: render(et.get(key)),
                });
            }
            _ => {}
        }
    }

    let all_keys: BTreeSet<&Key> = eb.keys().chain(eo.keys()).chain(et.keys()).collect();
    let mut merged = Elements::new();
    for key in all_keys {
        if key.model().is_some_and(|m| blocked_models.contains(m))
            || blocked_nodes.iter().any(|n| key.mentions(n))
        {
            continue;
        }
        let (b, o, t) = (eb.get(key), eo.get(key), et.get(key));
        let chosen = if o == t || t == b {
            o
        } else if o == b {
            t
        } else {
            let (element, ids) = key.describe();
            conflicts.push(Conflict {
                element,
                ids,
                ours: render(o),
                theirs: render(t),
            });
            continue;
        };
        if let Some(v) = chosen {
            merged.insert(key.clone(), v.clone());
        }
    }

    if conflicts.is_empty() {
        match rebuild(&merged, &eo, &et) {
            Ok(ws) => return Ok(ws),
            Err(found) => conflicts = found,
        }
    }
    conflicts.sort();
    conflicts.dedup();
    Err(conflicts)
}

fn presence(side: &Elements, key: &Key) -> Option<String> {
    render(side.get(key))
}

/// Materialises a merged element map, reporting invariant violations.
fn rebuild(merged: &Elements, eo: &Elements, et: &Elements) -> Result<Workspace, Vec<Conflict>> {
    let mut conflicts = Vec::new();
    let mut defs: BTreeMap<NodeId, Node> = BTreeMap::new();
    let mut models: BTreeMap<String, ModelGraph> = BTreeMap::new();
    for (key, value) in merged {
        match (key, value) {
            (Key::NodeDef(n), Value::Def { kind, label, params }) => {
                let mut node = Node::new(n.clone(), *kind, label.clone());
                node.params = params.clone();
                defs.insert(n.clone(), node);
            }
            (Key::Model(m), _) => {
                models.insert(m.clone(), ModelGraph::new(m.clone()));
            }
            _ => {}
        }
    }
    let mut missing = |key: &Key| {
        let (element, ids) = key.describe();
        conflicts.push(Conflict {
            element,
            ids,
            ours: presence(eo, key),
            theirs: presence(et, key),
        });
    };
    for (key, value) in merged {
        match (key, value) {
            (Key::Facet(n, k), Value::Facet(v)) => match defs.get_mut(n) {
                Some(node) => {
                    node.facets.insert(k.clone(), v.clone());
                }
                None => missing(key),
            },
            (Key::Member(m, n), _) => match (models.get_mut(m), defs.get(n)) {
                (Some(model), Some(def)) => {
                    model.nodes.insert(n.clone(), def.clone());
                }
                _ => missing(key),
            },
            (Key::Edge(m, f, t), _) => match models.get_mut(m) {
                Some(model) => {
                    model.edges.insert((f.clone(), t.clone()));
                }
                None => missing(key),
            },
            (Key::Subject(m, s), _) => match models.get_mut(m) {
                Some(model) => {
                    model.subjects.insert(s.clone());
                }
                None => missing(key),
            },
            _ => {}
        }
    }
    // Facets were attached after membership copies were taken; refresh.
    for model in models.values_mut() {
        for (id, node) in model.nodes.iter_mut() {
            *node = defs[id].clone();
        }
    }
    for (m, model) in &models {
        for violation in model.validate().violations {
            conflicts.push(violation_conflict(m, model, &violation, eo, et));
        }
    }
    if !conflicts.is_empty() {
        return Err(conflicts);
    }
    Workspace::from_models(models.into_values()).map_err(|e| {
        vec![Conflict {
            element: ElementKind::Model,
            ids: vec![e.to_string()],
            ours: None,
            theirs: None,
        }]
    })
}

fn violation_conflict(
    model_id: &str,
    model: &ModelGraph,
    violation: &Violation,
    eo: &Elements,
    et: &Elements,
) -> Conflict {
    let edge_conflict = |from: &NodeId, to: &NodeId| {
        let key = Key::Edge(model_id.to_string(), from.clone(), to.clone());
        Conflict {
            element: ElementKind::Edge,
            ids: vec![model_id.to_string(), from.to_string(), to.to_string()],
            ours: presence(eo, &key),
            theirs: presence(et, &key),
        }
    };
    match violation {
        Violation::DanglingEdge { from, to } => edge_conflict(from, to),
        Violation::SourceWithInbound { node, from } => edge_conflict(from, node),
        Violation::SinkWithOutbound { node, to } => edge_conflict(node, to),
        Violation::SelfEdge { node } => edge_conflict(node, node),
        Violation::Cycle { nodes } => {
            let on_cycle: BTreeSet<&NodeId> = nodes.iter().collect();
            let cycle_edges: Vec<&(NodeId, NodeId)> = model
                .edges
                .iter()
                .filter(|(f, t)| on_cycle.contains(f) && on_cycle.contains(t))
                .collect();
            let side_edges = |side: &Elements| {
                let listed: Vec<String> = cycle_edges
                    .iter()
                    .filter(|(f, t)| side.contains_key(&Key::Edge(model_id.to_string(), f.clone(), t.clone())))
                    .map(|(f, t)| format!("{f}->{t}"))
                    .collect();
                (!listed.is_empty()).then(|| listed.join(","))
            };
            let mut ids = vec![model_id.to_string()];
            ids.extend(nodes.iter().map(NodeId::to_string));
            Conflict {
                element: ElementKind::Edge,
                ids,
                ours: side_edges(eo),
                theirs: side_edges(et),
            }
        }
        other => Conflict {
            element: ElementKind::Node,
            ids: vec![model_id.to_string(), format!("{other:?}")],
            ours: None,
            theirs: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> NodeId {
        NodeId::new(s).unwrap()
    }

    fn base() -> Workspace {
        let mut g = ModelGraph::new("m");
        for n in ["a", "b", "c"] {
            g.insert_node(Node::new(id(n), NodeKind::Processor, n)).unwrap();
        }
        g.insert_edge(&id("a"), &id("b")).unwrap();
        Workspace::from_models([g]).unwrap()
    }

    #[test]
    fn identical_branches() {
        let b = base();
        let mut x = b.clone();
        x.set_facet(&id("a"), "f", Some("1")).unwrap();
        assert_eq!(merge_workspaces(&b, &x, &x).unwrap(), x);
        assert_eq!(merge_workspaces(&b, &x, &b).unwrap(), x);
        assert_eq!(merge_workspaces(&b, &b, &x).unwrap(), x);
    }

    #[test]
    fn disjoint_facets_both_apply() {
        let b = base();
        let mut o = b.clone();
        o.set_facet(&id("a"), "f", Some("1")).unwrap();
        let mut t = b.clone();
        t.set_facet(&id("b"), "g", Some("2")).unwrap();
        let m = merge_workspaces(&b, &o, &t).unwrap();
        assert_eq!(m.node(&id("a")).unwrap().facets["f"], "1");
        assert_eq!(m.node(&id("b")).unwrap().facets["g"], "2");
        assert_eq!(m.model("m").unwrap().node(&id("b")).unwrap().facets["g"], "2");
    }

    #[test]
    fn same_facet_different_values_conflicts() {
        let b = base();
        let mut o = b.clone();
        o.set_facet(&id("a"), "f", Some("1")).unwrap();
        let mut t = b.clone();
        t.set_facet(&id("a"), "f", Some("2")).unwrap();
        assert_eq!(
            merge_workspaces(&b, &o, &t).unwrap_err(),
            vec![Conflict {
                element: ElementKind::Facet,
                ids: vec!["a".into(), "f".into()],
                ours: Some("1".into()),
                theirs: Some("2".into()),
            }]
        );
    }

    #[test]
    fn remove_vs_use_conflicts() {
        let b = base();
        let mut o = b.clone();
        o.remove_node("m", &id("c")).unwrap();
        let mut t = b.clone();
        t.add_edge("m", &id("b"), &id("c")).unwrap();
        let conflicts = merge_workspaces(&b, &o, &t).unwrap_err();
        assert_eq!(conflicts.len(), 1);
        assert_eq!(conflicts[0].element, ElementKind::Node);
        assert_eq!(conflicts[0].ids, vec!["c".to_string()]);
        assert_eq!(conflicts[0].ours, None);
    }

    #[test]
    fn merged_cycle_is_reported() {
        let b = base();
        let mut o = b.clone();
        o.add_edge("m", &id("b"), &id("c")).unwrap();
        let mut t = b.clone();
        t.add_edge("m", &id("c"), &id("a")).unwrap();
        let conflicts = merge_workspaces(&b, &o, &t).unwrap_err();
        assert_eq!(
            conflicts,
            vec![Conflict {
                element: ElementKind::Edge,
                ids: vec!["m".into(), "a".into(), "b".into(), "c".into()],
                ours: Some("a->b,b->c".into()),
                theirs: Some("a->b,c->a".into()),
            }]
        );
        let swapped = merge_workspaces(&b, &t, &o).unwrap_err();
        assert_eq!(swapped[0].ours, conflicts[0].theirs);
    }

    #[test]
    fn model_removed_vs_edited() {
        let b = base();
        let mut o = b.clone();
        o.remove_model("m").unwrap();
        let mut t = b.clone();
        t.tag_subject("m", "s").unwrap();
        let conflicts = merge_workspaces(&b, &o, &t).unwrap_err();
        assert_eq!(conflicts.len(), 1);
        assert_eq!(conflicts[0].element, ElementKind::Model);
    }
}
