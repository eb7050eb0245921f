#![allow(dead_code)]

use proofgraph_core::{ModelGraph, Node, NodeId, NodeKind, Workspace};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn nid(s: &str) -> NodeId {
    NodeId::new(s).unwrap()
}

fn pool_kind(i: usize) -> NodeKind {
    match i {
        _ if i.is_multiple_of(7) => NodeKind::Source,
        _ if i % 11 == 10 => NodeKind::Sink,
        _ => NodeKind::Processor,
    }
}

fn pool_node(rng: &mut StdRng, i: usize) -> Node {
    let mut node = Node::new(nid(&format!("p{i:02}")), pool_kind(i), format!("node {i}"));
    for k in 0..rng.gen_range(0..3) {
        node.facets.insert(format!("k{k}"), rng.gen_range(0..3).to_string());
    }
    node
}

/// A valid workspace over a pool of at most `max_nodes` shareable nodes.
/// Edges always point from a lower to a higher pool index, so every model
/// is acyclic.
pub fn random_workspace(rng: &mut StdRng, max_models: usize, max_nodes: usize) -> Workspace {
    let pool: Vec<Node> = (0..rng.gen_range(1..=max_nodes))
        .map(|i| pool_node(rng, i))
        .collect();
    let mut models = Vec::new();
    for m in 0..rng.gen_range(1..=max_models) {
        let mut g = ModelGraph::new(format!("m{m:02}"));
        let mut picked: Vec<usize> = (0..pool.len()).collect();
        picked.shuffle(rng);
        picked.truncate(rng.gen_range(0..=4.min(pool.len())));
        picked.sort();
        for &i in &picked {
            g.insert_node(pool[i].clone()).unwrap();
        }
        for (x, &a) in picked.iter().enumerate() {
            for &b in &picked[x + 1..] {
                if rng.gen_bool(0.4) {
                    let _ = g.insert_edge(&pool[a].id, &pool[b].id);
                }
            }
        }
        for s in 0..4 {
            if rng.gen_bool(0.3) {
                g.insert_subject(&format!("s{s}")).unwrap();
            }
        }
        models.push(g);
    }
    Workspace::from_models(models).unwrap()
}

fn pick<'a, T>(rng: &mut StdRng, items: &'a [T]) -> Option<&'a T> {
    items.choose(rng)
}

/// Applies between one and four random valid edits. Edits that the
/// workspace rejects are skipped.
pub fn random_edit(rng: &mut StdRng, ws: &Workspace, tag: &str) -> Workspace {
    let mut out = ws.clone();
    for step in 0..rng.gen_range(1..=4) {
        let models: Vec<String> = out.models().keys().cloned().collect();
        let nodes: Vec<NodeId> = out.catalog().keys().cloned().collect();
        match rng.gen_range(0..9) {
            0 | 1 => {
                if let Some(n) = pick(rng, &nodes) {
                    let key = format!("k{}", rng.gen_range(0..3));
                    let value = rng.gen_range(0..4).to_string();
                    let _ = out.set_facet(n, &key, Some(&value));
                }
            }
            2 => {
                if let Some(n) = pick(rng, &nodes) {
                    let key = format!("k{}", rng.gen_range(0..3));
                    let _ = out.set_facet(n, &key, None);
                }
            }
            3 => {
                if let Some(m) = pick(rng, &models) {
                    let node = Node::new(nid(&format!("{tag}{step}")), NodeKind::Processor, "new");
                    let _ = out.add_node(m, node);
                }
            }
            4 => {
                if let Some(m) = pick(rng, &models) {
                    let members: Vec<NodeId> = out.model(m).unwrap().nodes.keys().cloned().collect();
                    if let Some(n) = pick(rng, &members) {
                        let _ = out.remove_node(m, n);
                    }
                }
            }
            5 => {
                if let Some(m) = pick(rng, &models) {
                    let members: Vec<NodeId> = out.model(m).unwrap().nodes.keys().cloned().collect();
                    if let (Some(a), Some(b)) = (pick(rng, &members), pick(rng, &members)) {
                        let (a, b) = (a.clone(), b.clone());
                        if out.model(m).unwrap().edges.contains(&(a.clone(), b.clone())) {
                            let _ = out.remove_edge(m, &a, &b);
                        } else {
                            let _ = out.add_edge(m, &a, &b);
                        }
                    }
                }
            }
            6 => {
                if let Some(m) = pick(rng, &models) {
                    let s = format!("s{}", rng.gen_range(0..4));
                    if out.model(m).unwrap().subjects.contains(&s) {
                        let _ = out.untag_subject(m, &s);
                    } else {
                        let _ = out.tag_subject(m, &s);
                    }
                }
            }
            7 => {
                let _ = out.insert_model(ModelGraph::new(format!("{tag}model{step}")));
            }
            _ => {
                if let Some(m) = pick(rng, &models) {
                    let _ = out.remove_model(m);
                }
            }
        }
    }
    out
}

pub struct LogFixture {
    pub store: proofgraph_core::Store,
    pub log: proofgraph_core::provenance::ProvenanceLog,
}

/// A store with two commits of five four-node path models, and a log of
/// `n` contributions with at most `max_edges` upstream links in total.
/// Authors come from a pool of five and subjects vary between commits.
pub fn random_log(rng: &mut StdRng, n: usize, max_edges: usize) -> LogFixture {
    use proofgraph_core::provenance::{ContributionDraft, ProvenanceLog};
    use proofgraph_core::{CommitInfo, ObjectId, Store};
    use std::collections::BTreeSet;

    let mut store = Store::in_memory();
    let mut commits = Vec::new();
    for round in 0..2 {
        let models = (0..5).map(|m| {
            let mut g = ModelGraph::new(format!("m{m}"));
            for j in 0..4 {
                g.insert_node(Node::new(nid(&format!("m{m}n{j}")), NodeKind::Processor, "p"))
                    .unwrap();
            }
            for j in 1..4 {
                g.insert_edge(&nid(&format!("m{m}n{}", j - 1)), &nid(&format!("m{m}n{j}")))
                    .unwrap();
            }
            for s in 0..4 {
                if rng.gen_bool(0.35) {
                    g.insert_subject(&format!("s{s}")).unwrap();
                }
            }
            g
        });
        let ws = Workspace::from_models(models).unwrap();
        let parents: Vec<ObjectId> = commits.last().copied().into_iter().collect();
        commits.push(store.commit(&ws, &parents, &CommitInfo::new("gen", "r", round)).unwrap());
    }
    let mut log = ProvenanceLog::new();
    let mut meta: Vec<(ObjectId, String, ObjectId, usize)> = Vec::new();
    let mut edges_left = max_edges;
    for i in 0..n {
        let commit = commits[rng.gen_range(0..2)];
        let m = rng.gen_range(0..5);
        let model = format!("m{m}");
        let j = rng.gen_range(0..4);
        let allowed: Vec<ObjectId> = meta
            .iter()
            .filter(|(_, pm, pc, pj)| *pm != model || *pc != commit || *pj < j)
            .map(|(id, ..)| *id)
            .collect();
        let want = rng.gen_range(0..=allowed.len().min(6)).min(edges_left);
        let upstream: BTreeSet<ObjectId> = allowed.choose_multiple(rng, want).copied().collect();
        edges_left -= upstream.len();
        let payload = store.put_blob(format!("payload {i}").as_bytes()).unwrap();
        let id = log
            .record(
                &store,
                ContributionDraft {
                    author: format!("user{}", rng.gen_range(0..5)),
                    model_id: model.clone(),
                    commit_id: commit,
                    node_id: nid(&format!("m{m}n{j}")),
                    payload_digest: payload,
                    upstream,
                },
            )
            .unwrap();
        meta.push((id, model, commit, j));
    }
    LogFixture { store, log }
}
