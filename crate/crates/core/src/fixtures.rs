//! Deterministic fixtures shared by the test suites and the `fixtures` CLI
//! command.

use std::collections::BTreeSet;

use crate::id::ObjectId;
use crate::model::{ModelGraph, Node, NodeId, NodeKind};
use crate::provenance::{ContributionDraft, ProvenanceError, ProvenanceLog};
use crate::store::{Backend, Store};
use crate::workspace::Workspace;

pub const FIXTURE_TIMESTAMP: i64 = 1_700_000_000;
pub const FIXTURE_AUTHOR: &str = "fixture";

fn nid(s: &str) -> NodeId {
    NodeId::new(s).expect("fixture ids are nonempty")
}

fn chain_model(id: &str, subjects: &[&str], nodes: &[Node]) -> ModelGraph {
    let mut g = ModelGraph::new(id);
    for n in nodes {
        g.insert_node(n.clone()).expect("fixture nodes are distinct");
    }
    for w in nodes.windows(2) {
        g.insert_edge(&w[0].id, &w[1].id).expect("fixture edges are valid");
    }
    for s in subjects {
        g.insert_subject(s).expect("fixture subjects are nonempty");
    }
    g
}

/// Four models: phi1 and phi2 share processor `P`, phi2 and phi3 share
/// processor `Q`, and phi4 shares nothing.
pub fn chain_workspace() -> Workspace {
    let p = Node::new(nid("P"), NodeKind::Processor, "price momentum")
        .with_param("window", "20")
        .with_facet("unit", "pct");
    let q = Node::new(nid("Q"), NodeKind::Processor, "value screen").with_param("metric", "pe");
    let src = |id: &str, label: &str| Node::new(nid(id), NodeKind::Source, label);
    let sink = |id: &str, label: &str| Node::new(nid(id), NodeKind::Sink, label);
    Workspace::from_models([
        chain_model(
            "phi1",
            &["momentum"],
            &[src("feed1", "daily prices"), p.clone(), sink("out1", "signal")],
        ),
        chain_model(
            "phi2",
            &["momentum", "value"],
            &[src("feed2", "fundamentals"), p, q.clone(), sink("out2", "blend")],
        ),
        chain_model("phi3", &["value"], &[src("feed3", "ratios"), q, sink("out3", "ranking")]),
        chain_model("phi4", &["macro"], &[src("feed4", "rates"), sink("out4", "regime")]),
    ])
    .expect("fixture workspace is valid")
}

/// Records six contributions c0..c5 by alice, bob, carol and dave against
/// `commit`, which must hold [`chain_workspace`]. Payloads are stored as
/// blobs.
pub fn record_sample_log<B: Backend>(
    store: &mut Store<B>,
    commit: &ObjectId,
) -> Result<ProvenanceLog, ProvenanceError> {
    // (author, model, node, upstream indices)
    const SCRIPT: [(&str, &str, &str, &[usize]); 6] = [
        ("alice", "phi1", "feed1", &[]),
        ("bob", "phi2", "P", &[0]),
        ("carol", "phi3", "Q", &[1]),
        ("dave", "phi2", "Q", &[0, 1]),
        ("alice", "phi3", "out3", &[2, 3]),
        ("bob", "phi4", "out4", &[1, 4]),
    ];
    let mut log = ProvenanceLog::new();
    let mut ids = Vec::new();
    for (i, (author, model, node, upstream)) in SCRIPT.iter().enumerate() {
        let payload = format!("{{\"contribution\":{i}}}");
        let payload_digest = store.put_blob(payload.as_bytes())?;
        let id = log.record(
            store,
            ContributionDraft {
                author: author.to_string(),
                model_id: model.to_string(),
                commit_id: *commit,
                node_id: nid(node),
                payload_digest,
                upstream: upstream.iter().map(|&u| ids[u]).collect::<BTreeSet<_>>(),
            },
        )?;
        ids.push(id);
    }
    Ok(log)
}

/// A node shaped like a documented processor in a production model: a
/// handful of parameters and descriptive facets.
pub fn documented_node(i: usize, kind: NodeKind) -> Node {
    Node::new(nid(&format!("n{i:05}")), kind, format!("rolling estimator {i}"))
        .with_param("window", (20 + i % 40).to_string())
        .with_param("method", ["ewma", "sma", "median"][i % 3])
        .with_param("decay", format!("0.{}", 90 + i % 9))
        .with_param("input", format!("series_{}", i.saturating_sub(1)))
        .with_param("output", format!("series_{i}"))
        .with_facet("owner", format!("desk-{}", i % 7))
        .with_facet("frequency", "daily")
        .with_facet("unit", "bp")
        .with_facet("revision", "0")
        .with_facet(
            "description",
            format!(
                "Estimator {i} smooths its input series over a trailing window, \
                 rejects observations outside five median absolute deviations, \
                 and forwards the result downstream. Missing observations are \
                 carried forward at most three periods before the output is \
                 marked stale for the reviewers of this model."
            ),
        )
}

/// A `n`-node model (n >= 2): one source, one sink, processors in between,
/// a backbone path plus skip edges every fifth node.
pub fn documented_model(model_id: &str, n: usize) -> ModelGraph {
    assert!(n >= 2, "documented_model needs at least two nodes");
    let mut g = ModelGraph::new(model_id);
    let kind = |i: usize| match i {
        0 => NodeKind::Source,
        _ if i == n - 1 => NodeKind::Sink,
        _ => NodeKind::Processor,
    };
    let ids: Vec<NodeId> = (0..n)
        .map(|i| {
            let node = documented_node(i, kind(i));
            let id = node.id.clone();
            g.insert_node(node).expect("distinct ids");
            id
        })
        .collect();
    for i in 1..n {
        g.insert_edge(&ids[i - 1], &ids[i]).expect("backbone edge");
        if i % 5 == 0 && i >= 10 && i != n - 1 {
            g.insert_edge(&ids[i - 10], &ids[i]).expect("skip edge");
        }
    }
    g.insert_subject("risk").expect("nonempty subject");
    g
}
