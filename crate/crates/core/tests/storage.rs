use std::collections::BTreeSet;

use proofgraph_core::encoding::Canonical;
use proofgraph_core::fixtures::{chain_workspace, documented_model, FIXTURE_TIMESTAMP};
use proofgraph_core::{CommitInfo, NodeId, ObjectId, Store, Workspace};

fn info(msg: &str, t: i64) -> CommitInfo {
    CommitInfo::new("tester", msg, t)
}

fn key_set(store: &Store) -> BTreeSet<ObjectId> {
    store.object_ids().unwrap().into_iter().collect()
}

#[test]
fn single_facet_edit_adds_four_objects() {
    let ws = Workspace::from_models([documented_model("big", 1000)]).unwrap();
    let mut store = Store::in_memory();
    let c0 = store.commit(&ws, &[], &info("base", 0)).unwrap();
    let before = key_set(&store);
    assert_eq!(before.len(), 1000 + 3);

    let mut edited = ws.clone();
    edited
        .set_facet(&NodeId::new("n00500").unwrap(), "revision", Some("1"))
        .unwrap();
    store.commit(&edited, &[c0], &info("edit", 1)).unwrap();
    let added: Vec<_> = key_set(&store).difference(&before).copied().collect();
    assert_eq!(added.len(), 4);
    let mut kinds: Vec<String> = added
        .iter()
        .map(|id| format!("{:?}", store.object_kind(id).unwrap()))
        .collect();
    kinds.sort();
    assert_eq!(kinds, ["Commit", "Model", "Node", "Tree"]);
}

#[test]
fn hundred_edits_stay_far_below_full_copies() {
    let mut ws = Workspace::from_models([documented_model("big", 1000)]).unwrap();
    let full = ws.canonical_bytes().len() as u64;
    let mut store = Store::in_memory();
    let mut head = store.commit(&ws, &[], &info("base", 0)).unwrap();
    for i in 0..100 {
        let node = NodeId::new(format!("n{:05}", (i * 37) % 1000)).unwrap();
        ws.set_facet(&node, "revision", Some(&(i + 1).to_string())).unwrap();
        head = store.commit(&ws, &[head], &info("edit", i as i64 + 1)).unwrap();
    }
    let stats = store.stats().unwrap();
    let naive = 100 * full;
    assert!(stats.object_count < 1003 + 4 * 100 + 1);
    assert!(
        naive >= 10 * stats.total_bytes,
        "naive {naive} vs stored {}",
        stats.total_bytes
    );
    assert_eq!(store.checkout(&head).unwrap(), ws);
}

#[test]
fn stats_are_monotone() {
    let mut store = Store::in_memory();
    let empty = store.stats().unwrap();
    assert_eq!((empty.object_count, empty.total_bytes), (0, 0));
    let mut ws = chain_workspace();
    let mut prev = empty;
    let mut parents = vec![];
    for t in 0..5 {
        ws.tag_subject("phi4", &format!("s{t}")).unwrap();
        let c = store.commit(&ws, &parents, &info("step", t)).unwrap();
        parents = vec![c];
        let now = store.stats().unwrap();
        assert!(now.object_count >= prev.object_count);
        assert!(now.total_bytes >= prev.total_bytes);
        prev = now;
    }
}

#[test]
fn directory_store_round_trip_and_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let ws = chain_workspace();
    let id = {
        let mut store = Store::init(dir.path().join("s")).unwrap();
        let id = store.commit(&ws, &[], &info("fixture", FIXTURE_TIMESTAMP)).unwrap();
        store.write_ref("main", &id).unwrap();
        id
    };
    let store = Store::open(dir.path().join("s")).unwrap();
    assert_eq!(store.resolve("main").unwrap(), id);
    assert_eq!(store.checkout(&id).unwrap(), ws);
    assert!(store.verify_objects().unwrap().is_empty());

    let commit = store.read_commit(&id).unwrap();
    let hex = commit.root.to_hex();
    let path = dir.path().join("s/objects").join(&hex[..2]).join(&hex[2..]);
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&path, bytes).unwrap();
    let err = store.checkout(&id).unwrap_err();
    assert!(err.is_corruption(), "{err:?}");
    assert_eq!(store.verify_objects().unwrap().len(), 1);
}
