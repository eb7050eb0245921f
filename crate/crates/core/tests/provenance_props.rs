mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::random_log;
use proofgraph_core::provenance::{ContributionGraph, FindingKind, ProvenanceLog};
use proofgraph_core::ObjectId;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};

fn has_cycle(g: &ContributionGraph) -> bool {
    let mut adj: BTreeMap<ObjectId, Vec<ObjectId>> = BTreeMap::new();
    for (a, b) in &g.edges {
        adj.entry(*a).or_default().push(*b);
    }
    fn visit(
        n: ObjectId,
        adj: &BTreeMap<ObjectId, Vec<ObjectId>>,
        state: &mut BTreeMap<ObjectId, u8>,
    ) -> bool {
        state.insert(n, 1);
        for &m in adj.get(&n).into_iter().flatten() {
            match state.get(&m).copied() {
                Some(1) => return true,
                None if visit(m, adj, state) => return true,
                _ => {}
            }
        }
        state.insert(n, 2);
        false
    }
    let mut state = BTreeMap::new();
    g.vertices
        .iter()
        .any(|&v| !state.contains_key(&v) && visit(v, &adj, &mut state))
}

#[test]
fn recorded_logs_chain_and_order_correctly() {
    let mut rng = StdRng::seed_from_u64(21);
    for _ in 0..20 {
        let fx = random_log(&mut rng, 50, 200);
        let log = &fx.log;
        assert_eq!(log.len(), 50);
        let mut prev = [0u8; 32];
        let mut seen = BTreeMap::new();
        for (i, e) in log.entries().iter().enumerate() {
            let c = &e.contribution;
            assert_eq!(c.seq, i as u64);
            for u in &c.upstream {
                assert!(seen[u] < c.seq, "upstream must precede");
            }
            let mut h = Sha256::new();
            h.update(prev);
            h.update(c.id.as_bytes());
            prev = h.finalize().into();
            assert_eq!(e.chain.as_bytes(), &prev);
            seen.insert(c.id, c.seq);
        }
        assert_eq!(log.head_digest().as_bytes(), &prev);
        assert!(log.verify().is_clean());
    }
}

#[test]
fn derived_graph_is_enumerated_and_acyclic() {
    let mut rng = StdRng::seed_from_u64(22);
    assert_eq!(ProvenanceLog::new().derive_graph().unwrap(), ContributionGraph::default());
    for _ in 0..100 {
        let n = rng.gen_range(0..40);
        let fx = random_log(&mut rng, n, 150);
        let g = fx.log.derive_graph().unwrap();
        let mut edges = BTreeSet::new();
        for c in fx.log.contributions() {
            for u in &c.upstream {
                edges.insert((c.id, *u));
            }
        }
        assert_eq!(g.edges, edges);
        assert_eq!(g.vertices.len(), n);
        assert!(!has_cycle(&g));
        assert_eq!(fx.log.derive_graph().unwrap(), g);
    }
}

#[test]
fn every_single_byte_mutation_is_detected() {
    let mut rng = StdRng::seed_from_u64(23);
    let mut misses = 0;
    for _ in 0..100 {
        let fx = random_log(&mut rng, 12, 40);
        let text = fx.log.to_jsonl();
        let parsed = ProvenanceLog::from_jsonl(&text).unwrap();
        assert_eq!(parsed.entries(), fx.log.entries());
        assert!(ProvenanceLog::verify_bytes(text.as_bytes()).is_clean());

        let mut bytes = text.into_bytes();
        let at = rng.gen_range(0..bytes.len());
        let line = bytes[..at].iter().filter(|&&b| b == b'\n').count();
        let old = bytes[at];
        let mut new = rng.gen::<u8>();
        while new == old {
            new = rng.gen();
        }
        bytes[at] = new;
        let report = ProvenanceLog::verify_bytes(&bytes);
        match report.first_divergence {
            Some(f) => assert_eq!(f.position, line, "{:?}", f.kind),
            None => misses += 1,
        }
    }
    assert_eq!(misses, 0);
}

#[test]
fn field_tamper_is_located() {
    let mut rng = StdRng::seed_from_u64(24);
    let fx = random_log(&mut rng, 8, 20);
    let mut entries = fx.log.clone().into_entries();
    let mut digest = *entries[3].contribution.payload_digest.as_bytes();
    digest[0] ^= 0x01;
    entries[3].contribution.payload_digest = ObjectId::from_bytes(digest);
    let report = ProvenanceLog::from_entries(entries).verify();
    let finding = report.first_divergence.unwrap();
    assert_eq!(finding.position, 3);
    assert_eq!(finding.kind, FindingKind::IdMismatch);
    assert_eq!(report.entries_checked, 3);
}
