use std::collections::BTreeSet;

use proofgraph_core::pipeline::{
    run, validate_pipeline, Comparator, ControlPoint, PipelineError, ProofPipeline, Step,
    TransformSpec, Verdict,
};
use proofgraph_core::provenance::ProvenanceLog;
use proofgraph_core::{CommitInfo, ModelGraph, Node, NodeId, NodeKind, ObjectId, Store, Workspace};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn nid(i: usize) -> NodeId {
    NodeId::new(format!("s{i}")).unwrap()
}

fn path_store() -> (Store, ObjectId) {
    let mut g = ModelGraph::new("path");
    for i in 0..10 {
        g.insert_node(Node::new(nid(i), NodeKind::Processor, format!("stage {i}")))
            .unwrap();
    }
    for i in 1..10 {
        g.insert_edge(&nid(i - 1), &nid(i)).unwrap();
    }
    g.insert_subject("proof").unwrap();
    let mut store = Store::in_memory();
    let c = store
        .commit(&Workspace::from_models([g]).unwrap(), &[], &CommitInfo::new("t", "m", 0))
        .unwrap();
    (store, c)
}

/// Steps 0..len-1 add one to `x`; the last step classifies `x >= bound`
/// into `final`. The control point at `fail_at` can never pass.
fn scripted(commit: ObjectId, len: usize, fail_at: Option<usize>, bound: u32) -> ProofPipeline {
    let steps = (0..len)
        .map(|k| {
            let transform = if k + 1 == len {
                TransformSpec::new("classify")
                    .with("field", "x")
                    .with("cmp", "ge")
                    .with("bound", bound.to_string())
            } else {
                TransformSpec::new("fold")
                    .with("fields", "x,inc")
                    .with("into", "x")
            };
            let validator = if fail_at == Some(k) {
                ControlPoint::threshold("x", Comparator::Lt, 0.0).unwrap()
            } else {
                ControlPoint::threshold("x", Comparator::Ge, 0.0).unwrap()
            };
            Step {
                node_id: nid(k),
                transform,
                validator,
            }
        })
        .collect();
    ProofPipeline {
        pipeline_id: format!("scripted-{len}"),
        model_id: "path".into(),
        commit_id: commit,
        steps,
    }
}

const INPUT: &[u8] = br#"{"inc":1,"x":0}"#;

fn assert_path(log: &ProvenanceLog, evidence: &[ObjectId]) {
    for (k, id) in evidence.iter().enumerate() {
        let c = log.get(id).expect("evidence is in the log");
        let expected: BTreeSet<ObjectId> = k.checked_sub(1).map(|p| evidence[p]).into_iter().collect();
        assert_eq!(c.upstream, expected);
        assert_eq!(c.node_id, nid(k));
        assert!(c.subjects.contains("proof"));
    }
    let g = log.derive_graph().unwrap();
    for w in evidence.windows(2) {
        assert!(g.edges.contains(&(w[1], w[0])));
    }
}

#[test]
fn forced_failures_halt_at_their_step() {
    let (mut store, c) = path_store();
    for len in 1..=10 {
        for fail in 0..len {
            let mut log = ProvenanceLog::new();
            let p = scripted(c, len, Some(fail), 0);
            assert!(validate_pipeline(&p, &store).is_clean());
            let out = run(&p, INPUT, &mut store, &mut log, "alice").unwrap();
            assert_eq!(out.verdict, Verdict::Halted(fail));
            assert_eq!(out.evidence.len(), fail + 1);
            assert_eq!(log.len(), fail + 1);
            assert_path(&log, &out.evidence);
        }
    }
}

#[test]
fn all_pass_pipelines_return_the_final_boolean() {
    let (mut store, c) = path_store();
    for len in 1..=10 {
        for bound in 0..=10u32 {
            let mut log = ProvenanceLog::new();
            let out = run(&scripted(c, len, None, bound), INPUT, &mut store, &mut log, "bob").unwrap();
            let x = (len - 1) as u32;
            let expected = if x >= bound { Verdict::True } else { Verdict::False };
            assert_eq!(out.verdict, expected, "len {len} bound {bound}");
            assert_eq!(out.evidence.len(), len);
            assert_path(&log, &out.evidence);
        }
    }
}

#[test]
fn replay_is_deterministic() {
    let (mut store, c) = path_store();
    let p = scripted(c, 6, Some(4), 0);
    let mut a = ProvenanceLog::new();
    let mut b = ProvenanceLog::new();
    let ra = run(&p, INPUT, &mut store, &mut a, "carol").unwrap();
    let rb = run(&p, INPUT, &mut store, &mut b, "carol").unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a, b);

    // Same log again: ids move with seq, digests and verdict do not.
    let again = run(&p, INPUT, &mut store, &mut a, "carol").unwrap();
    assert_eq!(again.verdict, ra.verdict);
    assert_eq!(again.payload_digests, ra.payload_digests);
    assert_ne!(again.evidence, ra.evidence);
    for d in &ra.payload_digests {
        assert!(store.read_blob(d).is_ok());
    }
}

#[test]
fn validation_agrees_with_run_on_fuzzed_pipelines() {
    let (mut store, good) = path_store();
    let mut rng = StdRng::seed_from_u64(41);
    let names = ["identity", "set", "bogus"];
    let mut clean = 0;
    for _ in 0..300 {
        let commit = if rng.gen_bool(0.9) { good } else { ObjectId::digest(b"nope") };
        let steps = (0..rng.gen_range(0..5))
            .map(|_| Step {
                node_id: NodeId::new(format!("s{}", rng.gen_range(0..11))).unwrap(),
                transform: TransformSpec::new(names[rng.gen_range(0..3)]).with("final", "true"),
                validator: ControlPoint::always(),
            })
            .collect();
        let model_id = if rng.gen_bool(0.95) { "path" } else { "other" };
        let p = ProofPipeline {
            pipeline_id: "fuzz".into(),
            model_id: model_id.into(),
            commit_id: commit,
            steps,
        };
        let report = validate_pipeline(&p, &store);
        let mut log = ProvenanceLog::new();
        let result = run(&p, b"{}", &mut store, &mut log, "eve");
        let rejected = matches!(
            result,
            Err(PipelineError::InvalidPipeline(_)) | Err(PipelineError::UnknownCommit(_))
        );
        assert_eq!(report.is_clean(), !rejected, "{report:?} vs {result:?}");
        if report.is_clean() {
            clean += 1;
            assert!(log.verify().is_clean());
        } else {
            assert!(log.is_empty());
        }
    }
    assert!(clean > 10);
}
