use std::collections::{BTreeMap, BTreeSet, VecDeque};

use proofgraph_core::encoding::Canonical;
use proofgraph_core::model::text::{parse_model, render_model};
use proofgraph_core::model::{shared_processors, GraphError, Violation};
use proofgraph_core::{ModelGraph, Node, NodeId, NodeKind};
use proptest::prelude::*;

fn nid(i: usize) -> NodeId {
    NodeId::new(format!("n{i}")).unwrap()
}

fn kind_of(code: u8) -> NodeKind {
    match code % 3 {
        0 => NodeKind::Source,
        1 => NodeKind::Processor,
        _ => NodeKind::Sink,
    }
}

/// Transitive closure by Warshall's algorithm over an index matrix.
fn closure(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; n]; n];
    for &(a, b) in edges {
        r[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                let row = r[k].clone();
                for (j, reach) in row.into_iter().enumerate() {
                    if reach {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

fn dfs_has_cycle(g: &ModelGraph) -> bool {
    // 0 = unvisited, 1 = on stack, 2 = done
    fn visit(n: &NodeId, g: &ModelGraph, color: &mut BTreeMap<NodeId, u8>) -> bool {
        color.insert(n.clone(), 1);
        for (_, to) in g.edges.iter().filter(|(f, _)| f == n) {
            match color.get(to).copied().unwrap_or(0) {
                1 => return true,
                0 if visit(to, g, color) => return true,
                _ => {}
            }
        }
        color.insert(n.clone(), 2);
        false
    }
    let mut color = BTreeMap::new();
    g.nodes
        .keys()
        .any(|n| color.get(n).copied().unwrap_or(0) == 0 && visit(n, g, &mut color))
}

fn processors(n: usize) -> ModelGraph {
    let mut g = ModelGraph::new("m");
    for i in 0..n {
        g.insert_node(Node::new(nid(i), NodeKind::Processor, format!("p{i}")))
            .unwrap();
    }
    g
}

proptest! {
    #[test]
    fn accepted_edges_never_form_a_cycle(attempts in prop::collection::vec((0usize..20, 0usize..20), 0..80)) {
        let mut g = processors(20);
        for (a, b) in attempts {
            let before = g.clone();
            match g.add_edge(&nid(a), &nid(b)) {
                Ok(next) => {
                    prop_assert_eq!(&g, &before);
                    g = next;
                }
                Err(GraphError::CycleError { .. }) => {
                    let mut probe = g.clone();
                    probe.edges.insert((nid(a), nid(b)));
                    prop_assert!(dfs_has_cycle(&probe));
                }
                Err(GraphError::DuplicateEdge { .. }) => prop_assert!(g.edges.contains(&(nid(a), nid(b)))),
                Err(e) => prop_assert!(false, "unexpected {e:?}"),
            }
            prop_assert!(!dfs_has_cycle(&g));
        }
    }

    #[test]
    fn upstream_set_matches_reverse_bfs(edges in prop::collection::vec((0usize..30, 0usize..30), 0..90)) {
        let mut g = processors(30);
        for (a, b) in edges {
            let (lo, hi) = (a.min(b), a.max(b));
            if lo != hi {
                let _ = g.insert_edge(&nid(lo), &nid(hi));
            }
        }
        for target in 0..30 {
            let mut seen = BTreeSet::new();
            let mut queue = VecDeque::from([nid(target)]);
            while let Some(n) = queue.pop_front() {
                for (from, to) in &g.edges {
                    if *to == n && seen.insert(from.clone()) {
                        queue.push_back(from.clone());
                    }
                }
            }
            let got = g.upstream_set(&nid(target)).unwrap();
            prop_assert!(!got.contains(&nid(target)));
            prop_assert_eq!(got, seen);
        }
    }

    #[test]
    fn upstream_grows_monotonically(
        base in prop::collection::vec((0usize..15, 0usize..15), 0..30),
        extra in (0usize..15, 0usize..15),
    ) {
        let mut g = processors(15);
        for (a, b) in base {
            let _ = g.insert_edge(&nid(a), &nid(b));
        }
        if let Ok(bigger) = g.add_edge(&nid(extra.0), &nid(extra.1)) {
            for i in 0..15 {
                let small = g.upstream_set(&nid(i)).unwrap();
                prop_assert!(small.is_subset(&bigger.upstream_set(&nid(i)).unwrap()));
            }
        }
    }

    #[test]
    fn shared_processors_is_set_intersection(
        a in prop::collection::btree_set(0usize..40, 0..20),
        b in prop::collection::btree_set(0usize..40, 0..20),
    ) {
        let build = |ids: &BTreeSet<usize>, name: &str| {
            let mut g = ModelGraph::new(name);
            for &i in ids {
                g.insert_node(Node::new(nid(i), kind_of(i as u8), "x")).unwrap();
            }
            g
        };
        let (ga, gb) = (build(&a, "a"), build(&b, "b"));
        let mut oracle = BTreeSet::new();
        for x in &a {
            for y in &b {
                if x == y {
                    oracle.insert(nid(*x));
                }
            }
        }
        prop_assert_eq!(shared_processors(&ga, &gb), oracle.clone());
        prop_assert_eq!(shared_processors(&gb, &ga), oracle);
    }

    #[test]
    fn validate_agrees_with_independent_checker(
        kinds in prop::collection::vec(any::<u8>(), 1..10),
        empty_label in prop::option::of(0usize..10),
        empty_facet in prop::option::of(0usize..10),
        edges in prop::collection::vec((0usize..12, 0usize..12), 0..20),
        empty_subject in any::<bool>(),
    ) {
        let n = kinds.len();
        let mut g = ModelGraph::new("fuzz");
        for (i, k) in kinds.iter().enumerate() {
            let label = if empty_label == Some(i) { "" } else { "node" };
            let mut node = Node::new(nid(i), kind_of(*k), label);
            if empty_facet == Some(i) {
                node.facets.insert(String::new(), "v".into());
            }
            g.nodes.insert(nid(i), node);
        }
        for &(a, b) in &edges {
            g.edges.insert((nid(a), nid(b)));
        }
        g.subjects.insert(if empty_subject { String::new() } else { "s".into() });

        let live: Vec<(usize, usize)> = g
            .edges
            .iter()
            .map(|(f, t)| (f.as_str()[1..].parse().unwrap(), t.as_str()[1..].parse().unwrap()))
            .filter(|&(a, b): &(usize, usize)| a < n && b < n)
            .collect();
        let dangling = g.edges.len() - live.len();
        let selfs = live.iter().filter(|(a, b)| a == b).count();
        let source_in = live.iter().filter(|&&(_, b)| kinds[b] % 3 == 0).count();
        let sink_out = live.iter().filter(|&&(a, _)| kinds[a] % 3 == 2).count();
        let no_self: Vec<_> = live.iter().copied().filter(|(a, b)| a != b).collect();
        let reach = closure(n, &no_self);
        let on_cycle: Vec<NodeId> = (0..n).filter(|&i| reach[i][i]).map(nid).collect();
        let label_bad = empty_label.is_some_and(|i| i < n) as usize;
        let facet_bad = empty_facet.is_some_and(|i| i < n) as usize;

        let report = g.validate();
        let count = |f: fn(&Violation) -> bool| report.violations.iter().filter(|v| f(v)).count();
        prop_assert_eq!(count(|v| matches!(v, Violation::DanglingEdge { .. })), dangling);
        prop_assert_eq!(count(|v| matches!(v, Violation::SelfEdge { .. })), selfs);
        prop_assert_eq!(count(|v| matches!(v, Violation::SourceWithInbound { .. })), source_in);
        prop_assert_eq!(count(|v| matches!(v, Violation::SinkWithOutbound { .. })), sink_out);
        prop_assert_eq!(count(|v| matches!(v, Violation::EmptyLabel { .. })), label_bad);
        prop_assert_eq!(count(|v| matches!(v, Violation::EmptyFacetKey { .. })), facet_bad);
        prop_assert_eq!(count(|v| matches!(v, Violation::EmptySubject)), empty_subject as usize);
        let cycles: Vec<_> = report
            .violations
            .iter()
            .filter_map(|v| match v {
                Violation::Cycle { nodes } => Some(nodes.clone()),
                _ => None,
            })
            .collect();
        if on_cycle.is_empty() {
            prop_assert!(cycles.is_empty());
        } else {
            prop_assert_eq!(cycles, vec![on_cycle]);
        }
        let oracle_clean = dangling + selfs + source_in + sink_out + label_bad + facet_bad == 0
            && !empty_subject
            && (0..n).all(|i| !reach[i][i]);
        prop_assert_eq!(report.is_clean(), oracle_clean);
    }

    #[test]
    fn canonical_and_text_round_trip(
        n in 1usize..12,
        edges in prop::collection::vec((0usize..12, 0usize..12), 0..30),
        facets in prop::collection::btree_map("[a-z]{1,4}", "[ -~]{0,8}", 0..4),
        subjects in prop::collection::btree_set("[a-z]{1,6}", 0..3),
        order in any::<bool>(),
    ) {
        let mut g = ModelGraph::new("rt");
        for i in 0..n {
            let mut node = Node::new(nid(i), NodeKind::Processor, format!("label {i}"))
                .with_param("k", format!("v{i}"));
            if i == 0 {
                node.facets = facets.clone();
            }
            g.insert_node(node).unwrap();
        }
        let mut accepted = Vec::new();
        for (a, b) in edges {
            let (lo, hi) = (a.min(b) % n, a.max(b) % n);
            if lo < hi && g.insert_edge(&nid(lo), &nid(hi)).is_ok() {
                accepted.push((lo, hi));
            }
        }
        for s in &subjects {
            g.insert_subject(s).unwrap();
        }
        let bytes = g.canonical_bytes();
        prop_assert_eq!(ModelGraph::from_canonical_bytes(&bytes).unwrap(), g.clone());

        // Same content built in a different insertion order encodes identically.
        let mut h = ModelGraph::new("rt");
        let ids: Vec<usize> = if order { (0..n).rev().collect() } else { (0..n).collect() };
        for i in ids {
            h.nodes.insert(nid(i), g.nodes[&nid(i)].clone());
        }
        for (a, b) in accepted.iter().rev() {
            h.insert_edge(&nid(*a), &nid(*b)).unwrap();
        }
        h.subjects = g.subjects.clone();
        prop_assert_eq!(h.canonical_bytes(), bytes);

        let text = render_model(&g);
        prop_assert_eq!(parse_model("rt", &text).unwrap(), g);
    }
}

#[test]
fn value_semantics_leave_input_unchanged() {
    let g = processors(3);
    let snapshot = g.clone();
    let _ = g.add_node(Node::new(nid(9), NodeKind::Sink, "k")).unwrap();
    let _ = g.add_edge(&nid(0), &nid(1)).unwrap();
    let _ = g.tag_subject("momentum").unwrap();
    assert_eq!(g, snapshot);
}

#[test]
fn hundred_nodes_counted() {
    let mut g = ModelGraph::new("m");
    for i in 0..100 {
        g = g.add_node(Node::new(nid(i), NodeKind::Processor, "p")).unwrap();
    }
    assert_eq!(g.nodes.values().count(), 100);
}
