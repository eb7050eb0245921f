//! Line-oriented model definition format.
//!
//! ```text
//! # comment
//! node <id> <kind> <label> [key=value ...]
//! edge <from> <to>
//! subject <tag>
//! facet <node-id> <key>=<value>
//! ```
//!
//! Fields are separated by ASCII whitespace. Inside a field, whitespace,
//! control characters, `%` and `=` are written as `%XX` (uppercase hex of
//! each UTF-8 byte), so labels and facet values may hold any text. `kind`
//! is one of `source`, `processor`, `sink`. A node must be declared before
//! an `edge` or `facet` line refers to it. Blank lines and lines starting
//! with `#` are ignored.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::{GraphError, ModelGraph, Node, NodeId, ValidationReport, Violation};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TextError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Graph { line: usize, source: GraphError },
}

enum Record {
    Node {
        id: String,
        kind: String,
        label: String,
        params: Vec<(String, String)>,
    },
    Edge(String, String),
    Subject(String),
    Facet(String, String, String),
}

fn needs_escape(c: char) -> bool {
    c.is_whitespace() || c.is_control() || c == '%' || c == '='
}

/// Escapes one field for the definition format.
pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if needs_escape(c) {
            let mut buf = [0u8; 4];
            for b in c.encode_utf8(&mut buf).bytes() {
                write!(out, "%{b:02X}").unwrap();
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Reverses [`escape_field`].
pub fn unescape_field(s: &str) -> Result<String, String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s
                .get(i + 1..i + 3)
                .filter(|h| h.bytes().all(|b| b.is_ascii_hexdigit()))
                .ok_or_else(|| format!("bad escape in {s:?}"))?;
            out.push(u8::from_str_radix(hex, 16).expect("checked hex digits"));
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| format!("escape in {s:?} is not UTF-8"))
}

fn split_pair(token: &str) -> Option<(&str, &str)> {
    let (k, v) = token.split_once('=')?;
    (!k.is_empty()).then_some((k, v))
}

fn parse_line(line: usize, text: &str) -> Result<Option<Record>, TextError> {
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let syntax = |message: String| TextError::Syntax { line, message };
    let field = |s: &str| unescape_field(s).map_err(syntax);
    let pair = |t: &str| -> Result<(String, String), TextError> {
        let (k, v) = split_pair(t).ok_or_else(|| syntax(format!("expected key=value, got {t:?}")))?;
        Ok((field(k)?, field(v)?))
    };
    let tokens: Vec<&str> = trimmed.split_ascii_whitespace().collect();
    let record = match tokens.as_slice() {
        ["node", id, kind, label, rest @ ..] => Record::Node {
            id: field(id)?,
            kind: field(kind)?,
            label: field(label)?,
            params: rest.iter().map(|t| pair(t)).collect::<Result<_, _>>()?,
        },
        ["edge", from, to] => Record::Edge(field(from)?, field(to)?),
        ["subject", tag] => Record::Subject(field(tag)?),
        ["facet", node, kv] => {
            let (k, v) = pair(kv)?;
            Record::Facet(field(node)?, k, v)
        }
        [keyword, ..] => {
            return Err(syntax(format!(
                "malformed {keyword:?} record (expected node, edge, subject or facet)"
            )))
        }
        [] => unreachable!(),
    };
    Ok(Some(record))
}

fn node_id(line: usize, s: &str) -> Result<NodeId, TextError> {
    NodeId::new(s).map_err(|source| TextError::Graph { line, source })
}

fn build_node(
    line: usize,
    id: &str,
    kind: &str,
    label: &str,
    params: &[(String, String)],
) -> Result<Node, TextError> {
    let kind = kind
        .parse()
        .map_err(|message| TextError::Syntax { line, message })?;
    let mut node = Node::new(node_id(line, id)?, kind, label);
    for (k, v) in params {
        if node.params.insert(k.clone(), v.clone()).is_some() {
            return Err(TextError::Syntax {
                line,
                message: format!("duplicate param {k:?}"),
            });
        }
    }
    Ok(node)
}

/// Parses a model, applying every checked graph operation in file order.
pub fn parse_model(model_id: &str, text: &str) -> Result<ModelGraph, TextError> {
    let mut graph = ModelGraph::new(model_id);
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let graph_err = |source| TextError::Graph { line, source };
        match parse_line(line, raw)? {
            None => {}
            Some(Record::Node {
                id,
                kind,
                label,
                params,
            }) => {
                let node = build_node(line, &id, &kind, &label, &params)?;
                graph.insert_node(node).map_err(graph_err)?;
            }
            Some(Record::Edge(from, to)) => {
                graph
                    .insert_edge(&node_id(line, &from)?, &node_id(line, &to)?)
                    .map_err(graph_err)?;
            }
            Some(Record::Subject(tag)) => graph.insert_subject(&tag).map_err(graph_err)?,
            Some(Record::Facet(node, key, value)) => {
                let id = node_id(line, &node)?;
                let node = graph
                    .nodes
                    .get_mut(&id)
                    .ok_or_else(|| graph_err(GraphError::MissingNode(id.clone())))?;
                if node.facets.insert(key.clone(), value).is_some() {
                    return Err(TextError::Syntax {
                        line,
                        message: format!("duplicate facet {key:?} on node {id}"),
                    });
                }
            }
        }
    }
    Ok(graph)
}

/// Parses a model without enforcing graph invariants and reports every
/// violation, including repeated facet keys that the checked parser would
/// reject outright. Only syntax errors fail.
pub fn validate_text(model_id: &str, text: &str) -> Result<ValidationReport, TextError> {
    let mut graph = ModelGraph::new(model_id);
    let mut extra = Vec::new();
    let mut pending_facets = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        match parse_line(line, raw)? {
            None => {}
            Some(Record::Node {
                id,
                kind,
                label,
                params,
            }) => {
                let kind = kind
                    .parse()
                    .map_err(|message| TextError::Syntax { line, message })?;
                let mut node = Node::new(node_id(line, &id)?, kind, label);
                node.params = params.into_iter().collect();
                if graph.nodes.insert(node.id.clone(), node).is_some() {
                    return Err(TextError::Syntax {
                        line,
                        message: format!("node {id} declared twice"),
                    });
                }
            }
            Some(Record::Edge(from, to)) => {
                graph
                    .edges
                    .insert((node_id(line, &from)?, node_id(line, &to)?));
            }
            Some(Record::Subject(tag)) => {
                graph.subjects.insert(tag);
            }
            Some(Record::Facet(node, key, value)) => {
                pending_facets.push((line, node_id(line, &node)?, key, value));
            }
        }
    }
    let mut seen = BTreeSet::new();
    for (line, id, key, value) in pending_facets {
        let Some(node) = graph.nodes.get_mut(&id) else {
            return Err(TextError::Graph {
                line,
                source: GraphError::MissingNode(id),
            });
        };
        if !seen.insert((id.clone(), key.clone())) {
            extra.push(Violation::DuplicateFacetKey { node: id, key });
            continue;
        }
        node.facets.insert(key, value);
    }
    let mut report = graph.validate();
    report.violations.extend(extra);
    Ok(report)
}

/// Renders a graph in the definition format. Output order is canonical, so
/// equal graphs render identically.
pub fn render_model(graph: &ModelGraph) -> String {
    let mut out = String::new();
    for node in graph.nodes.values() {
        write!(
            out,
            "node {} {} {}",
            escape_field(node.id.as_str()),
            node.kind,
            escape_field(&node.label)
        )
        .unwrap();
        for (k, v) in &node.params {
            write!(out, " {}={}", escape_field(k), escape_field(v)).unwrap();
        }
        out.push('\n');
    }
    for node in graph.nodes.values() {
        for (k, v) in &node.facets {
            writeln!(
                out,
                "facet {} {}={}",
                escape_field(node.id.as_str()),
                escape_field(k),
                escape_field(v)
            )
            .unwrap();
        }
    }
    for (from, to) in &graph.edges {
        writeln!(out, "edge {} {}", escape_field(from.as_str()), escape_field(to.as_str())).unwrap();
    }
    for s in &graph.subjects {
        writeln!(out, "subject {}", escape_field(s)).unwrap();
    }
    out
}
