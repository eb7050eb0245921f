use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use proofgraph_core::fixtures::{chain_workspace, record_sample_log, FIXTURE_AUTHOR, FIXTURE_TIMESTAMP};
use proofgraph_core::metrics::{rank_participants, MetricsReport};
use proofgraph_core::model::text::{parse_model, validate_text};
use proofgraph_core::pipeline::text::parse_pipeline;
use proofgraph_core::pipeline::{run as run_pipeline, validate_pipeline, Verdict};
use proofgraph_core::provenance::ContributionDraft;
use proofgraph_core::store::{MergeResult, StoreError};
use proofgraph_core::{CommitInfo, NodeId, ObjectId, Store, Workspace};
use serde_json::{json, Value};

use crate::error::{CliError, Exit};
use crate::state::State;
use crate::{Cli, Command, CommitArgs, MetricsCommand, ModelCommand, PipelineCommand};

pub struct Output {
    pub json: String,
    pub exit: Exit,
}

fn ok(value: Value) -> Result<Output, CliError> {
    with_exit(value, Exit::Ok)
}

fn with_exit(value: Value, exit: Exit) -> Result<Output, CliError> {
    Ok(Output {
        // serde_json's default map is ordered, so keys come out sorted.
        json: value.to_string(),
        exit,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    String::from_utf8(read_file(path)?)
        .map_err(|_| CliError::usage(format!("{}: not UTF-8", path.display())))
}

fn node_id(s: &str) -> Result<NodeId, CliError> {
    NodeId::new(s).map_err(|e| CliError::usage(e.to_string()))
}

fn object_id(s: &str) -> Result<ObjectId, CliError> {
    s.parse()
        .map_err(|e| CliError::usage(format!("{s:?}: {e}")))
}

fn commit_info(args: &CommitArgs) -> CommitInfo {
    CommitInfo::new(&args.author, &args.message, args.timestamp)
}

fn model_summary(ws: &Workspace) -> Value {
    let models: BTreeMap<&String, Value> = ws
        .models()
        .iter()
        .map(|(id, g)| {
            (
                id,
                json!({
                    "nodes": g.nodes.len(),
                    "edges": g.edges.len(),
                    "subjects": g.subjects,
                }),
            )
        })
        .collect();
    json!(models)
}

fn model_id_for(path: &Path, id: &Option<String>) -> Result<String, CliError> {
    match id {
        Some(id) => Ok(id.clone()),
        None => path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(str::to_string)
            .ok_or_else(|| CliError::usage(format!("cannot derive a model id from {}", path.display()))),
    }
}

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    if let Command::Init = cli.command {
        Store::init(&cli.store)?;
        return ok(json!({ "initialized": true }));
    }
    let state = State::open(&cli.store)?;
    match &cli.command {
        Command::Init => unreachable!("handled above"),
        Command::Model(cmd) => model(&state, cmd),
        Command::Commit {
            info,
            ref_name,
            parents,
        } => commit(state, info, ref_name, parents),
        Command::Checkout { rev } => {
            let id = state.store.resolve(rev)?;
            let ws = state.store.checkout(&id)?;
            state.save_index(&ws)?;
            ok(json!({ "commit": id, "models": model_summary(&ws) }))
        }
        Command::Log { rev } => {
            let head = state.store.resolve(rev)?;
            let commits: Vec<Value> = state
                .store
                .history(&head)?
                .into_iter()
                .map(|(id, c)| {
                    json!({
                        "id": id,
                        "parents": c.parents,
                        "root": c.root,
                        "author": c.author,
                        "message": c.message,
                        "timestamp": c.timestamp,
                    })
                })
                .collect();
            ok(json!({ "commits": commits }))
        }
        Command::Chain { model, rev } => {
            let ws = match rev {
                Some(rev) => state.store.checkout(&state.store.resolve(rev)?)?,
                None => state.index()?,
            };
            ok(json!({ "chain": ws.clone_chain(model)? }))
        }
        Command::Clone {
            model,
            renames,
            info,
            rev,
            ref_name,
        } => clone(state, model, renames, info, rev, ref_name),
        Command::Merge {
            base,
            ours,
            theirs,
            info,
            ref_name,
        } => merge(state, [base, ours, theirs], info, ref_name.as_deref()),
        Command::Record {
            author,
            model,
            node,
            payload,
            upstream,
            rev,
        } => {
            let commit_id = state.store.resolve(rev)?;
            let mut log = state.log()?;
            let mut store = state.store;
            let payload_digest = store.put_blob(&read_file(payload)?)?;
            let draft = ContributionDraft {
                author: author.clone(),
                model_id: model.clone(),
                commit_id,
                node_id: node_id(node)?,
                payload_digest,
                upstream: upstream.iter().map(|u| object_id(u)).collect::<Result<_, _>>()?,
            };
            let id = log.record(&store, draft)?;
            let state = State { store };
            state.save_log(&log)?;
            ok(json!({ "contribution": id, "seq": log.len() - 1 }))
        }
        Command::Metrics(cmd) => metrics(&state, cmd),
        Command::Pipeline(cmd) => pipeline(state, cmd),
        Command::Stats { by_kind } => {
            let stats = state.store.stats()?;
            let mut out = json!({
                "object_count": stats.object_count,
                "total_bytes": stats.total_bytes,
            });
            if *by_kind {
                out["objects_by_kind"] = json!(stats.objects_by_kind);
            }
            ok(out)
        }
        Command::Verify => verify(&state),
        Command::Fixtures => fixtures(state),
    }
}

fn model(state: &State, cmd: &ModelCommand) -> Result<Output, CliError> {
    match cmd {
        ModelCommand::Add { file, id, replace } => {
            let model_id = model_id_for(file, id)?;
            let graph = parse_model(&model_id, &read_text(file)?)?;
            let mut ws = state.index()?;
            let summary = json!({
                "model": model_id,
                "nodes": graph.nodes.len(),
                "edges": graph.edges.len(),
            });
            if *replace {
                ws.put_model(graph)?;
            } else {
                ws.insert_model(graph)?;
            }
            state.save_index(&ws)?;
            ok(summary)
        }
        ModelCommand::Validate { file, id } => {
            let model_id = model_id_for(file, id)?;
            let report = validate_text(&model_id, &read_text(file)?)?;
            let exit = if report.is_clean() { Exit::Ok } else { Exit::Domain };
            with_exit(
                json!({ "model": model_id, "violations": report.violations }),
                exit,
            )
        }
        ModelCommand::Tag { model, subject } => {
            let mut ws = state.index()?;
            ws.tag_subject(model, subject)?;
            state.save_index(&ws)?;
            ok(json!({ "model": model, "subjects": ws.model(model)?.subjects }))
        }
        ModelCommand::Facet {
            node,
            key,
            value,
            unset,
        } => {
            let id = node_id(node)?;
            if value.is_none() && !unset {
                return Err(CliError::usage("give a facet value or --unset"));
            }
            let mut ws = state.index()?;
            ws.set_facet(&id, key, value.as_deref())?;
            state.save_index(&ws)?;
            let facets = &ws.node(&id).expect("node was just edited").facets;
            ok(json!({ "node": id, "facets": facets }))
        }
        ModelCommand::List => ok(json!({ "models": model_summary(&state.index()?) })),
    }
}

fn commit(
    mut state: State,
    info: &CommitArgs,
    ref_name: &str,
    parents: &[String],
) -> Result<Output, CliError> {
    let parents: Vec<ObjectId> = if parents.is_empty() {
        state.store.read_ref(ref_name)?.into_iter().collect()
    } else {
        parents
            .iter()
            .map(|p| state.store.resolve(p))
            .collect::<Result<_, _>>()?
    };
    let ws = state.index()?;
    let id = state.store.commit(&ws, &parents, &commit_info(info))?;
    state.store.write_ref(ref_name, &id)?;
    ok(json!({ "commit": id, "parents": parents, "ref": ref_name }))
}

fn clone(
    mut state: State,
    model: &str,
    renames: &[String],
    info: &CommitArgs,
    rev: &str,
    ref_name: &str,
) -> Result<Output, CliError> {
    let mut rename = BTreeMap::new();
    for r in renames {
        let (old, new) = r
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--rename {r:?} is not OLD=NEW")))?;
        if rename.insert(old.to_string(), new.to_string()).is_some() {
            return Err(CliError::usage(format!("model {old:?} renamed twice")));
        }
    }
    let base = state.store.resolve(rev)?;
    let (ws, id) = match state.store.clone_models(&base, model, &rename, &commit_info(info)) {
        Err(StoreError::IncompleteRename {
            missing,
            unexpected,
        }) => {
            return Err(CliError::domain(format!(
                "rename must cover the clone chain exactly; missing {missing:?}, unexpected {unexpected:?}"
            )))
        }
        other => other?,
    };
    state.store.write_ref(ref_name, &id)?;
    state.save_index(&ws)?;
    ok(json!({ "commit": id, "cloned": rename, "ref": ref_name }))
}

fn merge(
    mut state: State,
    revs: [&String; 3],
    info: &CommitArgs,
    ref_name: Option<&str>,
) -> Result<Output, CliError> {
    let [base, ours, theirs] = revs.map(|r| state.store.resolve(r));
    let (base, ours, theirs) = (base?, ours?, theirs?);
    match state.store.merge(&base, &ours, &theirs, &commit_info(info))? {
        MergeResult::Merged { commit, .. } => {
            if let Some(r) = ref_name {
                state.store.write_ref(r, &commit)?;
            }
            ok(json!({ "merged": commit }))
        }
        MergeResult::Conflicts(conflicts) => {
            eprintln!("merge stopped: {} conflict(s)", conflicts.len());
            with_exit(json!({ "conflicts": conflicts }), Exit::Domain)
        }
    }
}

fn metrics(state: &State, cmd: &MetricsCommand) -> Result<Output, CliError> {
    let log = state.log()?;
    let graph = log.derive_graph()?;
    let report = MetricsReport::compute(&graph, &log);
    match cmd {
        MetricsCommand::Quality { contribution } => {
            let quality = match contribution {
                None => report.quality,
                Some(c) => {
                    let id = object_id(c)?;
                    let q = report
                        .quality
                        .get(&id)
                        .ok_or_else(|| CliError::domain(format!("unknown contribution {id}")))?;
                    BTreeMap::from([(id, *q)])
                }
            };
            let quality: BTreeMap<String, u64> =
                quality.into_iter().map(|(k, v)| (k.to_hex(), v)).collect();
            ok(json!({ "quality": quality }))
        }
        MetricsCommand::Relevancy {
            participant,
            subject,
        } => {
            let rows: Vec<Value> = report
                .relevancy
                .iter()
                .filter(|((p, s), _)| {
                    participant.as_ref().is_none_or(|x| x == p) && subject.as_ref().is_none_or(|x| x == s)
                })
                .map(|((p, s), r)| json!({ "participant": p, "subject": s, "relevancy": r }))
                .collect();
            ok(json!({ "relevancy": rows }))
        }
        MetricsCommand::Influence { participant } => {
            let influence: BTreeMap<&String, u64> = report
                .influence
                .iter()
                .filter(|(p, _)| participant.as_ref().is_none_or(|x| x == *p))
                .map(|(p, v)| (p, *v))
                .collect();
            ok(json!({ "influence": influence }))
        }
        MetricsCommand::Rank { subject } => {
            let ranking: Vec<Value> = rank_participants(&graph, &log, subject.as_deref())
                .into_iter()
                .map(|(p, score)| json!({ "participant": p, "score": score }))
                .collect();
            ok(json!({ "ranking": ranking }))
        }
    }
}

fn pipeline(state: State, cmd: &PipelineCommand) -> Result<Output, CliError> {
    match cmd {
        PipelineCommand::Validate { file } => {
            let p = parse_pipeline(&read_text(file)?)?;
            let report = validate_pipeline(&p, &state.store);
            let exit = if report.is_clean() { Exit::Ok } else { Exit::Domain };
            with_exit(
                json!({ "pipeline": p.pipeline_id, "issues": report.issues }),
                exit,
            )
        }
        PipelineCommand::Run {
            file,
            input,
            author,
        } => {
            let p = parse_pipeline(&read_text(file)?)?;
            let input = read_file(input)?;
            let mut log = state.log()?;
            let mut store = state.store;
            let outcome = run_pipeline(&p, &input, &mut store, &mut log, author)?;
            State { store }.save_log(&log)?;
            let exit = match outcome.verdict {
                Verdict::Halted(i) => {
                    eprintln!("pipeline halted at step {i}");
                    Exit::Domain
                }
                _ => Exit::Ok,
            };
            with_exit(
                json!({
                    "pipeline": p.pipeline_id,
                    "verdict": outcome.verdict,
                    "evidence": outcome.evidence,
                    "payload_digests": outcome.payload_digests,
                }),
                exit,
            )
        }
    }
}

fn verify(state: &State) -> Result<Output, CliError> {
    let corrupt: Vec<Value> = state
        .store
        .verify_objects()?
        .into_iter()
        .map(|(id, reason)| json!({ "id": id, "reason": reason }))
        .collect();
    let mut bad_refs = Vec::new();
    for (name, id) in state.store.refs()? {
        if let Err(e) = state.store.read_commit(&id) {
            bad_refs.push(json!({ "ref": name, "reason": e.to_string() }));
        }
    }
    let index_ok = state.index().is_ok();
    let log_report = match state.raw_log()? {
        Some(bytes) => proofgraph_core::provenance::ProvenanceLog::verify_bytes(&bytes),
        None => proofgraph_core::provenance::ProvenanceLog::new().verify(),
    };
    let clean = corrupt.is_empty() && bad_refs.is_empty() && index_ok && log_report.is_clean();
    if !clean {
        eprintln!("store integrity check failed");
    }
    with_exit(
        json!({
            "ok": clean,
            "corrupt_objects": corrupt,
            "bad_refs": bad_refs,
            "index_ok": index_ok,
            "log": log_report,
        }),
        if clean { Exit::Ok } else { Exit::Corrupt },
    )
}

fn fixtures(mut state: State) -> Result<Output, CliError> {
    if !state.log()?.is_empty() {
        return Err(CliError::domain("fixtures need an empty provenance log"));
    }
    let ws = chain_workspace();
    let info = CommitInfo::new(FIXTURE_AUTHOR, "fixture workspace", FIXTURE_TIMESTAMP);
    let commit = state.store.commit(&ws, &[], &info)?;
    state.store.write_ref("main", &commit)?;
    state.save_index(&ws)?;
    let log = record_sample_log(&mut state.store, &commit)?;
    state.save_log(&log)?;
    let ids: Vec<ObjectId> = log.contributions().map(|c| c.id).collect();
    ok(json!({ "commit": commit, "contributions": ids, "ref": "main" }))
}
