use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use cdcoref::clustering::{cluster_documents, gold_topic_clusters, single_cluster, DocAssignment};
use cdcoref::config::TrainConfig;
use cdcoref::corpus::{Document, MentionKey, Split};
use cdcoref::embeddings::synthetic_embeddings;
use cdcoref::evaluation::conll::{read_conll, write_conll};
use cdcoref::evaluation::{evaluate as score, Clusters};
use cdcoref::inference::{predict as run_predict, InferenceConfig};
use cdcoref::model::{Checkpoint, ModelParams};
use cdcoref::pairs::write_pair_scores;
use cdcoref::synth::{synthetic_corpus, SynthCorpusConfig};
use cdcoref::trainer::{
    ablation_suite, fit, format_ablation_table, init_params, model_shape, pretrain_mention_scorer, train as run_train,
    AblationRow, PretrainEpoch, TrainEpoch, TrainingData,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::workspace::{manifest_path_for, Artifacts, Workspace, INDEX_FILE};
use crate::{
    AblateArgs, ClusterDocsArgs, DocClusterArgs, DocClusterMethod, EvaluateArgs, PredictArgs, PrepareArgs, SynthArgs,
    TrainArgs,
};

/// JSON stored in the checkpoint's metadata block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// `pretrain` or `train`.
    pub stage: String,
    pub config: TrainConfig,
    pub best_epoch: Option<usize>,
    pub best_dev_conll_f1: Option<f64>,
    /// File name of the manifest written next to the checkpoint.
    pub manifest: String,
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    text.into_bytes()
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    let mut cfg = SynthCorpusConfig {
        seed: args.seed,
        ..Default::default()
    };
    macro_rules! set {
        ($($field:ident),+) => { $(if let Some(v) = args.$field { cfg.$field = v; })+ };
    }
    set!(
        topics,
        docs_per_topic,
        sentences_per_doc,
        tokens_per_sentence,
        events_per_sentence,
        entities_per_sentence
    );
    set!(
        event_clusters_per_subtopic,
        entity_clusters_per_subtopic,
        singleton_rate,
        max_mention_width
    );
    set!(dev_topics, test_topics);

    let mut artifacts = Artifacts::new("synth", &args.out.join(INDEX_FILE));
    artifacts.set_seed(args.seed);
    artifacts.set_config(&serde_json::json!({
        "corpus": cfg,
        "dim": args.dim,
        "cluster_signal": args.cluster_signal,
        "noise": args.noise,
    }));
    artifacts.stage("generate");
    let corpus = synthetic_corpus(&cfg)?;
    let store = synthetic_embeddings(&corpus, args.dim, args.cluster_signal, args.noise, args.seed)?;
    let corpus_path = args.out.join("corpus.json");
    let embeddings_path = args.out.join("embeddings.cdce");
    artifacts.write_now(&corpus_path, corpus.to_json_string().as_bytes())?;
    artifacts.write_now(&embeddings_path, &store.to_bytes())?;

    artifacts.stage("prepare");
    let ws = Workspace::prepare(&corpus_path, &embeddings_path, &args.out)?;
    artifacts.write(&ws.index_path(), &to_json(&ws.index))?;
    artifacts.commit()?;
    println!(
        "synthetic workspace {}: {} documents, dim {}",
        args.out.display(),
        ws.index.documents,
        ws.index.dim
    );
    Ok(())
}

pub fn prepare(args: &PrepareArgs) -> CliResult<()> {
    let mut artifacts = Artifacts::new("prepare", &args.out.join(INDEX_FILE));
    artifacts.stage("validate");
    let ws = Workspace::prepare(&args.corpus, &args.embeddings, &args.out)?;
    artifacts.add_inputs(ws.input_digests());
    artifacts.write(&ws.index_path(), &to_json(&ws.index))?;
    artifacts.commit()?;
    for w in &ws.index.warnings {
        log::warn!("{w}");
    }
    println!(
        "workspace {}: {} documents, dim {}, splits {:?}",
        args.out.display(),
        ws.index.documents,
        ws.index.dim,
        ws.index.splits
    );
    Ok(())
}

fn split_docs(ws: &Workspace, split: Split) -> CliResult<Vec<&Document>> {
    let docs = ws.corpus.split_documents(split);
    if docs.is_empty() {
        return Err(CliError::Input(format!("the {split} split has no documents")));
    }
    Ok(docs)
}

fn compute_assignment(docs: &[&Document], method: &DocClusterArgs) -> CliResult<DocAssignment> {
    Ok(match method.doc_clusters {
        DocClusterMethod::Kmeans => {
            let topics: BTreeSet<&str> = docs.iter().map(|d| d.topic_id.as_str()).collect();
            let k = method.k.unwrap_or(topics.len());
            cluster_documents(docs, k, method.cluster_seed)?
        }
        DocClusterMethod::Gold => gold_topic_clusters(docs),
        DocClusterMethod::Single => single_cluster(docs),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct AssignmentRow {
    doc_id: String,
    cluster: usize,
}

fn assignment_csv(assignment: &DocAssignment) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (doc_id, &cluster) in assignment {
        w.serialize(AssignmentRow {
            doc_id: doc_id.clone(),
            cluster,
        })
        .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Internal(e.to_string()))
}

/// Reads an assignment CSV that must cover exactly the documents of `docs`.
fn read_assignment(path: &Path, docs: &[&Document]) -> CliResult<DocAssignment> {
    let bad = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let wanted: BTreeSet<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
    let mut assignment = DocAssignment::new();
    for row in reader.deserialize::<AssignmentRow>() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        if !wanted.contains(row.doc_id.as_str()) {
            return Err(bad(format!("document `{}` is not in the split", row.doc_id)));
        }
        if assignment.insert(row.doc_id.clone(), row.cluster).is_some() {
            return Err(bad(format!("document `{}` is assigned twice", row.doc_id)));
        }
    }
    if let Some(missing) = wanted.iter().find(|d| !assignment.contains_key(**d)) {
        return Err(bad(format!("document `{missing}` has no cluster")));
    }
    Ok(assignment)
}

pub fn cluster_docs(args: &ClusterDocsArgs) -> CliResult<()> {
    let ws = Workspace::open(&args.workspace)?;
    let docs = split_docs(&ws, args.split)?;
    let mut artifacts = Artifacts::new("cluster-docs", &args.out);
    artifacts.add_inputs(ws.input_digests());
    artifacts.set_seed(args.method.cluster_seed);
    artifacts.set_config(&serde_json::json!({
        "split": args.split,
        "method": format!("{:?}", args.method.doc_clusters).to_lowercase(),
        "k": args.method.k,
    }));
    artifacts.stage("cluster");
    let assignment = compute_assignment(&docs, &args.method)?;
    artifacts.write(&args.out, &assignment_csv(&assignment)?)?;
    artifacts.commit()?;
    let clusters: BTreeSet<usize> = assignment.values().copied().collect();
    println!(
        "{} documents in {} clusters -> {}",
        assignment.len(),
        clusters.len(),
        args.out.display()
    );
    Ok(())
}

fn jsonl<T: Serialize>(stage: &str, rows: &[T]) -> String {
    rows.iter()
        .map(|r| {
            let mut v = serde_json::to_value(r).expect("row serializes");
            v["stage"] = serde_json::Value::String(stage.to_string());
            v.to_string() + "\n"
        })
        .collect()
}

fn log_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".log.jsonl");
    out.with_file_name(name)
}

fn write_checkpoint(
    artifacts: &mut Artifacts,
    out: &Path,
    checkpoint: Checkpoint,
    pretrain: &[PretrainEpoch],
    epochs: &[TrainEpoch],
) -> CliResult<()> {
    artifacts.write(out, &checkpoint.to_bytes())?;
    let log = jsonl("pretrain", pretrain) + &jsonl("train", epochs);
    artifacts.write(&log_path(out), log.as_bytes())
}

fn meta_json(stage: &str, cfg: &TrainConfig, best: Option<(usize, f64)>, out: &Path) -> String {
    let meta = CheckpointMeta {
        stage: stage.to_string(),
        config: cfg.clone(),
        best_epoch: best.map(|b| b.0),
        best_dev_conll_f1: best.map(|b| b.1).filter(|f| f.is_finite()),
        manifest: file_name(&manifest_path_for(out)),
    };
    serde_json::to_string(&meta).expect("meta serializes")
}

fn load_checkpoint(path: &Path) -> CliResult<(Checkpoint, CheckpointMeta)> {
    let checkpoint = Checkpoint::load(path)?;
    let meta: CheckpointMeta = serde_json::from_str(&checkpoint.meta)
        .map_err(|e| CliError::Input(format!("{}: checkpoint metadata: {e}", path.display())))?;
    Ok((checkpoint, meta))
}

fn check_shape(params: &ModelParams<f32>, cfg: &TrainConfig, dim: usize, path: &Path) -> CliResult<()> {
    let want = model_shape(cfg, dim);
    let found = params.shape();
    if found != want {
        return Err(CliError::Input(format!(
            "{}: checkpoint shape {found:?} does not match the configuration ({want:?})",
            path.display()
        )));
    }
    Ok(())
}

pub fn pretrain(args: &TrainArgs) -> CliResult<()> {
    if args.init.is_some() {
        return Err(CliError::Input("--init applies to `train` only".into()));
    }
    let cfg = args.config.resolve()?;
    let ws = Workspace::open(&args.workspace)?;
    let mut artifacts = Artifacts::new("pretrain", &args.out);
    artifacts.add_inputs(ws.input_digests());
    artifacts.set_seed(cfg.seed);
    artifacts.set_config(&cfg);
    artifacts.stage("pretrain");
    let data = TrainingData::new(&ws.corpus, &ws.store, &cfg)?;
    let (params, history) = pretrain_mention_scorer(&data, init_params(&data.cfg, ws.store.dim()))?;
    let checkpoint = Checkpoint::new(params, meta_json("pretrain", &data.cfg, None, &args.out));
    write_checkpoint(&mut artifacts, &args.out, checkpoint, &history, &[])?;
    artifacts.commit()?;
    if let Some(last) = history.last() {
        println!(
            "pretrained {} epochs; dev candidate recall {:.4}",
            history.len(),
            last.dev_recall
        );
    }
    Ok(())
}

pub fn train(args: &TrainArgs) -> CliResult<()> {
    let cfg = args.config.resolve()?;
    let ws = Workspace::open(&args.workspace)?;
    let mut artifacts = Artifacts::new("train", &args.out);
    artifacts.add_inputs(ws.input_digests());
    artifacts.set_seed(cfg.seed);
    artifacts.set_config(&cfg);
    let data = TrainingData::new(&ws.corpus, &ws.store, &cfg)?;
    let outcome = match &args.init {
        Some(path) => {
            artifacts.add_input_file(path)?;
            let (checkpoint, _) = load_checkpoint(path)?;
            check_shape(&checkpoint.params, &data.cfg, ws.store.dim(), path)?;
            artifacts.stage("train");
            run_train(&data, checkpoint.params)?
        }
        None => {
            artifacts.stage("pretrain+train");
            fit(&ws.corpus, &ws.store, &cfg)?
        }
    };
    artifacts.stage("report");
    let report = data.dev_report(&outcome.params)?;
    let best = Some((outcome.best_epoch, outcome.best_dev_conll_f1));
    let mut checkpoint = Checkpoint::new(outcome.params, meta_json("train", &data.cfg, best, &args.out));
    checkpoint.optimizer = Some(outcome.optimizer);
    write_checkpoint(
        &mut artifacts,
        &args.out,
        checkpoint,
        &outcome.pretrain,
        &outcome.epochs,
    )?;
    artifacts.commit()?;
    match report {
        Some(r) => println!("best epoch {} on dev:\n{r}", outcome.best_epoch),
        None => println!("trained {} epochs (no dev split)", outcome.epochs.len()),
    }
    Ok(())
}

pub fn predict(args: &PredictArgs) -> CliResult<()> {
    let Some(ckpt_path) = &args.checkpoint else {
        return Err(CliError::Input(
            "checkpoint required: pass --checkpoint with a model written by `train`".into(),
        ));
    };
    let ws = Workspace::open(&args.workspace)?;
    let (checkpoint, meta) = load_checkpoint(ckpt_path)?;
    let mut cfg = meta.config;
    if let Some(m) = args.mentions {
        cfg.mentions = m;
    }
    if let Some(t) = args.tau {
        cfg.tau = t;
    }
    if let Some(l) = args.lambda {
        cfg.lambda = Some(l);
    }
    cfg.validate()?;
    check_shape(&checkpoint.params, &cfg, ws.store.dim(), ckpt_path)?;

    let clusters_path = args.out.join("clusters.json");
    let mut artifacts = Artifacts::new("predict", &clusters_path);
    artifacts.add_inputs(ws.input_digests());
    artifacts.add_input_file(ckpt_path)?;
    let inference = InferenceConfig::from(&cfg);
    artifacts.set_config(&serde_json::json!({
        "split": args.split,
        "inference": inference,
        "doc_clusters": args.assignment.as_ref().map_or_else(
            || format!("{:?}", args.method.doc_clusters).to_lowercase(),
            |p| p.display().to_string(),
        ),
        "k": args.method.k,
    }));
    artifacts.set_seed(args.method.cluster_seed);

    let docs = split_docs(&ws, args.split)?;
    artifacts.stage("doc-clusters");
    let assignment = match &args.assignment {
        Some(path) => {
            artifacts.add_input_file(path)?;
            read_assignment(path, &docs)?
        }
        None => compute_assignment(&docs, &args.method)?,
    };
    artifacts.stage("predict");
    let prediction = run_predict(&ws.corpus, &ws.store, &checkpoint.params, &assignment, &inference)?;

    artifacts.stage("write");
    artifacts.write(&clusters_path, (prediction.clusters_json() + "\n").as_bytes())?;
    let mut conll = Vec::new();
    write_conll(&mut conll, &docs, &prediction.clusters).map_err(|e| CliError::Internal(e.to_string()))?;
    artifacts.write(&args.out.join("response.conll"), &conll)?;
    artifacts.write(&args.out.join("assignment.csv"), &assignment_csv(&assignment)?)?;
    if args.pair_scores {
        let mut csv = Vec::new();
        write_pair_scores(&mut csv, &prediction.scores).map_err(|e| CliError::Internal(e.to_string()))?;
        artifacts.write(&args.out.join("pair_scores.csv"), &csv)?;
    }
    artifacts.commit()?;
    let mentions: usize = prediction.clusters.iter().map(Vec::len).sum();
    println!(
        "{} clusters over {mentions} mentions -> {}",
        prediction.clusters.len(),
        args.out.display()
    );
    Ok(())
}

/// Clusters from `predict`'s JSON (`{id: [{doc_id, start, end}]}`) or a
/// CoNLL file (by `.conll` extension).
fn read_response(path: &Path) -> CliResult<Clusters> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if path.extension().is_some_and(|e| e == "conll") {
        return Ok(read_conll(&text)?);
    }
    let map: BTreeMap<String, Vec<MentionKey>> = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: malformed clusters JSON: {e}", path.display())))?;
    Ok(map.into_values().collect())
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let ws = Workspace::open(&args.workspace)?;
    let docs = split_docs(&ws, args.split)?;
    let in_split: BTreeSet<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
    let mut artifacts = Artifacts::new("evaluate", &args.out);
    artifacts.add_inputs(ws.input_digests());
    artifacts.add_input_file(&args.response)?;
    artifacts.set_config(&serde_json::json!({
        "split": args.split,
        "mode": args.mode,
        "scope": args.scope,
        "singletons": args.singletons,
    }));
    artifacts.stage("evaluate");
    let response = read_response(&args.response)?;
    let key = ws
        .corpus
        .select_mentions(args.mode)
        .restrict(|m| in_split.contains(m.doc_id.as_str()))
        .key_clusters();
    let report = score(&key, &response, args.scope, args.singletons);
    artifacts.write(&args.out, &to_json(&report))?;
    artifacts.commit()?;
    if report.any_zero_denominator() {
        log::warn!("some metric had a zero denominator and was reported as 0");
    }
    println!("{report}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct AblationReport {
    seeds: Vec<u64>,
    per_seed: BTreeMap<u64, Vec<AblationRow>>,
    mean: Vec<AblationRow>,
}

pub fn ablate(args: &AblateArgs) -> CliResult<()> {
    if args.seeds.is_empty() {
        return Err(CliError::Input("--seeds needs at least one seed".into()));
    }
    let base = args.config.resolve()?;
    let ws = Workspace::open(&args.workspace)?;
    let mut artifacts = Artifacts::new("ablate", &args.out);
    artifacts.add_inputs(ws.input_digests());
    artifacts.set_config(&base);
    let mut per_seed = BTreeMap::new();
    for &seed in &args.seeds {
        artifacts.stage(&format!("seed {seed}"));
        let cfg = TrainConfig { seed, ..base.clone() };
        per_seed.insert(seed, ablation_suite(&ws.corpus, &ws.store, &cfg)?);
    }
    let n = args.seeds.len() as f64;
    let first = &per_seed[&args.seeds[0]];
    let mean: Vec<AblationRow> = (0..first.len())
        .map(|i| {
            let f1 = per_seed.values().map(|rows| rows[i].dev_conll_f1).sum::<f64>() / n;
            let delta = per_seed.values().map(|rows| rows[i].delta).sum::<f64>() / n;
            AblationRow {
                name: first[i].name.clone(),
                dev_conll_f1: f1,
                delta,
            }
        })
        .collect();
    let mut text = format!("dev CoNLL F1, mean over seeds {:?}\n", args.seeds);
    text.push_str(&format_ablation_table(&mean));
    for (seed, rows) in &per_seed {
        text.push_str(&format!("\nseed {seed}\n{}", format_ablation_table(rows)));
    }
    let report = AblationReport {
        seeds: args.seeds.clone(),
        per_seed,
        mean,
    };
    artifacts.write(&args.out, text.as_bytes())?;
    let mut json_path = args.out.clone().into_os_string();
    json_path.push(".json");
    artifacts.write(Path::new(&json_path), &to_json(&report))?;
    artifacts.commit()?;
    print!("{text}");
    Ok(())
}
