//! Mention-scorer pre-training and pair training with dynamic pruning.
//!
//! Pre-training labels every enumerated span of the training documents by
//! exact match with a gold mention and fits `s_m` with binary cross-entropy,
//! stopping when dev candidate recall stops improving. Pair training then
//! visits each training topic per epoch: candidates are recomputed under the
//! current mention scorer and pruned to `ceil(lambda T)` per document,
//! labeled pairs are drawn, and every step re-runs the forward pass for the
//! spans it touches so gradients reach `FFNN_a`, `FFNN_m`, the attention
//! projection and the width embeddings. The epoch with the best dev CoNLL F1
//! is kept.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::gold_topic_clusters;
use crate::config::{MentionSource, TrainConfig};
use crate::corpus::{Corpus, Document, MentionView, Split};
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalReport, Scope, SingletonMode};
use crate::inference::{candidate_recall, document_candidates, gold_lookup, key_clusters, predict, InferenceConfig};
use crate::model::{is_span_tensor, ModelParams, ModelShape};
use crate::neural::{bce_loss, AdamState, LossKind, Mode, Parameters, Rng, Scalar};
use crate::pairs::{build_training_pairs, pair_backward, pair_forward, PairMode};
use crate::spans::{
    enumerate_spans, mention_backward, mention_logits, represent_spans, span_backward, SpanCandidate, SpanParams,
};

/// Independent random streams per stage, all derived from the run seed.
fn stage_rng(seed: u64, stage: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}

const STREAM_INIT: u64 = 0;
const STREAM_PRETRAIN: u64 = 1;
const STREAM_TRAIN: u64 = 2;

pub fn model_shape(cfg: &TrainConfig, dim: usize) -> ModelShape {
    ModelShape {
        dim,
        max_span_width: cfg.max_span_width(),
        width_dim: cfg.width_dim,
        mention_hidden: cfg.hidden,
        pair_hidden: cfg.hidden,
        dropout: cfg.dropout,
    }
}

/// Xavier-initialized parameters for `cfg.seed`.
pub fn init_params(cfg: &TrainConfig, dim: usize) -> ModelParams<f32> {
    ModelParams::new(&model_shape(cfg, dim), &mut stage_rng(cfg.seed, STREAM_INIT))
}

/// Where the span side of a pair batch comes from.
pub enum SpanInputs<'a, T> {
    /// Recompute `g` (and `s_m`) with the current parameters. `spans` holds
    /// `(document slot, start, end)`.
    Recompute {
        docs: Vec<ArrayView2<'a, T>>,
        spans: Vec<(usize, usize, usize)>,
    },
    /// Frozen representations and mention scores.
    Fixed { g: Array2<T>, mention_scores: Array1<T> },
}

pub struct PairBatch<'a, T> {
    pub inputs: SpanInputs<'a, T>,
    /// Indices into the batch's spans.
    pub pairs: Vec<(usize, usize)>,
    pub labels: Array1<T>,
}

/// Loss of one pair batch and the gradient for every tensor of `params`.
/// Tensors that do not influence the loss get zero gradients.
pub fn pair_step<T: Scalar>(
    params: &ModelParams<T>,
    batch: &PairBatch<'_, T>,
    pair_mode: PairMode,
    loss_kind: LossKind,
    mut mode: Mode<'_>,
) -> Result<(T, ModelParams<T>)> {
    let mut grads = params.zeros_like();
    let gdim = params.span.repr_dim();

    // Span side: g for every batch span, plus caches per document.
    struct DocPart<T> {
        slot: usize,
        rows: Vec<usize>,
        g: Array2<T>,
        cache: crate::spans::SpanCache<T>,
    }
    let mut parts: Vec<DocPart<T>> = Vec::new();
    let g = match &batch.inputs {
        SpanInputs::Fixed { g, .. } => g.clone(),
        SpanInputs::Recompute { docs, spans } => {
            let mut by_doc: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (row, &(slot, _, _)) in spans.iter().enumerate() {
                by_doc.entry(slot).or_default().push(row);
            }
            let mut g = Array2::<T>::zeros((spans.len(), gdim));
            for (slot, rows) in by_doc {
                let local: Vec<(usize, usize)> = rows.iter().map(|&r| (spans[r].1, spans[r].2)).collect();
                let (gd, cache) = represent_spans(docs[slot], &local, &params.span)?;
                for (k, &r) in rows.iter().enumerate() {
                    g.row_mut(r).assign(&gd.row(k));
                }
                parts.push(DocPart {
                    slot,
                    rows,
                    g: gd,
                    cache,
                });
            }
            g
        }
    };

    let mut mention_cache = None;
    let mention_scores: Option<Array1<T>> = match (pair_mode, &batch.inputs) {
        (PairMode::Gold, _) => None,
        (PairMode::Full, SpanInputs::Fixed { mention_scores, .. }) => Some(mention_scores.clone()),
        (PairMode::Full, SpanInputs::Recompute { .. }) => {
            let (sm, cache) = params.span.mention_scorer.forward(g.view(), mode.reborrow())?;
            mention_cache = Some(cache);
            Some(sm)
        }
    };

    let (sa, pair_cache) = pair_forward(g.view(), &batch.pairs, &params.pair, mode.reborrow())?;
    let mut logits = sa;
    if let Some(sm) = &mention_scores {
        for (l, &(a, b)) in logits.iter_mut().zip(&batch.pairs) {
            *l += sm[a] + sm[b];
        }
    }
    let (loss, d_logits) = bce_loss(logits.view(), batch.labels.view(), loss_kind);

    let (pair_grads, mut d_g) = pair_backward(g.view(), &params.pair, &pair_cache, d_logits.view())?;
    grads.pair = pair_grads;

    if let SpanInputs::Recompute { docs, .. } = &batch.inputs {
        if let Some(cache) = &mention_cache {
            let mut d_sm = Array1::<T>::zeros(g.nrows());
            for (&dl, &(a, b)) in d_logits.iter().zip(&batch.pairs) {
                d_sm[a] += dl;
                d_sm[b] += dl;
            }
            let (m_grads, d_g_m) = params.span.mention_scorer.backward(cache, d_sm.view())?;
            grads.span.mention_scorer = m_grads;
            d_g += &d_g_m;
        }
        for part in &parts {
            let mut local = Array2::<T>::zeros((part.rows.len(), gdim));
            for (k, &r) in part.rows.iter().enumerate() {
                local.row_mut(k).assign(&d_g.row(r));
            }
            span_backward(
                docs[part.slot],
                part.g.view(),
                &part.cache,
                local.view(),
                &mut grads.span,
            );
        }
    }
    Ok((loss, grads))
}

/// Builds a pair batch over a slice of labeled pairs of one candidate list.
fn make_batch<'a>(
    cands: &[SpanCandidate],
    chunk: &[crate::pairs::LabeledPair],
    store: &'a EmbeddingStore,
    frozen: bool,
) -> Result<PairBatch<'a, f32>> {
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut order = Vec::new();
    let mut pairs = Vec::with_capacity(chunk.len());
    for p in chunk {
        let mut slot = |i: usize| {
            *local.entry(i).or_insert_with(|| {
                order.push(i);
                order.len() - 1
            })
        };
        let a = slot(p.a);
        let b = slot(p.b);
        pairs.push((a, b));
    }
    let labels = Array1::from_iter(chunk.iter().map(|p| p.label));
    let inputs = if frozen {
        let gdim = cands.first().map_or(0, |c| c.g.len());
        let mut g = Array2::zeros((order.len(), gdim));
        for (k, &i) in order.iter().enumerate() {
            g.row_mut(k).assign(&cands[i].g);
        }
        let mention_scores = Array1::from_iter(order.iter().map(|&i| cands[i].mention_score));
        SpanInputs::Fixed { g, mention_scores }
    } else {
        let mut doc_slot: BTreeMap<usize, usize> = BTreeMap::new();
        let mut docs = Vec::new();
        let mut spans = Vec::with_capacity(order.len());
        for &i in &order {
            let c = &cands[i];
            let slot = match doc_slot.get(&c.doc_index) {
                Some(&s) => s,
                None => {
                    docs.push(store.require(&c.doc_id)?.rows());
                    doc_slot.insert(c.doc_index, docs.len() - 1);
                    docs.len() - 1
                }
            };
            spans.push((slot, c.start, c.end));
        }
        SpanInputs::Recompute { docs, spans }
    };
    Ok(PairBatch { inputs, pairs, labels })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub dev_recall: f64,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub pairs: usize,
    pub dev_conll_f1: f64,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub optimizer: AdamState<ModelParams<f32>>,
    pub pretrain: Vec<PretrainEpoch>,
    pub epochs: Vec<TrainEpoch>,
    /// 1-based; 0 when no epoch improved on the starting point.
    pub best_epoch: usize,
    pub best_dev_conll_f1: f64,
}

/// Shared read-only state of a run.
pub struct TrainingData<'a> {
    pub corpus: &'a Corpus,
    pub store: &'a EmbeddingStore,
    pub cfg: TrainConfig,
    pub gold: MentionView<'a>,
    pub train_docs: Vec<&'a Document>,
    pub dev_docs: Vec<&'a Document>,
}

impl<'a> TrainingData<'a> {
    pub fn new(corpus: &'a Corpus, store: &'a EmbeddingStore, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let train_docs = corpus.split_documents(Split::Train);
        if train_docs.is_empty() {
            return Err(Error::Empty("the train split has no documents".into()));
        }
        let dev_docs = corpus.split_documents(Split::Dev);
        for d in train_docs.iter().chain(&dev_docs) {
            let m = store.require(&d.doc_id)?;
            if m.len() != d.len() {
                return Err(Error::AlignmentMismatch {
                    doc_id: d.doc_id.clone(),
                    rows: m.len(),
                    tokens: d.len(),
                });
            }
        }
        Ok(TrainingData {
            corpus,
            store,
            cfg: cfg.resolved(),
            gold: corpus.select_mentions(cfg.mode),
            train_docs,
            dev_docs,
        })
    }

    fn inference(&self) -> InferenceConfig {
        InferenceConfig::from(&self.cfg)
    }

    fn dev_ids(&self) -> Vec<String> {
        self.dev_docs.iter().map(|d| d.doc_id.clone()).collect()
    }

    /// Dev report with documents grouped by gold topic.
    pub fn dev_report(&self, params: &ModelParams<f32>) -> Result<Option<EvalReport>> {
        if self.dev_docs.is_empty() {
            return Ok(None);
        }
        let assignment = gold_topic_clusters(&self.dev_docs);
        let prediction = predict(self.corpus, self.store, params, &assignment, &self.inference())?;
        let key = key_clusters(&self.gold, &assignment);
        Ok(Some(evaluate(
            &key,
            &prediction.clusters,
            Scope::Combined,
            SingletonMode::Include,
        )))
    }

    /// Candidate recall on dev, or on train when there is no dev split.
    fn recall(&self, params: &ModelParams<f32>) -> Result<f64> {
        let docs = if self.dev_docs.is_empty() {
            self.train_docs.iter().map(|d| d.doc_id.clone()).collect()
        } else {
            self.dev_ids()
        };
        candidate_recall(self.corpus, self.store, params, &self.gold, &docs, &self.inference())
    }
}

/// Trains `s_m` (with the attention projection and width embeddings) as a
/// binary mention classifier over all enumerated training spans.
pub fn pretrain_mention_scorer(
    data: &TrainingData<'_>,
    mut params: ModelParams<f32>,
) -> Result<(ModelParams<f32>, Vec<PretrainEpoch>)> {
    let cfg = &data.cfg;
    let mut rng = stage_rng(cfg.seed, STREAM_PRETRAIN);
    let mut samples: Vec<(usize, usize, usize, f32)> = Vec::new();
    let mut any_gold = false;
    for (slot, doc) in data.train_docs.iter().enumerate() {
        let gold: std::collections::HashSet<(usize, usize)> = data
            .gold
            .in_document(&doc.doc_id)
            .iter()
            .map(|m| (m.start, m.end))
            .collect();
        for (start, end) in enumerate_spans(doc, cfg.max_span_width()) {
            let label = gold.contains(&(start, end));
            any_gold |= label;
            samples.push((slot, start, end, if label { 1.0 } else { 0.0 }));
        }
    }
    if samples.is_empty() || !any_gold {
        return Err(Error::Empty("no gold mentions among the training spans".into()));
    }
    let xs: Vec<ArrayView2<f32>> = data
        .train_docs
        .iter()
        .map(|d| data.store.require(&d.doc_id).map(|m| m.rows()))
        .collect::<Result<_>>()?;

    let mut adam = AdamState::new(&params.span, cfg.adam());
    let mut history = Vec::new();
    let mut best = (data.recall(&params)?, params.span.clone());
    let mut stale = 0;
    for epoch in 1..=cfg.pretrain_epochs {
        let started = Instant::now();
        samples.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0;
        for chunk in samples.chunks(cfg.batch_size) {
            let (loss, grads) = pretrain_step(&params.span, &xs, chunk, cfg.loss, Mode::Train(&mut rng))?;
            adam.step(&mut params.span, &grads)?;
            total += loss as f64;
            steps += 1;
        }
        let recall = data.recall(&params)?;
        let stats = PretrainEpoch {
            epoch,
            loss: total / steps as f64,
            dev_recall: recall,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "pretrain epoch {epoch}: loss {:.5} candidate recall {:.4} ({:.1}s)",
            stats.loss,
            recall,
            stats.seconds
        );
        history.push(stats);
        if recall > best.0 {
            best = (recall, params.span.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.pretrain_patience {
                break;
            }
        }
    }
    params.span = best.1;
    Ok((params, history))
}

/// One mention-classification step over `(slot, start, end, label)` samples.
pub fn pretrain_step<T: Scalar>(
    params: &SpanParams<T>,
    xs: &[ArrayView2<'_, T>],
    chunk: &[(usize, usize, usize, f32)],
    loss_kind: LossKind,
    mut mode: Mode<'_>,
) -> Result<(T, SpanParams<T>)> {
    let mut by_doc: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, s) in chunk.iter().enumerate() {
        by_doc.entry(s.0).or_default().push(k);
    }
    let mut logits = Array1::<T>::zeros(chunk.len());
    let mut labels = Array1::<T>::zeros(chunk.len());
    let mut caches = Vec::new();
    for (slot, rows) in by_doc {
        let spans: Vec<(usize, usize)> = rows.iter().map(|&k| (chunk[k].1, chunk[k].2)).collect();
        let (l, cache) = mention_logits(xs[slot], &spans, params, mode.reborrow())?;
        for (j, &k) in rows.iter().enumerate() {
            logits[k] = l[j];
            labels[k] = T::of(chunk[k].3 as f64);
        }
        caches.push((slot, rows, cache));
    }
    let (loss, d_logits) = bce_loss(logits.view(), labels.view(), loss_kind);
    let mut grads = params.zeros_like();
    for (slot, rows, cache) in &caches {
        let d = Array1::from_iter(rows.iter().map(|&k| d_logits[k]));
        mention_backward(xs[*slot], params, cache, d.view(), &mut grads)?;
    }
    Ok((loss, grads))
}

/// Candidates of every training topic under the current parameters.
fn topic_candidates(
    data: &TrainingData<'_>,
    params: &ModelParams<f32>,
    docs: &[&Document],
) -> Result<Vec<SpanCandidate>> {
    let cfg = data.inference();
    let per_doc: Vec<Vec<SpanCandidate>> = docs
        .par_iter()
        .map(|d| document_candidates(data.corpus, data.store, params, &data.gold, &d.doc_id, &cfg))
        .collect::<Result<_>>()?;
    Ok(per_doc.into_iter().flatten().collect())
}

/// Pair training from `params` (pre-trained unless the ablation says otherwise).
pub fn train(data: &TrainingData<'_>, params: ModelParams<f32>) -> Result<TrainOutcome> {
    train_with_pretrain_log(data, params, Vec::new())
}

fn train_with_pretrain_log(
    data: &TrainingData<'_>,
    mut params: ModelParams<f32>,
    pretrain: Vec<PretrainEpoch>,
) -> Result<TrainOutcome> {
    let cfg = &data.cfg;
    let frozen = cfg.ablations.frozen_pruning;
    let pair_mode = cfg.mentions.pair_mode();
    let neg_ratio = if cfg.ablations.no_neg_sampling {
        None
    } else {
        Some(cfg.neg_ratio)
    };
    let lookup = gold_lookup(&data.gold);
    let mut rng = stage_rng(cfg.seed, STREAM_TRAIN);

    let mut topics: BTreeMap<&str, Vec<&Document>> = BTreeMap::new();
    for d in &data.train_docs {
        topics.entry(d.topic_id.as_str()).or_default().push(d);
    }
    let mut topic_ids: Vec<&str> = topics.keys().copied().collect();
    let fixed: Option<BTreeMap<&str, Vec<SpanCandidate>>> = if frozen {
        Some(
            topics
                .iter()
                .map(|(t, docs)| Ok((*t, topic_candidates(data, &params, docs)?)))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let mut adam = AdamState::new(&params, cfg.adam());
    let initial = data.dev_report(&params)?.map_or(f64::NEG_INFINITY, |r| r.conll_f1);
    let mut best = (initial, 0usize, params.clone(), adam.clone());
    let mut epochs = Vec::new();
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        topic_ids.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0usize;
        let mut n_pairs = 0usize;
        for topic in &topic_ids {
            let computed;
            let cands: &[SpanCandidate] = match &fixed {
                Some(map) => &map[topic],
                None => {
                    computed = topic_candidates(data, &params, &topics[topic])?;
                    &computed
                }
            };
            let mut pairs = build_training_pairs(cands, &lookup, neg_ratio, &mut rng);
            pairs.shuffle(&mut rng);
            n_pairs += pairs.len();
            for chunk in pairs.chunks(cfg.batch_size) {
                let batch = make_batch(cands, chunk, data.store, frozen)?;
                let (loss, grads) = pair_step(&params, &batch, pair_mode, cfg.loss, Mode::Train(&mut rng))?;
                if frozen {
                    adam.step_filtered(&mut params, &grads, |name| !is_span_tensor(name))?;
                } else {
                    adam.step(&mut params, &grads)?;
                }
                total += loss as f64;
                steps += 1;
            }
        }
        if !params.is_finite() {
            return Err(Error::Internal(format!("parameters diverged in epoch {epoch}")));
        }
        let dev = data.dev_report(&params)?;
        let dev_f1 = dev.as_ref().map_or(f64::NAN, |r| r.conll_f1);
        let stats = TrainEpoch {
            epoch,
            loss: if steps == 0 { 0.0 } else { total / steps as f64 },
            pairs: n_pairs,
            dev_conll_f1: dev_f1,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.5} pairs {n_pairs} dev CoNLL F1 {:.4} ({:.1}s)",
            stats.loss,
            dev_f1,
            stats.seconds
        );
        epochs.push(stats);
        // Without a dev split the last epoch wins.
        if dev.is_none() || dev_f1 > best.0 {
            best = (
                if dev.is_none() { best.0 } else { dev_f1 },
                epoch,
                params.clone(),
                adam.clone(),
            );
        }
    }
    let (best_f1, best_epoch, best_params, best_adam) = best;
    Ok(TrainOutcome {
        params: best_params,
        optimizer: best_adam,
        pretrain,
        epochs,
        best_epoch,
        best_dev_conll_f1: best_f1,
    })
}

/// Initialization, pre-training (unless ablated) and pair training.
pub fn fit(corpus: &Corpus, store: &EmbeddingStore, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let data = TrainingData::new(corpus, store, cfg)?;
    let params = init_params(&data.cfg, store.dim());
    let (params, pretrain) = if data.cfg.ablations.no_pretrain || data.cfg.mentions == MentionSource::Gold {
        (params, Vec::new())
    } else {
        pretrain_mention_scorer(&data, params)?
    };
    train_with_pretrain_log(&data, params, pretrain)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub dev_conll_f1: f64,
    pub delta: f64,
}

/// Base model and the three ablations, each trained from the same seed.
pub fn ablation_suite(corpus: &Corpus, store: &EmbeddingStore, cfg: &TrainConfig) -> Result<Vec<AblationRow>> {
    type Variant = (&'static str, fn(&mut TrainConfig));
    let variants: [Variant; 4] = [
        ("our model", |_| {}),
        ("- pre-train of mention scorer", |c| c.ablations.no_pretrain = true),
        ("- dynamic pruning", |c| c.ablations.frozen_pruning = true),
        ("- negative sampling", |c| c.ablations.no_neg_sampling = true),
    ];
    let mut rows: Vec<AblationRow> = Vec::new();
    for (name, apply) in variants {
        let mut c = cfg.clone();
        c.ablations = Default::default();
        apply(&mut c);
        let outcome = fit(corpus, store, &c)?;
        let f1 = outcome.best_dev_conll_f1;
        let base = rows.first().map_or(f1, |r| r.dev_conll_f1);
        log::info!("ablation `{name}`: dev CoNLL F1 {f1:.4}");
        rows.push(AblationRow {
            name: name.to_string(),
            dev_conll_f1: f1,
            delta: f1 - base,
        });
    }
    Ok(rows)
}

/// Table text with one row per variant.
pub fn format_ablation_table(rows: &[AblationRow]) -> String {
    let mut out = format!("{:<32} {:>8} {:>8}\n", "", "F1", "delta");
    for r in rows {
        out.push_str(&format!(
            "{:<32} {:>8.2} {:>+8.2}\n",
            r.name,
            100.0 * r.dev_conll_f1,
            100.0 * r.delta
        ));
    }
    out
}
