//! Prediction: candidates per document, pair scores per document cluster,
//! average-linkage clusters per document cluster.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{agglomerative_cluster, documents::groups, AffinityTable, DocAssignment};
use crate::config::{MentionSource, TrainConfig};
use crate::corpus::{ClusterKey, Corpus, MentionKey, MentionMode, MentionView};
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::evaluation::Clusters;
use crate::model::ModelParams;
use crate::pairs::{score_all_pairs, GroupScores};
use crate::spans::{gold_span_candidates, predicted_candidates, SpanCandidate};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub mode: MentionMode,
    pub mentions: MentionSource,
    pub max_span_width: usize,
    pub lambda: f64,
    pub tau: f64,
}

impl From<&TrainConfig> for InferenceConfig {
    fn from(cfg: &TrainConfig) -> Self {
        InferenceConfig {
            mode: cfg.mode,
            mentions: cfg.mentions,
            max_span_width: cfg.max_span_width(),
            lambda: cfg.lambda(),
            tau: cfg.tau,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Prediction {
    /// Clusters from every document cluster, in document-cluster order.
    pub clusters: Clusters,
    pub scores: Vec<GroupScores>,
}

impl Prediction {
    /// `{cluster_id: [{doc_id, start, end}]}` with ids `0..`.
    pub fn clusters_json(&self) -> String {
        let map: BTreeMap<String, &Vec<MentionKey>> = self
            .clusters
            .iter()
            .enumerate()
            .map(|(i, c)| (format!("{i:06}"), c))
            .collect();
        serde_json::to_string_pretty(&map).expect("clusters serialize")
    }
}

/// Candidates of one document: gold spans of the view, or the pruned top
/// spans under the current mention scorer.
pub fn document_candidates(
    corpus: &Corpus,
    store: &EmbeddingStore,
    params: &ModelParams<f32>,
    gold: &MentionView<'_>,
    doc_id: &str,
    cfg: &InferenceConfig,
) -> Result<Vec<SpanCandidate>> {
    let doc_index = corpus
        .document_index(doc_id)
        .ok_or_else(|| Error::Validation(format!("unknown document `{doc_id}`")))?;
    let doc = &corpus.documents()[doc_index];
    let x = store.require(doc_id)?.rows();
    match cfg.mentions {
        MentionSource::Gold => gold_span_candidates(doc, doc_index, x, &params.span, &gold.in_document(doc_id)),
        MentionSource::Predicted => {
            predicted_candidates(doc, doc_index, x, &params.span, cfg.max_span_width, cfg.lambda)
        }
    }
}

/// Runs the model separately on each document cluster of `assignment`.
pub fn predict(
    corpus: &Corpus,
    store: &EmbeddingStore,
    params: &ModelParams<f32>,
    assignment: &DocAssignment,
    cfg: &InferenceConfig,
) -> Result<Prediction> {
    let gold = corpus.select_mentions(cfg.mode);
    let pair_mode = cfg.mentions.pair_mode();
    let doc_groups: Vec<Vec<String>> = groups(assignment).into_values().collect();
    let scored: Vec<(Clusters, GroupScores)> = doc_groups
        .par_iter()
        .map(|docs| {
            let mut cands = Vec::new();
            for doc_id in docs {
                cands.extend(document_candidates(corpus, store, params, &gold, doc_id, cfg)?);
            }
            let group = score_all_pairs(vec![cands], &params.pair, pair_mode)?
                .pop()
                .expect("one group");
            let clusters = cluster_group(&group, cfg.tau);
            Ok((clusters, group))
        })
        .collect::<Result<_>>()?;
    let mut clusters = Vec::new();
    let mut scores = Vec::new();
    for (c, s) in scored {
        clusters.extend(c);
        scores.push(s);
    }
    Ok(Prediction { clusters, scores })
}

pub fn cluster_group(group: &GroupScores, tau: f64) -> Clusters {
    let table = AffinityTable::from_scores(group);
    agglomerative_cluster(&table, tau)
        .clusters()
        .into_iter()
        .map(|members| {
            members
                .into_iter()
                .map(|i| {
                    let c = &group.candidates[i];
                    MentionKey::new(c.doc_id.clone(), c.start, c.end)
                })
                .collect()
        })
        .collect()
}

/// Gold clusters of the view restricted to the documents in `assignment`.
pub fn key_clusters(gold: &MentionView<'_>, assignment: &DocAssignment) -> Clusters {
    gold.restrict(|m| assignment.contains_key(&m.doc_id)).key_clusters()
}

/// Gold cluster of every mention of the view.
pub fn gold_lookup(gold: &MentionView<'_>) -> HashMap<MentionKey, ClusterKey> {
    gold.mentions().iter().map(|m| (m.key(), m.cluster())).collect()
}

/// Fraction of gold mentions of `docs` that appear among the pruned
/// candidates.
pub fn candidate_recall(
    corpus: &Corpus,
    store: &EmbeddingStore,
    params: &ModelParams<f32>,
    gold: &MentionView<'_>,
    docs: &[String],
    cfg: &InferenceConfig,
) -> Result<f64> {
    let predicted = InferenceConfig {
        mentions: MentionSource::Predicted,
        ..*cfg
    };
    let per_doc: Vec<(usize, usize)> = docs
        .par_iter()
        .map(|doc_id| {
            let cands = document_candidates(corpus, store, params, gold, doc_id, &predicted)?;
            let kept: std::collections::HashSet<(usize, usize)> = cands.iter().map(|c| (c.start, c.end)).collect();
            let mentions = gold.in_document(doc_id);
            let hit = mentions.iter().filter(|m| kept.contains(&(m.start, m.end))).count();
            Ok((hit, mentions.len()))
        })
        .collect::<Result<_>>()?;
    let (hit, total) = per_doc.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}
