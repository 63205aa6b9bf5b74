//! Candidate spans, their representations and mention scores.
//!
//! A span `i = (start, end)` is represented as
//! `g_i = [x_start, x_end, x_hat_i, phi(width_i)]` where `x_hat_i` is an
//! attention-weighted average of the span's token vectors (one linear logit
//! per token, softmax over the span) and `phi` is a learned width embedding.

use std::cmp::Ordering;

use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD};

use crate::corpus::{Document, GoldMention};
use crate::error::{Error, Result};
use crate::neural::{xavier_init, Dense, Ffnn, Mode, Parameters, Rng, Scalar};

pub const WIDTH_DIM: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct SpanParams<T> {
    /// `D -> 1` projection producing per-token attention logits.
    pub attention: Dense<T>,
    /// `max_span_width x width_dim`; row `w - 1` embeds width `w`.
    pub width_embedding: Array2<T>,
    pub mention_scorer: Ffnn<T>,
}

impl<T: Scalar> SpanParams<T> {
    pub fn new(dim: usize, max_width: usize, width_dim: usize, hidden: usize, dropout: f64, rng: &mut Rng) -> Self {
        let attention = Dense::xavier(dim, 1, rng);
        let width_embedding = xavier_init((max_width, width_dim), rng);
        let mention_scorer = Ffnn::xavier(3 * dim + width_dim, hidden, dropout, rng);
        SpanParams {
            attention,
            width_embedding,
            mention_scorer,
        }
    }

    pub fn dim(&self) -> usize {
        self.attention.inputs()
    }

    pub fn max_width(&self) -> usize {
        self.width_embedding.nrows()
    }

    pub fn width_dim(&self) -> usize {
        self.width_embedding.ncols()
    }

    /// Length of `g`.
    pub fn repr_dim(&self) -> usize {
        3 * self.dim() + self.width_dim()
    }

    /// Width bucket, clamped to the table for over-long (gold) spans.
    pub fn width_bucket(&self, start: usize, end: usize) -> usize {
        (end - start).min(self.max_width() - 1)
    }

    pub fn cast<U: Scalar>(&self) -> SpanParams<U> {
        SpanParams {
            attention: Dense {
                weight: self.attention.weight.mapv(|v| U::of(v.f64())),
                bias: self.attention.bias.mapv(|v| U::of(v.f64())),
            },
            width_embedding: self.width_embedding.mapv(|v| U::of(v.f64())),
            mention_scorer: self.mention_scorer.cast(),
        }
    }
}

impl<T: Scalar> Parameters<T> for SpanParams<T> {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        let mut out = vec![
            (
                "span.attention.weight".to_string(),
                self.attention.weight.view().into_dyn(),
            ),
            ("span.attention.bias".to_string(), self.attention.bias.view().into_dyn()),
            (
                "span.width_embedding".to_string(),
                self.width_embedding.view().into_dyn(),
            ),
        ];
        out.extend(self.mention_scorer.named_tensors("span.mention_scorer"));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, T>)> {
        let mut out = vec![
            (
                "span.attention.weight".to_string(),
                self.attention.weight.view_mut().into_dyn(),
            ),
            (
                "span.attention.bias".to_string(),
                self.attention.bias.view_mut().into_dyn(),
            ),
            (
                "span.width_embedding".to_string(),
                self.width_embedding.view_mut().into_dyn(),
            ),
        ];
        out.extend(self.mention_scorer.named_tensors_mut("span.mention_scorer"));
        out
    }
}

/// A scored candidate mention.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanCandidate {
    pub doc_id: String,
    /// Position of the document in corpus order.
    pub doc_index: usize,
    pub start: usize,
    pub end: usize,
    pub g: Array1<f32>,
    pub mention_score: f32,
}

impl SpanCandidate {
    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    /// Canonical order: `(doc_index, start, end)`.
    pub fn order_key(&self) -> (usize, usize, usize) {
        (self.doc_index, self.start, self.end)
    }
}

/// All sentence-internal spans of width `1..=max_width`, ordered by `(start, end)`.
pub fn enumerate_spans(doc: &Document, max_width: usize) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    for &(s0, e0) in doc.sentences() {
        for start in s0..=e0 {
            let last = (start + max_width).min(e0 + 1);
            spans.extend((start..last).map(|end| (start, end)));
        }
    }
    spans
}

/// Softmax weights kept for backprop.
#[derive(Clone, Debug)]
pub struct SpanCache<T> {
    spans: Vec<(usize, usize)>,
    weights: Vec<Vec<T>>,
}

/// Builds `g` for each span over token matrix `x` (one row per token).
pub fn represent_spans<T: Scalar>(
    x: ArrayView2<T>,
    spans: &[(usize, usize)],
    params: &SpanParams<T>,
) -> Result<(Array2<T>, SpanCache<T>)> {
    let d = params.dim();
    if x.ncols() != d {
        return Err(Error::Shape(format!(
            "token vectors have {} columns, expected {d}",
            x.ncols()
        )));
    }
    let n_tokens = x.nrows();
    let logits = x.dot(&params.attention.weight.row(0)) + params.attention.bias[0];
    let mut g = Array2::<T>::zeros((spans.len(), params.repr_dim()));
    let mut weights = Vec::with_capacity(spans.len());
    for (row, &(start, end)) in spans.iter().enumerate() {
        if start > end || end >= n_tokens {
            return Err(Error::SpanOutOfRange {
                doc_id: String::new(),
                start,
                end,
                len: n_tokens,
            });
        }
        let local = logits.slice(s![start..=end]);
        let max = local.iter().copied().fold(T::neg_infinity(), T::max);
        let exp: Vec<T> = local.iter().map(|&a| (a - max).exp()).collect();
        let total: T = exp.iter().copied().sum();
        let w: Vec<T> = exp.into_iter().map(|e| e / total).collect();

        let mut out = g.row_mut(row);
        out.slice_mut(s![0..d]).assign(&x.row(start));
        out.slice_mut(s![d..2 * d]).assign(&x.row(end));
        {
            let mut head = out.slice_mut(s![2 * d..3 * d]);
            for (k, &wt) in w.iter().enumerate() {
                head.scaled_add(wt, &x.row(start + k));
            }
        }
        out.slice_mut(s![3 * d..])
            .assign(&params.width_embedding.row(params.width_bucket(start, end)));
        weights.push(w);
    }
    Ok((
        g,
        SpanCache {
            spans: spans.to_vec(),
            weights,
        },
    ))
}

/// Accumulates attention and width-embedding gradients from `d_g` (the
/// gradient w.r.t. each row of `g`) into `grads`. Token vectors are frozen.
pub fn span_backward<T: Scalar>(
    x: ArrayView2<T>,
    g: ArrayView2<T>,
    cache: &SpanCache<T>,
    d_g: ArrayView2<T>,
    grads: &mut SpanParams<T>,
) {
    let d = x.ncols();
    let mut d_logits = Array1::<T>::zeros(x.nrows());
    for (row, (&(start, end), w)) in cache.spans.iter().zip(&cache.weights).enumerate() {
        let d_head = d_g.slice(s![row, 2 * d..3 * d]);
        let head = g.slice(s![row, 2 * d..3 * d]);
        let base = head.dot(&d_head);
        for (k, &wt) in w.iter().enumerate() {
            let t = start + k;
            d_logits[t] += wt * (x.row(t).dot(&d_head) - base);
        }
        let bucket = grads.width_bucket(start, end);
        let mut wrow = grads.width_embedding.row_mut(bucket);
        wrow += &d_g.slice(s![row, 3 * d..]);
    }
    let mut aw = grads.attention.weight.row_mut(0);
    aw += &x.t().dot(&d_logits);
    grads.attention.bias[0] += d_logits.sum();
}

/// Representation of a single span.
pub fn span_representation<T: Scalar>(
    x: ArrayView2<T>,
    start: usize,
    end: usize,
    params: &SpanParams<T>,
) -> Result<Array1<T>> {
    let (g, _) = represent_spans(x, &[(start, end)], params)?;
    Ok(g.row(0).to_owned())
}

/// `ceil(lambda * tokens)`, tolerant of binary rounding in `lambda`.
pub fn pruned_count(lambda: f64, tokens: usize) -> usize {
    let raw = lambda * tokens as f64;
    let nearest = raw.round();
    if (raw - nearest).abs() < 1e-9 {
        nearest as usize
    } else {
        raw.ceil() as usize
    }
}

/// Indices of the `min(ceil(lambda T), n)` best spans, ties broken by
/// `(start, end)`, returned in `(start, end)` order.
pub fn prune_indices(spans: &[(usize, usize)], scores: &[f32], lambda: f64, tokens: usize) -> Vec<usize> {
    let keep = pruned_count(lambda, tokens).min(spans.len());
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => spans[a].cmp(&spans[b]),
        other => other,
    });
    order.truncate(keep);
    order.sort_by_key(|&i| spans[i]);
    order
}

pub fn prune_spans(candidates: Vec<SpanCandidate>, lambda: f64, tokens: usize) -> Vec<SpanCandidate> {
    let spans: Vec<_> = candidates.iter().map(|c| (c.start, c.end)).collect();
    let scores: Vec<_> = candidates.iter().map(|c| c.mention_score).collect();
    let keep = prune_indices(&spans, &scores, lambda, tokens);
    let mut slots: Vec<Option<SpanCandidate>> = candidates.into_iter().map(Some).collect();
    keep.into_iter()
        .map(|i| slots[i].take().expect("unique index"))
        .collect()
}

/// Enumerates, represents and scores every span of a document.
pub fn score_document_spans(
    doc: &Document,
    doc_index: usize,
    x: ArrayView2<f32>,
    params: &SpanParams<f32>,
    max_width: usize,
) -> Result<Vec<SpanCandidate>> {
    let spans = enumerate_spans(doc, max_width);
    let (g, _) = represent_spans(x, &spans, params).map_err(|e| with_doc(e, &doc.doc_id))?;
    let scores = params.mention_scorer.score(g.view())?;
    Ok(spans
        .iter()
        .zip(g.rows())
        .zip(scores.iter())
        .map(|((&(start, end), g), &mention_score)| SpanCandidate {
            doc_id: doc.doc_id.clone(),
            doc_index,
            start,
            end,
            g: g.to_owned(),
            mention_score,
        })
        .collect())
}

/// The top `ceil(lambda T)` spans of a document under the current mention scorer.
pub fn predicted_candidates(
    doc: &Document,
    doc_index: usize,
    x: ArrayView2<f32>,
    params: &SpanParams<f32>,
    max_width: usize,
    lambda: f64,
) -> Result<Vec<SpanCandidate>> {
    let all = score_document_spans(doc, doc_index, x, params, max_width)?;
    Ok(prune_spans(all, lambda, doc.len()))
}

/// One candidate per gold mention, ordered by `(start, end)`. No width cap,
/// no pruning; the mention score is left at zero because gold runs never
/// read it.
pub fn gold_span_candidates(
    doc: &Document,
    doc_index: usize,
    x: ArrayView2<f32>,
    params: &SpanParams<f32>,
    gold: &[&GoldMention],
) -> Result<Vec<SpanCandidate>> {
    let mut spans: Vec<(usize, usize)> = gold
        .iter()
        .filter(|m| m.doc_id == doc.doc_id)
        .map(|m| (m.start, m.end))
        .collect();
    spans.sort();
    spans.dedup();
    if spans.is_empty() {
        return Ok(Vec::new());
    }
    let (g, _) = represent_spans(x, &spans, params).map_err(|e| with_doc(e, &doc.doc_id))?;
    Ok(spans
        .iter()
        .zip(g.rows())
        .map(|(&(start, end), g)| SpanCandidate {
            doc_id: doc.doc_id.clone(),
            doc_index,
            start,
            end,
            g: g.to_owned(),
            mention_score: 0.0,
        })
        .collect())
}

fn with_doc(e: Error, doc_id: &str) -> Error {
    match e {
        Error::SpanOutOfRange { start, end, len, .. } => Error::SpanOutOfRange {
            doc_id: doc_id.to_string(),
            start,
            end,
            len,
        },
        other => other,
    }
}

/// Forward/backward for the mention scorer on a set of spans of one
/// document, used by pre-training and its gradient checks.
pub fn mention_logits<T: Scalar>(
    x: ArrayView2<T>,
    spans: &[(usize, usize)],
    params: &SpanParams<T>,
    mode: Mode<'_>,
) -> Result<(Array1<T>, MentionCache<T>)> {
    let (g, span_cache) = represent_spans(x, spans, params)?;
    let (logits, ffnn_cache) = params.mention_scorer.forward(g.view(), mode)?;
    Ok((
        logits,
        MentionCache {
            g,
            span_cache,
            ffnn_cache,
        },
    ))
}

pub struct MentionCache<T> {
    g: Array2<T>,
    span_cache: SpanCache<T>,
    ffnn_cache: crate::neural::FfnnCache<T>,
}

pub fn mention_backward<T: Scalar>(
    x: ArrayView2<T>,
    params: &SpanParams<T>,
    cache: &MentionCache<T>,
    d_logits: ndarray::ArrayView1<T>,
    grads: &mut SpanParams<T>,
) -> Result<()> {
    let (g_ffnn, d_g) = params.mention_scorer.backward(&cache.ffnn_cache, d_logits)?;
    grads.mention_scorer.accumulate(&g_ffnn);
    span_backward(x, cache.g.view(), &cache.span_cache, d_g.view(), grads);
    Ok(())
}
