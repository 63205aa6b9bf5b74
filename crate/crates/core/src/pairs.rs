//! Pairwise scoring `s(i, j) = s_m(i) + s_m(j) + s_a(i, j)` with
//! `s_a = FFNN_a([g_i, g_j, g_i * g_j])`, and labeled pair sampling.

use std::collections::HashMap;
use std::io::Write;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClusterKey, MentionKey};
use crate::error::{Error, Result};
use crate::neural::{sigmoid, Ffnn, FfnnCache, Mode, Parameters, Rng, Scalar};
use crate::spans::SpanCandidate;

/// `Full` adds both mention scores to `s_a`; `Gold` uses `s_a` alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    Full,
    Gold,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairParams<T> {
    pub scorer: Ffnn<T>,
}

impl<T: Scalar> PairParams<T> {
    pub fn new(repr_dim: usize, hidden: usize, dropout: f64, rng: &mut Rng) -> Self {
        PairParams {
            scorer: Ffnn::xavier(3 * repr_dim, hidden, dropout, rng),
        }
    }

    pub fn repr_dim(&self) -> usize {
        self.scorer.inputs() / 3
    }

    pub fn cast<U: Scalar>(&self) -> PairParams<U> {
        PairParams {
            scorer: self.scorer.cast(),
        }
    }
}

impl<T: Scalar> Parameters<T> for PairParams<T> {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        self.scorer.named_tensors("pair.scorer")
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, T>)> {
        self.scorer.named_tensors_mut("pair.scorer")
    }
}

/// `[g_a, g_b, g_a * g_b]`
pub fn pair_features<T: Scalar>(ga: ArrayView1<T>, gb: ArrayView1<T>) -> Array1<T> {
    let prod = &ga * &gb;
    concatenate(Axis(0), &[ga, gb, prod.view()]).expect("equal-length vectors")
}

/// Score of one pair given in canonical order.
pub fn pair_score(a: &SpanCandidate, b: &SpanCandidate, params: &PairParams<f32>, mode: PairMode) -> Result<f32> {
    if a.order_key() >= b.order_key() {
        return Err(Error::Internal(format!(
            "pair ({}, {}) is not in canonical order",
            MentionKey::new(a.doc_id.clone(), a.start, a.end),
            MentionKey::new(b.doc_id.clone(), b.start, b.end)
        )));
    }
    let x = pair_features(a.g.view(), b.g.view()).insert_axis(Axis(0));
    let sa = params.scorer.score(x.view())?[0];
    Ok(match mode {
        PairMode::Full => a.mention_score + b.mention_score + sa,
        PairMode::Gold => sa,
    })
}

/// Upper-triangular pair scores of one group of candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupScores {
    pub candidates: Vec<SpanCandidate>,
    /// Condensed row-major upper triangle; see [`condensed_index`].
    pub scores: Vec<f32>,
}

pub fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl GroupScores {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn score(&self, i: usize, j: usize) -> f32 {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.scores[condensed_index(self.len(), i, j)]
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f32)> + '_ {
        let n = self.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j, self.score(i, j))))
    }
}

const PAIR_CHUNK: usize = 1024;

/// Scores every unordered pair inside each group. Candidates are sorted into
/// canonical order first; groups never interact.
///
/// The first layer of `FFNN_a` is split as `W = [W1 | W2 | W3]` so that
/// `W1 g_i` and `W2 g_j` are computed once per candidate instead of once per
/// pair.
pub fn score_all_pairs(
    groups: Vec<Vec<SpanCandidate>>,
    params: &PairParams<f32>,
    mode: PairMode,
) -> Result<Vec<GroupScores>> {
    groups
        .into_iter()
        .map(|mut cands| {
            cands.sort_by_key(|c| c.order_key());
            let scores = score_group(&cands, params, mode)?;
            Ok(GroupScores {
                candidates: cands,
                scores,
            })
        })
        .collect()
}

fn score_group(cands: &[SpanCandidate], params: &PairParams<f32>, mode: PairMode) -> Result<Vec<f32>> {
    let n = cands.len();
    if n < 2 {
        return Ok(Vec::new());
    }
    let gdim = params.repr_dim();
    let mut g = Array2::<f32>::zeros((n, gdim));
    for (mut row, c) in g.rows_mut().into_iter().zip(cands) {
        if c.g.len() != gdim {
            return Err(Error::Shape(format!(
                "candidate representation has {} values, scorer expects {gdim}",
                c.g.len()
            )));
        }
        row.assign(&c.g);
    }
    let w = &params.scorer.hidden.weight;
    let left = g.dot(&w.slice(s![.., 0..gdim]).t()) + &params.scorer.hidden.bias;
    let right = g.dot(&w.slice(s![.., gdim..2 * gdim]).t());
    let w_prod = w.slice(s![.., 2 * gdim..]);
    let w_out = params.scorer.output.weight.row(0);
    let b_out = params.scorer.output.bias[0];

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let chunks: Vec<Vec<f32>> = pairs
        .par_chunks(PAIR_CHUNK)
        .map(|chunk| {
            let mut prod = Array2::<f32>::zeros((chunk.len(), gdim));
            for (mut row, &(i, j)) in prod.rows_mut().into_iter().zip(chunk) {
                row.assign(&(&g.row(i) * &g.row(j)));
            }
            let mut h = prod.dot(&w_prod.t());
            for (mut row, &(i, j)) in h.rows_mut().into_iter().zip(chunk) {
                row += &left.row(i);
                row += &right.row(j);
                row.mapv_inplace(|v| v.max(0.0));
            }
            let sa = h.dot(&w_out) + b_out;
            chunk
                .iter()
                .zip(sa.iter())
                .map(|(&(i, j), &sa)| match mode {
                    PairMode::Full => cands[i].mention_score + cands[j].mention_score + sa,
                    PairMode::Gold => sa,
                })
                .collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// A training pair referring to positions in a candidate list.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledPair {
    pub a: usize,
    pub b: usize,
    pub label: f32,
}

/// Positives are all candidate pairs whose exactly-matched gold mentions share
/// a cluster. Negatives are drawn uniformly without replacement from the
/// remaining pairs: `min(neg_ratio * positives, available)` of them, or all of
/// them when `neg_ratio` is `None`. Output is positives then negatives, each
/// in canonical order.
pub fn build_training_pairs(
    candidates: &[SpanCandidate],
    gold: &HashMap<MentionKey, ClusterKey>,
    neg_ratio: Option<usize>,
    rng: &mut Rng,
) -> Vec<LabeledPair> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| candidates[i].order_key());
    let clusters: Vec<Option<&ClusterKey>> = candidates
        .iter()
        .map(|c| gold.get(&MentionKey::new(c.doc_id.clone(), c.start, c.end)))
        .collect();

    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (oi, &i) in order.iter().enumerate() {
        for &j in &order[oi + 1..] {
            let same = matches!((clusters[i], clusters[j]), (Some(a), Some(b)) if a == b);
            if same {
                positives.push(LabeledPair { a: i, b: j, label: 1.0 });
            } else {
                negatives.push(LabeledPair { a: i, b: j, label: 0.0 });
            }
        }
    }
    let take = match neg_ratio {
        Some(r) => (r * positives.len()).min(negatives.len()),
        None => negatives.len(),
    };
    if take < negatives.len() {
        let mut picked = sample(rng, negatives.len(), take).into_vec();
        picked.sort_unstable();
        negatives = picked.into_iter().map(|k| negatives[k]).collect();
    }
    positives.extend(negatives);
    positives
}

/// Cached activations of a pair-scorer forward pass over a batch.
pub struct PairCache<T> {
    pairs: Vec<(usize, usize)>,
    ffnn: FfnnCache<T>,
}

/// `s_a` for `pairs` (indices into the rows of `g`).
pub fn pair_forward<T: Scalar>(
    g: ArrayView2<T>,
    pairs: &[(usize, usize)],
    params: &PairParams<T>,
    mode: Mode<'_>,
) -> Result<(Array1<T>, PairCache<T>)> {
    let gdim = g.ncols();
    let mut x = Array2::<T>::zeros((pairs.len(), 3 * gdim));
    for (mut row, &(a, b)) in x.rows_mut().into_iter().zip(pairs) {
        row.slice_mut(s![0..gdim]).assign(&g.row(a));
        row.slice_mut(s![gdim..2 * gdim]).assign(&g.row(b));
        row.slice_mut(s![2 * gdim..]).assign(&(&g.row(a) * &g.row(b)));
    }
    let (sa, ffnn) = params.scorer.forward(x.view(), mode)?;
    Ok((
        sa,
        PairCache {
            pairs: pairs.to_vec(),
            ffnn,
        },
    ))
}

/// Returns `FFNN_a` gradients and the gradient w.r.t. each row of `g`.
pub fn pair_backward<T: Scalar>(
    g: ArrayView2<T>,
    params: &PairParams<T>,
    cache: &PairCache<T>,
    d_sa: ArrayView1<T>,
) -> Result<(PairParams<T>, Array2<T>)> {
    let gdim = g.ncols();
    let (grads, dx) = params.scorer.backward(&cache.ffnn, d_sa)?;
    let mut d_g = Array2::<T>::zeros(g.raw_dim());
    for (row, &(a, b)) in dx.rows().into_iter().zip(&cache.pairs) {
        let d_prod = row.slice(s![2 * gdim..]);
        let da = &row.slice(s![0..gdim]) + &(&d_prod * &g.row(b));
        let db = &row.slice(s![gdim..2 * gdim]) + &(&d_prod * &g.row(a));
        let mut ra = d_g.row_mut(a);
        ra += &da;
        let mut rb = d_g.row_mut(b);
        rb += &db;
    }
    Ok((PairParams { scorer: grads }, d_g))
}

/// Writes `doc_a,start_a,end_a,doc_b,start_b,end_b,raw_score,probability`.
pub fn write_pair_scores(w: &mut impl Write, groups: &[GroupScores]) -> std::io::Result<()> {
    writeln!(w, "doc_a,start_a,end_a,doc_b,start_b,end_b,raw_score,probability")?;
    for group in groups {
        for (i, j, score) in group.pairs() {
            let (a, b) = (&group.candidates[i], &group.candidates[j]);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                csv_field(&a.doc_id),
                a.start,
                a.end,
                csv_field(&b.doc_id),
                b.start,
                b.end,
                score,
                sigmoid(score)
            )?;
        }
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::MentionType;
    use crate::neural::{Dense, Rng};
    use ndarray::array;
    use rand::SeedableRng;

    fn cand(doc_index: usize, start: usize, g: Array1<f32>, sm: f32) -> SpanCandidate {
        SpanCandidate {
            doc_id: format!("d{doc_index}"),
            doc_index,
            start,
            end: start,
            g,
            mention_score: sm,
        }
    }

    #[test]
    fn additivity_and_gold_mode() {
        let params = PairParams {
            scorer: Ffnn::<f32>::zeros(6, 4, 0.0),
        };
        let a = cand(0, 0, array![1.0, 2.0], 1.5);
        let b = cand(0, 3, array![-1.0, 0.5], -0.5);
        assert_eq!(pair_score(&a, &b, &params, PairMode::Full).unwrap(), 1.0);
        assert_eq!(pair_score(&a, &b, &params, PairMode::Gold).unwrap(), 0.0);
        assert!(pair_score(&b, &a, &params, PairMode::Full).is_err());
        assert!(pair_score(&a, &a, &params, PairMode::Full).is_err());
    }

    #[test]
    fn hand_evaluated_single_hidden_unit() {
        // input = [ga, gb, ga*gb] = [1, 2, 3, -1, 3, -2]
        let params = PairParams {
            scorer: Ffnn {
                hidden: Dense {
                    weight: array![[0.5, -1.0, 0.25, 1.0, 2.0, 0.5]],
                    bias: array![0.1],
                },
                output: Dense {
                    weight: array![[2.0]],
                    bias: array![-0.3],
                },
                dropout: 0.0,
            },
        };
        let a = cand(0, 0, array![1.0, 2.0], 0.0);
        let b = cand(1, 0, array![3.0, -1.0], 0.0);
        // pre = 0.5 - 2 + 0.75 - 1 + 6 - 1 + 0.1 = 3.35 -> 2 * 3.35 - 0.3
        let s = pair_score(&a, &b, &params, PairMode::Gold).unwrap();
        assert!((s - 6.4).abs() < 1e-6, "{s}");
    }

    fn random_candidates(n: usize, gdim: usize, seed: u64) -> Vec<SpanCandidate> {
        let mut rng = Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let g: Array1<f32> = crate::neural::xavier_init::<f32>((1, gdim), &mut rng).row(0).to_owned() * 2.0;
                cand(i % 3, i, g, (i as f32 * 0.37).sin())
            })
            .collect()
    }

    #[test]
    fn table_sizes() {
        let mut rng = Rng::seed_from_u64(1);
        let params = PairParams::<f32>::new(4, 8, 0.0, &mut rng);
        let groups = vec![random_candidates(4, 4, 2)];
        assert_eq!(
            score_all_pairs(groups, &params, PairMode::Full).unwrap()[0]
                .scores
                .len(),
            6
        );
        let groups = vec![random_candidates(3, 4, 3), random_candidates(2, 4, 4)];
        let out = score_all_pairs(groups, &params, PairMode::Full).unwrap();
        assert_eq!(out.iter().map(|g| g.scores.len()).sum::<usize>(), 4);
    }

    #[test]
    fn batch_path_matches_pairwise() {
        let mut rng = Rng::seed_from_u64(5);
        let params = PairParams::<f32>::new(12, 32, 0.3, &mut rng);
        let mut cands = random_candidates(30, 12, 6);
        cands.reverse();
        for mode in [PairMode::Full, PairMode::Gold] {
            let table = score_all_pairs(vec![cands.clone()], &params, mode).unwrap();
            let group = &table[0];
            for (i, j, s) in group.pairs() {
                let direct = pair_score(&group.candidates[i], &group.candidates[j], &params, mode).unwrap();
                assert!((s - direct).abs() <= 1e-4 * (1.0 + direct.abs()), "{s} vs {direct}");
            }
        }
    }

    fn gold_map(entries: &[(&SpanCandidate, &str)]) -> HashMap<MentionKey, ClusterKey> {
        entries
            .iter()
            .map(|(c, id)| {
                (
                    MentionKey::new(c.doc_id.clone(), c.start, c.end),
                    ClusterKey {
                        mention_type: MentionType::Event,
                        cluster_id: id.to_string(),
                    },
                )
            })
            .collect()
    }

    #[test]
    fn positives_follow_gold_clusters() {
        let cands = random_candidates(6, 2, 0);
        let gold = gold_map(&[(&cands[0], "x"), (&cands[1], "x"), (&cands[2], "x"), (&cands[3], "y")]);
        let pairs = build_training_pairs(&cands, &gold, None, &mut Rng::seed_from_u64(0));
        assert_eq!(pairs.iter().filter(|p| p.label == 1.0).count(), 3);
        assert_eq!(pairs.len(), 15);
    }

    #[test]
    fn negatives_are_clamped_and_seeded() {
        // 3 positives among 6 candidates -> 12 negatives available.
        let cands = random_candidates(6, 2, 0);
        let gold = gold_map(&[(&cands[0], "x"), (&cands[1], "x"), (&cands[2], "x")]);
        let pairs = build_training_pairs(&cands, &gold, Some(20), &mut Rng::seed_from_u64(0));
        assert_eq!(pairs.iter().filter(|p| p.label == 0.0).count(), 12);

        // 5 positives, many negatives -> exactly 100 sampled.
        let cands = random_candidates(150, 2, 1);
        let gold = gold_map(&[
            (&cands[0], "a"),
            (&cands[1], "a"),
            (&cands[2], "a"),
            (&cands[3], "b"),
            (&cands[4], "b"),
            (&cands[5], "b"),
        ]);
        let n_pos = 6; // C(3,2) + C(3,2)
        let a = build_training_pairs(&cands, &gold, Some(20), &mut Rng::seed_from_u64(7));
        let b = build_training_pairs(&cands, &gold, Some(20), &mut Rng::seed_from_u64(7));
        assert_eq!(a.iter().filter(|p| p.label == 0.0).count(), 20 * n_pos);
        assert_eq!(a, b);

        let gold5 = gold_map(&[
            (&cands[0], "a"),
            (&cands[1], "a"),
            (&cands[2], "b"),
            (&cands[3], "b"),
            (&cands[4], "c"),
            (&cands[5], "c"),
            (&cands[6], "d"),
            (&cands[7], "d"),
            (&cands[8], "e"),
            (&cands[9], "e"),
        ]);
        let p5 = build_training_pairs(&cands, &gold5, Some(20), &mut Rng::seed_from_u64(3));
        assert_eq!(p5.iter().filter(|p| p.label == 1.0).count(), 5);
        assert_eq!(p5.iter().filter(|p| p.label == 0.0).count(), 100);
        let mut seen = std::collections::HashSet::new();
        assert!(p5.iter().all(|p| seen.insert((p.a, p.b))));
    }

    #[test]
    fn pair_gradients_reach_both_sides() {
        let mut rng = Rng::seed_from_u64(9);
        let params = PairParams::<f64>::new(3, 5, 0.0, &mut rng);
        let g = crate::neural::xavier_init::<f64>((3, 3), &mut rng);
        let pairs = [(0, 1), (0, 2), (1, 2)];
        let (sa, cache) = pair_forward(g.view(), &pairs, &params, Mode::Eval).unwrap();
        let up = Array1::from_elem(sa.len(), 1.0);
        let (_, d_g) = pair_backward(g.view(), &params, &cache, up.view()).unwrap();
        // numeric d(sum s_a)/d g[1][0]
        let h = 1e-6;
        let mut gp = g.clone();
        gp[[1, 0]] += h;
        let mut gm = g.clone();
        gm[[1, 0]] -= h;
        let f = |g: &Array2<f64>| pair_forward(g.view(), &pairs, &params, Mode::Eval).unwrap().0.sum();
        let numeric = (f(&gp) - f(&gm)) / (2.0 * h);
        assert!((numeric - d_g[[1, 0]]).abs() < 1e-6);
    }

    #[test]
    fn csv_dump_header_and_rows() {
        let mut rng = Rng::seed_from_u64(1);
        let params = PairParams::<f32>::new(2, 4, 0.0, &mut rng);
        let table = score_all_pairs(vec![random_candidates(3, 2, 0)], &params, PairMode::Full).unwrap();
        let mut out = Vec::new();
        write_pair_scores(&mut out, &table).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            "doc_a,start_a,end_a,doc_b,start_b,end_b,raw_score,probability"
        );
        assert_eq!(lines.len(), 4);
        assert_eq!(csv_field("a,b"), "\"a,b\"");
    }
}
