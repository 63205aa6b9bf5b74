use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::hungarian::max_weight_assignment;
use crate::corpus::MentionKey;

/// A partition of mentions; no mention may appear twice.
pub type Clusters = Vec<Vec<MentionKey>>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    /// Set when a recall or precision denominator was zero and the ratio was
    /// taken as 0.
    pub zero_denominator: bool,
}

impl Prf {
    pub fn from_ratios(r_num: f64, r_den: f64, p_num: f64, p_den: f64) -> Self {
        let zero_denominator = r_den == 0.0 || p_den == 0.0;
        let recall = if r_den == 0.0 { 0.0 } else { r_num / r_den };
        let precision = if p_den == 0.0 { 0.0 } else { p_num / p_den };
        Prf {
            recall,
            precision,
            f1: harmonic(recall, precision),
            zero_denominator,
        }
    }
}

pub fn harmonic(r: f64, p: f64) -> f64 {
    if r + p == 0.0 {
        0.0
    } else {
        2.0 * r * p / (r + p)
    }
}

fn membership(clusters: &Clusters) -> HashMap<&MentionKey, usize> {
    clusters
        .iter()
        .enumerate()
        .flat_map(|(c, ms)| ms.iter().map(move |m| (m, c)))
        .collect()
}

/// `sum_K (|K| - |p(K)|)` where `p(K)` partitions `K` by `other`; mentions
/// missing from `other` form their own parts.
fn muc_side(key: &Clusters, other: &Clusters) -> (f64, f64) {
    let index = membership(other);
    let mut num = 0.0;
    let mut den = 0.0;
    for k in key.iter().filter(|k| !k.is_empty()) {
        let mut parts = HashSet::new();
        let mut twinless = 0usize;
        for m in k {
            match index.get(m) {
                Some(&c) => {
                    parts.insert(c);
                }
                None => twinless += 1,
            }
        }
        num += (k.len() - (parts.len() + twinless)) as f64;
        den += (k.len() - 1) as f64;
    }
    (num, den)
}

pub fn muc(key: &Clusters, response: &Clusters) -> Prf {
    let (rn, rd) = muc_side(key, response);
    let (pn, pd) = muc_side(response, key);
    Prf::from_ratios(rn, rd, pn, pd)
}

/// `sum_K sum_R |K n R|^2 / |K|` and the mention count of `key`.
fn b_cubed_side(key: &Clusters, other: &Clusters) -> (f64, f64) {
    let index = membership(other);
    let mut num = 0.0;
    let mut total = 0usize;
    for k in key.iter().filter(|k| !k.is_empty()) {
        let mut overlap: HashMap<usize, usize> = HashMap::new();
        for m in k {
            if let Some(&c) = index.get(m) {
                *overlap.entry(c).or_default() += 1;
            }
        }
        num += overlap.values().map(|&o| (o * o) as f64).sum::<f64>() / k.len() as f64;
        total += k.len();
    }
    (num, total as f64)
}

pub fn b_cubed(key: &Clusters, response: &Clusters) -> Prf {
    let (rn, rd) = b_cubed_side(key, response);
    let (pn, pd) = b_cubed_side(response, key);
    Prf::from_ratios(rn, rd, pn, pd)
}

/// `phi4` similarity matrix between non-empty key and response clusters.
pub fn phi4_matrix(key: &Clusters, response: &Clusters) -> (Vec<f64>, usize, usize) {
    let key: Vec<&Vec<MentionKey>> = key.iter().filter(|k| !k.is_empty()).collect();
    let response: Vec<&Vec<MentionKey>> = response.iter().filter(|r| !r.is_empty()).collect();
    let index = {
        let mut map: HashMap<&MentionKey, usize> = HashMap::new();
        for (c, r) in response.iter().enumerate() {
            for m in r.iter() {
                map.insert(m, c);
            }
        }
        map
    };
    let mut w = vec![0.0; key.len() * response.len()];
    for (i, k) in key.iter().enumerate() {
        let mut overlap: BTreeMap<usize, usize> = BTreeMap::new();
        for m in k.iter() {
            if let Some(&c) = index.get(m) {
                *overlap.entry(c).or_default() += 1;
            }
        }
        for (c, o) in overlap {
            w[i * response.len() + c] = 2.0 * o as f64 / (k.len() + response[c].len()) as f64;
        }
    }
    (w, key.len(), response.len())
}

pub fn ceaf_e(key: &Clusters, response: &Clusters) -> Prf {
    let (w, rows, cols) = phi4_matrix(key, response);
    let (total, _) = max_weight_assignment(&w, rows, cols);
    Prf::from_ratios(total, rows as f64, total, cols as f64)
}

pub fn conll_f1(muc: &Prf, b_cubed: &Prf, ceaf_e: &Prf) -> f64 {
    (muc.f1 + b_cubed.f1 + ceaf_e.f1) / 3.0
}

/// Exact-span matching of the mention sets.
pub fn mention_detection(key: &Clusters, response: &Clusters) -> Prf {
    let k: HashSet<&MentionKey> = key.iter().flatten().collect();
    let r: HashSet<&MentionKey> = response.iter().flatten().collect();
    let hit = k.intersection(&r).count() as f64;
    Prf::from_ratios(hit, k.len() as f64, hit, r.len() as f64)
}

/// Splits every cluster by document.
pub fn project_wd(clusters: &Clusters) -> Clusters {
    let mut out = Vec::new();
    for c in clusters {
        let mut by_doc: BTreeMap<&str, Vec<MentionKey>> = BTreeMap::new();
        for m in c {
            by_doc.entry(m.doc_id.as_str()).or_default().push(m.clone());
        }
        out.extend(by_doc.into_values());
    }
    out
}

pub fn filter_singletons(clusters: &Clusters) -> Clusters {
    clusters.iter().filter(|c| c.len() > 1).cloned().collect()
}
