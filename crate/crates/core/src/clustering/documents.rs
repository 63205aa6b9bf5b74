use std::collections::{BTreeMap, HashMap};

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng as _, SeedableRng};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::neural::Rng;

/// Document id to document-cluster id.
pub type DocAssignment = BTreeMap<String, usize>;

/// Rows are L2-normalized TF-IDF vectors with sublinear term frequency
/// `1 + ln tf` and smoothed idf `ln((1 + n) / (1 + df)) + 1`. Terms are
/// lowercased token texts; columns follow sorted term order.
pub fn tfidf(docs: &[&Document]) -> Array2<f64> {
    let mut counts: Vec<HashMap<String, usize>> = Vec::with_capacity(docs.len());
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in docs {
        let mut c: HashMap<String, usize> = HashMap::new();
        for t in &doc.tokens {
            *c.entry(t.text.to_lowercase()).or_default() += 1;
        }
        for term in c.keys() {
            *df.entry(term.clone()).or_default() += 1;
        }
        counts.push(c);
    }
    let column: HashMap<&str, usize> = df.keys().enumerate().map(|(k, t)| (t.as_str(), k)).collect();
    let n = docs.len() as f64;
    let idf: Vec<f64> = df
        .values()
        .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
        .collect();
    let mut m = Array2::<f64>::zeros((docs.len(), df.len()));
    for (row, c) in counts.iter().enumerate() {
        for (term, &tf) in c {
            let k = column[term.as_str()];
            m[[row, k]] = (1.0 + (tf as f64).ln()) * idf[k];
        }
        let norm = m.row(row).dot(&m.row(row)).sqrt();
        if norm > 0.0 {
            m.row_mut(row).mapv_inplace(|v| v / norm);
        }
    }
    m
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub inertia: f64,
}

const RESTARTS: usize = 10;
const MAX_ITER: usize = 300;

/// Lloyd's k-means with greedy k-means++ seeding; the lowest-inertia of
/// several seeded restarts wins. `k` is clamped to the row count.
pub fn kmeans(x: &Array2<f64>, k: usize, seed: u64) -> KMeansResult {
    let n = x.nrows();
    let k = k.clamp(1, n.max(1));
    if n == 0 {
        return KMeansResult {
            labels: Vec::new(),
            inertia: 0.0,
        };
    }
    let mut rng = Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..RESTARTS {
        let run = lloyd(x, seed_centroids(x, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    best.expect("at least one restart")
}

fn seed_centroids(x: &Array2<f64>, k: usize, rng: &mut Rng) -> Array2<f64> {
    let n = x.nrows();
    let trials = 2 + (k as f64).ln() as usize;
    let mut centers = Array2::<f64>::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let pick = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut chosen = n - 1;
                for (i, &d) in closest.iter().enumerate() {
                    if target < d {
                        chosen = i;
                        break;
                    }
                    target -= d;
                }
                chosen
            } else {
                rng.random_range(0..n)
            };
            let updated: Vec<f64> = (0..n).map(|i| closest[i].min(sq_dist(x.row(i), x.row(pick)))).collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, pick, updated));
            }
        }
        let (_, pick, updated) = best.expect("at least one trial");
        centers.row_mut(c).assign(&x.row(pick));
        closest = updated;
    }
    centers
}

fn lloyd(x: &Array2<f64>, mut centers: Array2<f64>) -> KMeansResult {
    let n = x.nrows();
    let k = centers.nrows();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_ITER {
        let mut changed = false;
        for i in 0..n {
            let (c, _) = (0..k)
                .map(|c| (c, sq_dist(x.row(i), centers.row(c))))
                .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let mut mean = Array1::<f64>::zeros(x.ncols());
            for &i in &members {
                mean += &x.row(i);
            }
            mean /= members.len() as f64;
            centers.row_mut(c).assign(&mean);
        }
    }
    let inertia = (0..n).map(|i| sq_dist(x.row(i), centers.row(labels[i]))).sum();
    KMeansResult { labels, inertia }
}

/// TF-IDF + k-means over the given documents with `k` clusters.
pub fn cluster_documents(docs: &[&Document], k: usize, seed: u64) -> Result<DocAssignment> {
    if docs.is_empty() {
        return Err(Error::Empty("no documents to cluster".into()));
    }
    let x = tfidf(docs);
    let result = kmeans(&x, k, seed);
    let labels = super::dense_labels(&result.labels);
    Ok(docs.iter().zip(labels).map(|(d, l)| (d.doc_id.clone(), l)).collect())
}

/// Every document in one cluster.
pub fn single_cluster(docs: &[&Document]) -> DocAssignment {
    docs.iter().map(|d| (d.doc_id.clone(), 0)).collect()
}

/// Groups documents by their gold topic, numbered in sorted topic order.
pub fn gold_topic_clusters(docs: &[&Document]) -> DocAssignment {
    let topics: BTreeMap<&str, usize> = {
        let mut names: Vec<&str> = docs.iter().map(|d| d.topic_id.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        names.into_iter().enumerate().map(|(i, t)| (t, i)).collect()
    };
    docs.iter()
        .map(|d| (d.doc_id.clone(), topics[d.topic_id.as_str()]))
        .collect()
}

/// Cluster id to member documents, sorted.
pub fn groups(assignment: &DocAssignment) -> BTreeMap<usize, Vec<String>> {
    let mut out: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (doc, &c) in assignment {
        out.entry(c).or_default().push(doc.clone());
    }
    out
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let comb2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&v| comb2(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| comb2(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| comb2(v)).sum();
    let total = comb2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
