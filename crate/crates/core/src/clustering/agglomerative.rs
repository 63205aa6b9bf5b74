use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::neural::sigmoid;
use crate::pairs::{condensed_index, GroupScores};

/// Symmetric similarities in `[0, 1]` over `n` items, stored as the
/// condensed upper triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityTable {
    n: usize,
    values: Vec<f64>,
}

impl AffinityTable {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::Shape(format!("{} similarities for {n} items", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("similarity {v} outside [0, 1]")));
        }
        Ok(AffinityTable { n, values })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let values = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        AffinityTable::new(n, values)
    }

    /// `sigmoid(raw score)` for every pair of a scored group.
    pub fn from_scores(group: &GroupScores) -> Self {
        AffinityTable {
            n: group.len(),
            values: group.scores.iter().map(|&s| sigmoid(s as f64)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.values[condensed_index(self.n, i, j)]
    }
}

/// One merge: the clusters identified by their smallest member, and the
/// average linkage at merge time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    /// Dense cluster ids, numbered by each cluster's smallest member.
    pub assignment: Vec<usize>,
    pub merges: Vec<Merge>,
}

impl Clustering {
    pub fn num_clusters(&self) -> usize {
        self.assignment.iter().max().map_or(0, |m| m + 1)
    }

    /// Members per cluster, each in ascending order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters()];
        for (item, &c) in self.assignment.iter().enumerate() {
            out[c].push(item);
        }
        out
    }
}

/// Average-linkage (UPGMA) agglomerative clustering.
///
/// Starting from singletons, the pair of clusters with the highest mean
/// cross-cluster similarity is merged while that mean is `>= tau`. Clusters
/// are identified by their smallest member; ties go to the smallest
/// `(id, id)` pair. Linkage sums are kept in an `n x n` matrix together with
/// each row's best partner, so normal inputs cost `O(n^2)` memory and close
/// to `O(n^2)` time.
pub fn agglomerative_cluster(table: &AffinityTable, tau: f64) -> Clustering {
    let n = table.len();
    let mut sums = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = table.get(i, j);
            sums[i * n + j] = v;
            sums[j * n + i] = v;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let linkage = |sums: &[f64], size: &[usize], i: usize, j: usize| sums[i * n + j] / (size[i] * size[j]) as f64;

    // best[i]: highest-linkage active partner j > i, smallest j on ties.
    let scan = |sums: &[f64], size: &[usize], active: &[bool], i: usize| -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for j in i + 1..n {
            if !active[j] {
                continue;
            }
            let l = linkage(sums, size, i, j);
            if best.is_none_or(|(b, _)| l > b) {
                best = Some((l, j));
            }
        }
        best
    };
    let mut best: Vec<Option<(f64, usize)>> = (0..n).map(|i| scan(&sums, &size, &active, i)).collect();

    let mut parent: Vec<usize> = (0..n).collect();
    let mut merges = Vec::new();
    loop {
        let mut top: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            if let Some((l, j)) = best[i] {
                if top.is_none_or(|(t, _, _)| l > t) {
                    top = Some((l, i, j));
                }
            }
        }
        let Some((similarity, a, b)) = top else { break };
        if similarity < tau {
            break;
        }
        merges.push(Merge { a, b, similarity });
        parent[b] = a;
        active[b] = false;
        size[a] += size[b];
        for k in 0..n {
            if active[k] && k != a {
                let v = sums[a * n + k] + sums[b * n + k];
                sums[a * n + k] = v;
                sums[k * n + a] = v;
            }
        }
        best[b] = None;
        best[a] = scan(&sums, &size, &active, a);
        for i in 0..a {
            if !active[i] {
                continue;
            }
            match best[i] {
                Some((_, j)) if j == a || j == b => best[i] = scan(&sums, &size, &active, i),
                Some((l, j)) => {
                    let la = linkage(&sums, &size, i, a);
                    if la > l || (la == l && a < j) {
                        best[i] = Some((la, a));
                    }
                }
                None => best[i] = scan(&sums, &size, &active, i),
            }
        }
        for i in a + 1..b {
            if active[i] && matches!(best[i], Some((_, j)) if j == b) {
                best[i] = scan(&sums, &size, &active, i);
            }
        }
    }

    let root = |mut i: usize| {
        while parent[i] != i {
            i = parent[i];
        }
        i
    };
    Clustering {
        assignment: dense_labels(&(0..n).map(root).collect::<Vec<_>>()),
        merges,
    }
}

/// Relabels arbitrary ids densely in order of first appearance.
pub fn dense_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

pub const BRUTE_FORCE_LIMIT: usize = 10;

/// Result of exhaustive search.
#[derive(Clone, Debug, PartialEq)]
pub struct BruteForce {
    /// Partition reached by the smallest-pair tie rule.
    pub clustering: Clustering,
    /// Every partition reachable by some sequence of maximal-linkage merges,
    /// each a sorted list of sorted member lists.
    pub reachable: BTreeSet<Vec<Vec<usize>>>,
}

/// Testing oracle: recomputes every linkage from the original similarities
/// at every step and follows every tied maximal merge.
pub fn brute_force_cluster(table: &AffinityTable, tau: f64) -> Result<BruteForce> {
    let n = table.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(n, BRUTE_FORCE_LIMIT));
    }
    let start: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();

    let mut reachable = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut stack = vec![start.clone()];
    while let Some(state) = stack.pop() {
        if !seen.insert(state.clone()) {
            continue;
        }
        let options = maximal_merges(table, &state, tau);
        if options.is_empty() {
            reachable.insert(state);
            continue;
        }
        for (x, y, _) in options {
            stack.push(merged(&state, x, y));
        }
    }

    let mut state = start;
    let mut merges = Vec::new();
    while let Some(&(x, y, similarity)) = maximal_merges(table, &state, tau).first() {
        merges.push(Merge {
            a: state[x][0],
            b: state[y][0],
            similarity,
        });
        state = merged(&state, x, y);
    }
    let mut labels = vec![0; n];
    for (c, members) in state.iter().enumerate() {
        for &m in members {
            labels[m] = c;
        }
    }
    Ok(BruteForce {
        clustering: Clustering {
            assignment: dense_labels(&labels),
            merges,
        },
        reachable,
    })
}

/// Canonical state: clusters sorted by smallest member, members ascending.
/// Returns all `(x, y)` positions whose linkage equals the maximum, in
/// `(id, id)` order, if that maximum reaches `tau`.
fn maximal_merges(table: &AffinityTable, state: &[Vec<usize>], tau: f64) -> Vec<(usize, usize, f64)> {
    let mut all = Vec::new();
    for x in 0..state.len() {
        for y in x + 1..state.len() {
            let mut total = 0.0;
            for &i in &state[x] {
                for &j in &state[y] {
                    total += table.get(i, j);
                }
            }
            all.push((x, y, total / (state[x].len() * state[y].len()) as f64));
        }
    }
    let Some(max) = all.iter().map(|t| t.2).reduce(f64::max) else {
        return Vec::new();
    };
    if max < tau {
        return Vec::new();
    }
    all.retain(|t| t.2 == max);
    all
}

fn merged(state: &[Vec<usize>], x: usize, y: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::with_capacity(state.len() - 1);
    for (k, c) in state.iter().enumerate() {
        if k == y {
            continue;
        }
        let mut c = c.clone();
        if k == x {
            c.extend(&state[y]);
            c.sort_unstable();
        }
        out.push(c);
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(n: usize, pairs: &[((usize, usize), f64)], default: f64) -> AffinityTable {
        AffinityTable::from_fn(n, |i, j| {
            pairs
                .iter()
                .find(|((a, b), _)| (*a, *b) == (i, j))
                .map_or(default, |(_, v)| *v)
        })
        .unwrap()
    }

    #[test]
    fn hand_examples() {
        let all_high = table(3, &[], 0.9);
        assert_eq!(agglomerative_cluster(&all_high, 0.75).assignment, vec![0, 0, 0]);

        let t = table(3, &[((0, 1), 0.9)], 0.5);
        let c = agglomerative_cluster(&t, 0.75);
        assert_eq!(c.assignment, vec![0, 0, 1]);
        assert_eq!(c.merges.len(), 1);

        let low = table(4, &[], 0.3);
        assert_eq!(agglomerative_cluster(&low, 0.75).assignment, vec![0, 1, 2, 3]);
    }

    #[test]
    fn boundary_is_inclusive() {
        let t = table(2, &[], 0.75);
        assert_eq!(agglomerative_cluster(&t, 0.75).assignment, vec![0, 0]);
        assert_eq!(brute_force_cluster(&t, 0.75).unwrap().clustering.assignment, vec![0, 0]);
    }

    #[test]
    fn degenerate_sizes() {
        let empty = AffinityTable::new(0, vec![]).unwrap();
        assert!(agglomerative_cluster(&empty, 0.5).assignment.is_empty());
        let one = AffinityTable::new(1, vec![]).unwrap();
        assert_eq!(agglomerative_cluster(&one, 0.5).assignment, vec![0]);
        assert_eq!(brute_force_cluster(&one, 0.5).unwrap().clustering.assignment, vec![0]);
        assert!(matches!(
            brute_force_cluster(&AffinityTable::from_fn(11, |_, _| 0.5).unwrap(), 0.5),
            Err(Error::TooLarge(11, 10))
        ));
    }

    #[test]
    fn ties_take_the_smallest_pair() {
        // (0,1), (2,3) and (1,2) all tie; (0,1) goes first, then (2,3).
        let t = table(4, &[((0, 1), 0.8), ((2, 3), 0.8), ((1, 2), 0.8)], 0.1);
        let c = agglomerative_cluster(&t, 0.75);
        assert_eq!(
            c.merges[0],
            Merge {
                a: 0,
                b: 1,
                similarity: 0.8
            }
        );
        assert_eq!(
            c.merges[1],
            Merge {
                a: 2,
                b: 3,
                similarity: 0.8
            }
        );
        assert_eq!(c.assignment, vec![0, 0, 1, 1]);
        let bf = brute_force_cluster(&t, 0.75).unwrap();
        assert_eq!(bf.clustering, c);
        // merging (1,2) first leaves {0},{1,2},{3}
        assert!(bf.reachable.contains(&vec![vec![0], vec![1, 2], vec![3]]));
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(AffinityTable::new(3, vec![0.5; 2]).is_err());
        assert!(AffinityTable::new(2, vec![1.5]).is_err());
    }

    fn dyadic_table() -> impl Strategy<Value = AffinityTable> {
        (1usize..=8).prop_flat_map(|n| {
            proptest::collection::vec(0u8..=16, n * (n - 1) / 2)
                .prop_map(move |v| AffinityTable::new(n, v.into_iter().map(|x| x as f64 / 16.0).collect()).unwrap())
        })
    }

    fn continuous_table() -> impl Strategy<Value = AffinityTable> {
        (1usize..=8).prop_flat_map(|n| {
            proptest::collection::vec(0.0f64..1.0, n * (n - 1) / 2).prop_map(move |v| AffinityTable::new(n, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(t in dyadic_table(), tau in 0u8..=16) {
            let tau = tau as f64 / 16.0;
            let fast = agglomerative_cluster(&t, tau);
            let bf = brute_force_cluster(&t, tau).unwrap();
            prop_assert_eq!(&fast, &bf.clustering);
            let mut parts = fast.clusters();
            parts.sort();
            prop_assert!(bf.reachable.contains(&parts));
        }

        #[test]
        fn merges_respect_threshold_and_refine(t in continuous_table(), lo in 0.0f64..1.0, gap in 0.0f64..0.5) {
            let hi = (lo + gap).min(1.0);
            let coarse = agglomerative_cluster(&t, lo);
            let fine = agglomerative_cluster(&t, hi);
            prop_assert!(coarse.merges.iter().all(|m| m.similarity >= lo));
            prop_assert!(fine.merges.iter().all(|m| m.similarity >= hi));
            for i in 0..t.len() {
                for j in 0..t.len() {
                    if fine.assignment[i] == fine.assignment[j] {
                        prop_assert_eq!(coarse.assignment[i], coarse.assignment[j]);
                    }
                }
            }
        }

        #[test]
        fn permutation_invariant(t in continuous_table(), tau in 0.0f64..1.0, seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let n = t.len();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted = AffinityTable::from_fn(n, |i, j| t.get(perm[i], perm[j])).unwrap();
            let a = agglomerative_cluster(&t, tau).assignment;
            let b = agglomerative_cluster(&permuted, tau).assignment;
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(a[perm[i]] == a[perm[j]], b[i] == b[j]);
                }
            }
        }
    }
}
