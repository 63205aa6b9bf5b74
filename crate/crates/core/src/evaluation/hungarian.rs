/// Maximum-weight assignment on a rectangular weight matrix (`rows x cols`,
/// row-major, weights `>= 0`). Returns the total weight and, per row, the
/// assigned column if any. Shortest-augmenting-path Hungarian method,
/// `O(n^2 m)`.
pub fn max_weight_assignment(weights: &[f64], rows: usize, cols: usize) -> (f64, Vec<Option<usize>>) {
    assert_eq!(weights.len(), rows * cols);
    if rows == 0 || cols == 0 {
        return (0.0, vec![None; rows]);
    }
    // Square, 1-based, minimizing `max - w` with zero-weight padding.
    let n = rows.max(cols);
    let max = weights.iter().copied().fold(0.0, f64::max);
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            max - weights[i * cols + j]
        } else {
            max
        }
    };
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![None; rows];
    let mut total = 0.0;
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i - 1 < rows && j - 1 < cols {
            assignment[i - 1] = Some(j - 1);
            total += weights[(i - 1) * cols + (j - 1)];
        }
    }
    (total, assignment)
}

/// Exhaustive maximum over all partial one-to-one matchings; test oracle.
pub fn brute_force_assignment(weights: &[f64], rows: usize, cols: usize) -> f64 {
    fn go(weights: &[f64], cols: usize, row: usize, rows: usize, used: &mut Vec<bool>) -> f64 {
        if row == rows {
            return 0.0;
        }
        let mut best = go(weights, cols, row + 1, rows, used);
        for j in 0..cols {
            if !used[j] {
                used[j] = true;
                best = best.max(weights[row * cols + j] + go(weights, cols, row + 1, rows, used));
                used[j] = false;
            }
        }
        best
    }
    go(weights, cols, 0, rows, &mut vec![false; cols])
}
