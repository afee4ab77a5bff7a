//! Linear and bottleneck assignment.

/// Minimum-cost one-to-one assignment of rows to columns (Hungarian method
/// with potentials, `O(n² m)`). Rectangular inputs leave the surplus side
/// unmatched. Returns the column assigned to each row. Costs must be finite.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return vec![None; n];
    }
    if n > m {
        let transposed: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| cost[i][j]).collect()).collect();
        let cols = min_cost_assignment(&transposed);
        let mut rows = vec![None; n];
        for (j, i) in cols.into_iter().enumerate() {
            if let Some(i) = i {
                rows[i] = Some(j);
            }
        }
        return rows;
    }

    // 1-based potentials; column 0 is a virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        while j0 != 0 {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
        }
    }
    let mut rows = vec![None; n];
    for j in 1..=m {
        if owner[j] != 0 {
            rows[owner[j] - 1] = Some(j - 1);
        }
    }
    rows
}

/// Kuhn's augmenting-path test for a perfect matching of a square matrix
/// restricted to edges where `allowed` holds. Rows are tried in index order.
fn has_perfect_matching(n: usize, allowed: &dyn Fn(usize, usize) -> bool) -> bool {
    fn augment(i: usize, n: usize, allowed: &dyn Fn(usize, usize) -> bool, seen: &mut [bool], col_owner: &mut [Option<usize>]) -> bool {
        for j in 0..n {
            if allowed(i, j) && !seen[j] {
                seen[j] = true;
                if col_owner[j].is_none_or(|k| augment(k, n, allowed, seen, col_owner)) {
                    col_owner[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    let mut col_owner = vec![None; n];
    (0..n).all(|i| augment(i, n, allowed, &mut vec![false; n], &mut col_owner))
}

/// Smallest achievable maximum edge cost over perfect matchings of a square
/// cost matrix: binary search over the sorted distinct costs with a
/// feasibility check at each candidate. The result is one of the inputs.
pub fn bottleneck_assignment_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    if n == 0 {
        return 0.0;
    }
    let mut candidates: Vec<f64> = cost.iter().flatten().copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let (mut lo, mut hi) = (0, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        let c = candidates[mid];
        if has_perfect_matching(n, &|i, j| cost[i][j] <= c) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates[lo]
}
