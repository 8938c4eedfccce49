//! Minimum-cost rectangular assignment (Kuhn-Munkres with potentials, O(n^2 m)).

/// Cost used for forbidden pairs before solving.
pub const FORBIDDEN_COST: f64 = 1e9;

/// Assigns rows to columns minimizing total cost. Every row of the smaller
/// side is matched; rows left over on the larger side map to `None`.
pub fn hungarian_assign(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    if m == 0 {
        return vec![None; n];
    }
    debug_assert!(cost.iter().all(|r| r.len() == m && r.iter().all(|c| c.is_finite())));
    if n > m {
        let transposed: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| cost[i][j]).collect()).collect();
        let cols = hungarian_assign(&transposed);
        let mut rows = vec![None; n];
        for (j, i) in cols.into_iter().enumerate() {
            if let Some(i) = i {
                rows[i] = Some(j);
            }
        }
        return rows;
    }

    // 1-based potentials; p[j] is the row matched to column j (0 = none)
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
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
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// Total cost of an assignment.
pub fn assignment_cost(cost: &[Vec<f64>], assignment: &[Option<usize>]) -> f64 {
    assignment.iter().enumerate().filter_map(|(i, j)| j.map(|j| cost[i][j])).sum()
}

/// Assignment on an affinity matrix: pairs whose affinity is below `gate[row][col]`
/// are forbidden and stay unassigned.
pub fn assign_gated(affinity: &[Vec<f64>], allowed: impl Fn(usize, usize) -> bool) -> Vec<Option<usize>> {
    let cost: Vec<Vec<f64>> = affinity
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter().enumerate().map(|(j, &a)| if allowed(i, j) { 1.0 - a } else { FORBIDDEN_COST }).collect()
        })
        .collect();
    hungarian_assign(&cost).into_iter().enumerate().map(|(i, j)| j.filter(|&j| allowed(i, j))).collect()
}
