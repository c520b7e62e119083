//! Rectangular minimum-cost assignment (shortest augmenting path with potentials).

/// Minimum-cost matching of a dense `rows x cols` cost matrix (row-major).
///
/// Every row is matched when `rows <= cols`, otherwise every column is. Returns the matched
/// column for each row. Costs must be finite.
pub fn solve(costs: &[f64], rows: usize, cols: usize) -> Vec<Option<usize>> {
    assert_eq!(costs.len(), rows * cols, "cost matrix shape");
    assert!(costs.iter().all(|c| c.is_finite()), "costs must be finite");
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows <= cols {
        solve_wide(|r, c| costs[r * cols + c], rows, cols)
    } else {
        let by_col = solve_wide(|c, r| costs[r * cols + c], cols, rows);
        let mut out = vec![None; rows];
        for (c, r) in by_col.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        out
    }
}

/// `n <= m`; every row gets a column.
fn solve_wide(cost: impl Fn(usize, usize) -> f64, n: usize, m: usize) -> Vec<Option<usize>> {
    // 1-based with a virtual column 0, as in the classic formulation
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
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
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    for j in 1..=m {
        if owner[j] != 0 {
            out[owner[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// Gated assignment: among matchings that use only admissible pairs, picks one with the most
/// pairs and, among those, the least total cost.
pub fn solve_gated(costs: &[f64], admissible: &[bool], rows: usize, cols: usize) -> Vec<Option<usize>> {
    assert_eq!(admissible.len(), rows * cols, "gate shape");
    // Any matching with one more admissible pair is cheaper than one without it.
    let big = costs.iter().zip(admissible).filter(|(_, &a)| a).map(|(c, _)| c.abs()).sum::<f64>() * 2.0 + 1.0;
    let padded: Vec<f64> = costs.iter().zip(admissible).map(|(&c, &a)| if a { c } else { big }).collect();
    solve(&padded, rows, cols).into_iter().enumerate().map(|(r, c)| c.filter(|&c| admissible[r * cols + c])).collect()
}
