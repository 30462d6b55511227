//! Minimum-cost one-to-one assignment (Hungarian / Jonker-Volgenant style,
//! potentials + augmenting paths, O(n^3)). Rectangular matrices are allowed;
//! min(rows, cols) pairs are assigned.

/// Solve the assignment problem on a row-major `rows x cols` cost matrix.
///
/// Returns the assigned `(row, col)` pairs, `min(rows, cols)` of them,
/// minimizing the total cost.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    if cols == 0 {
        return Vec::new();
    }
    if rows > cols {
        // transpose so rows <= cols
        let t: Vec<Vec<f64>> = (0..cols)
            .map(|c| (0..rows).map(|r| cost[r][c]).collect())
            .collect();
        return hungarian(&t).into_iter().map(|(r, c)| (c, r)).collect();
    }

    // 1-based sentinel column at index `cols`
    let mut job: Vec<Option<usize>> = vec![None; cols + 1];
    let mut row_pot = vec![0.0f64; rows];
    let mut col_pot = vec![0.0f64; cols + 1];

    for new_row in 0..rows {
        let mut cur_col = cols;
        job[cur_col] = Some(new_row);

        let mut min_to = vec![f64::INFINITY; cols + 1];
        let mut prev = vec![cols; cols + 1];
        let mut in_tree = vec![false; cols + 1];

        while let Some(r) = job[cur_col] {
            in_tree[cur_col] = true;
            let mut delta = f64::INFINITY;
            let mut next_col = cols;
            for c in 0..cols {
                if in_tree[c] {
                    continue;
                }
                let reduced = cost[r][c] - row_pot[r] - col_pot[c];
                if reduced < min_to[c] {
                    min_to[c] = reduced;
                    prev[c] = cur_col;
                }
                if min_to[c] < delta {
                    delta = min_to[c];
                    next_col = c;
                }
            }
            for c in 0..=cols {
                if in_tree[c] {
                    if let Some(rc) = job[c] {
                        row_pot[rc] += delta;
                    }
                    col_pot[c] -= delta;
                } else {
                    min_to[c] -= delta;
                }
            }
            cur_col = next_col;
        }

        // augment along the alternating path
        while cur_col != cols {
            let p = prev[cur_col];
            job[cur_col] = job[p];
            cur_col = p;
        }
    }

    let mut out: Vec<(usize, usize)> = (0..cols)
        .filter_map(|c| job[c].map(|r| (r, c)))
        .collect();
    out.sort_unstable();
    out
}
