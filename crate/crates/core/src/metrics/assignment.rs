//! Rectangular linear assignment by successive shortest augmenting paths with
//! dual potentials (the Jonker-Volgenant scheme without the initialization
//! heuristics). `O(r^2 c)` for an `r x c` cost matrix with `r <= c`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Min,
    Max,
}

/// Optimal matching: `row_to_col[r]` is the column matched to row `r`, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub row_to_col: Vec<Option<usize>>,
    pub objective: f64,
}

impl Matching {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_to_col
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| (r, c)))
    }
}

/// Solves the assignment problem on a row-major `n_rows x n_cols` cost matrix.
/// Exactly `min(n_rows, n_cols)` pairs are matched.
pub fn linear_assignment(cost: &[f64], n_rows: usize, n_cols: usize, mode: Objective) -> Result<Matching> {
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::Empty("cost matrix"));
    }
    if cost.len() != n_rows * n_cols {
        return Err(Error::DimensionMismatch {
            expected: n_rows * n_cols,
            found: cost.len(),
        });
    }
    if let Some(idx) = cost.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: idx / n_cols,
            col: idx % n_cols,
            value: cost[idx],
        });
    }
    let sign = match mode {
        Objective::Min => 1.0,
        Objective::Max => -1.0,
    };
    let transposed = n_rows > n_cols;
    let (r, c) = if transposed { (n_cols, n_rows) } else { (n_rows, n_cols) };
    let at = |i: usize, j: usize| {
        let v = if transposed { cost[j * n_cols + i] } else { cost[i * n_cols + j] };
        sign * v
    };

    let col_of_row = solve_wide(r, c, at);

    let mut row_to_col = vec![None; n_rows];
    let mut objective = 0.0;
    for (i, &j) in col_of_row.iter().enumerate() {
        let (row, col) = if transposed { (j, i) } else { (i, j) };
        row_to_col[row] = Some(col);
        objective += cost[row * n_cols + col];
    }
    Ok(Matching {
        row_to_col,
        objective,
    })
}

/// Minimum-cost assignment of every row when `r <= c`. Returns the column of each row.
fn solve_wide(r: usize, c: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // 1-based internal indexing; column 0 is the virtual source.
    let mut u = vec![0.0; r + 1];
    let mut v = vec![0.0; c + 1];
    let mut row_of_col = vec![0usize; c + 1];
    let mut way = vec![0usize; c + 1];
    for i in 1..=r {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; c + 1];
        let mut used = vec![false; c + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=c {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=c {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        // augment along the alternating path
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; r];
    for j in 1..=c {
        if row_of_col[j] != 0 {
            col_of_row[row_of_col[j] - 1] = j - 1;
        }
    }
    col_of_row
}
