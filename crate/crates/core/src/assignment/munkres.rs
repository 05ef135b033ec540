//! Minimum-cost assignment of every row to a distinct column
//! (rows <= cols), via shortest augmenting paths with dual potentials.

use super::{Assignment, AssignmentError, CostMatrix};

/// Optimal assignment without a tie-breaking guarantee.
pub(crate) fn solve(c: &CostMatrix) -> Result<Assignment, AssignmentError> {
    let n = c.rows();
    let m = c.cols();
    if n == 0 {
        return Ok(Assignment {
            row_to_col: Vec::new(),
            cost: 0.0,
        });
    }
    if n > m {
        return Err(AssignmentError::Infeasible);
    }

    // 1-based; index 0 is the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![f64::INFINITY; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = usize::MAX;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = c.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if j1 == usize::MAX || !delta.is_finite() {
                return Err(AssignmentError::Infeasible);
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

    let mut row_to_col = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            row_to_col[owner[j] - 1] = j - 1;
        }
    }
    Ok(Assignment::from_cols(c, row_to_col))
}

/// Minimum-cost assignment. Among optimal assignments the lexicographically
/// smallest `row_to_col` is returned (costs within 1e-9 relative count as
/// equal).
pub fn munkres(c: &CostMatrix) -> Result<Assignment, AssignmentError> {
    let best = solve(c)?;
    let tol = 1e-9 * best.cost.abs().max(1.0);
    let mut work = c.clone();
    let mut row_to_col = Vec::with_capacity(c.rows());
    for r in 0..c.rows() {
        let mut fixed = None;
        for col in 0..c.cols() {
            if !work.get(r, col).is_finite() {
                continue;
            }
            if Some(col) == best.row_to_col.get(r).copied() && row_to_col == best.row_to_col[..r] {
                // The known optimum already uses this prefix; only smaller
                // columns could beat it, and they were rejected.
                fixed = Some(col);
                break;
            }
            let trial = force(&work, r, col);
            if let Ok(a) = solve(&trial) {
                if a.cost <= best.cost + tol {
                    fixed = Some(col);
                    break;
                }
            }
        }
        let col = fixed.ok_or(AssignmentError::Infeasible)?;
        work = force(&work, r, col);
        row_to_col.push(col);
    }
    Ok(Assignment::from_cols(c, row_to_col))
}

/// Copy of `c` where row `r` may only use `col` and no other row may use it.
pub(crate) fn force(c: &CostMatrix, r: usize, col: usize) -> CostMatrix {
    let mut out = c.clone();
    for j in 0..c.cols() {
        if j != col {
            out.set(r, j, f64::INFINITY);
        }
    }
    for i in 0..c.rows() {
        if i != r {
            out.set(i, col, f64::INFINITY);
        }
    }
    out
}
