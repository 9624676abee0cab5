//! Dense tableau simplex for `max c.x  s.t.  A x <= b, x >= 0` with `b >= 0`.
//!
//! The origin is feasible, so a single phase suffices. Bland's rule keeps the
//! many degenerate pivots (zero right-hand sides) from cycling.

const EPS: f64 = 1e-12;

/// Returns the optimal objective value, or `None` if the program is unbounded.
pub(crate) fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<f64> {
    let n = c.len();
    let m = a.len();
    debug_assert!(b.iter().all(|&v| v >= 0.0));
    let width = n + m + 1;

    // rows 0..m: constraints with slack identity; row m: reduced costs (negated c)
    let mut t = vec![vec![0.0; width]; m + 1];
    for (i, row) in a.iter().enumerate() {
        t[i][..n].copy_from_slice(row);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    for (j, &cj) in c.iter().enumerate() {
        t[m][j] = -cj;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    loop {
        // Bland: lowest-index improving column
        let Some(col) = (0..width - 1).find(|&j| t[m][j] < -EPS) else {
            return Some(t[m][width - 1]);
        };
        let mut pivot: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][col] > EPS {
                let ratio = t[i][width - 1] / t[i][col];
                let better = match pivot {
                    None => true,
                    Some((r, best)) => {
                        ratio < best - EPS || (ratio <= best + EPS && basis[i] < basis[r])
                    }
                };
                if better {
                    pivot = Some((i, ratio));
                }
            }
        }
        let (row, _) = pivot?;
        let p = t[row][col];
        for v in t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = t[row].clone();
        for (i, r) in t.iter_mut().enumerate() {
            if i != row {
                let factor = r[col];
                if factor != 0.0 {
                    for (v, pv) in r.iter_mut().zip(&pivot_row) {
                        *v -= factor * pv;
                    }
                }
            }
        }
        basis[row] = col;
    }
}
