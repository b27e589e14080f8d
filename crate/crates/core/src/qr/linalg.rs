//! Dense helpers for the tiny `p x p` systems the solver needs.

const SINGULAR_EPS: f64 = 1e-12;

/// Gauss-Jordan inverse with partial pivoting. `None` when the matrix is singular.
pub(crate) fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let p = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |s, v| s.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() <= SINGULAR_EPS * scale {
            return None;
        }
        a.swap(c, piv);
        inv.swap(c, piv);
        let d = a[c][c];
        for k in 0..p {
            a[c][k] /= d;
            inv[c][k] /= d;
        }
        for r in 0..p {
            if r != c && a[r][c] != 0.0 {
                let f = a[r][c];
                for k in 0..p {
                    a[r][k] -= f * a[c][k];
                    inv[r][k] -= f * inv[c][k];
                }
            }
        }
    }
    Some(inv)
}

pub(crate) fn solve(m: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let inv = invert(m)?;
    Some(
        inv.iter()
            .map(|row| row.iter().zip(b).map(|(a, v)| a * v).sum())
            .collect(),
    )
}

pub(crate) fn least_squares(x: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let p = x.first()?.len();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..p {
            xty[i] += row[i] * yi;
            for j in 0..p {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    solve(&xtx, &xty)
}

/// Numerical column rank of an `n x p` matrix, by elimination on column-scaled copies.
pub(crate) fn column_rank(x: &[Vec<f64>]) -> usize {
    let Some(p) = x.first().map(Vec::len) else {
        return 0;
    };
    let mut a: Vec<Vec<f64>> = x.to_vec();
    for c in 0..p {
        let s = a.iter().fold(0.0f64, |m, r| m.max(r[c].abs()));
        if s > 0.0 {
            a.iter_mut().for_each(|r| r[c] /= s);
        }
    }
    let mut rank = 0;
    let mut row = 0;
    for c in 0..p {
        let Some(piv) = (row..a.len()).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
        else {
            break;
        };
        if a[piv][c].abs() <= 1e-10 {
            continue;
        }
        a.swap(row, piv);
        let (head, tail) = a.split_at_mut(row + 1);
        let pivot = &head[row];
        for r in tail.iter_mut() {
            let f = r[c] / pivot[c];
            if f != 0.0 {
                for (rk, pk) in r[c..p].iter_mut().zip(&pivot[c..p]) {
                    *rk -= f * pk;
                }
            }
        }
        rank += 1;
        row += 1;
    }
    rank
}
