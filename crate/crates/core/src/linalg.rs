/// Solves `a x = b` for symmetric positive-definite `a` (row-major, n x n)
/// by Cholesky factorization. Returns `None` when `a` is not numerically
/// positive definite.
pub(crate) fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 1e-12 * a[i * n + i].abs().max(1e-300)) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// Greedy left-to-right selection of linearly independent columns from a
/// Gram matrix: a column is skipped when its Cholesky pivot, after removing
/// the span of the columns already kept, falls below `tol` times its
/// diagonal.
pub(crate) fn independent_columns(gram: &[f64], n: usize, tol: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    // rows of L for kept columns, each of length kept.len() at insertion
    let mut l: Vec<Vec<f64>> = Vec::new();
    for j in 0..n {
        let mut row = Vec::with_capacity(kept.len() + 1);
        for (a, &c) in kept.iter().enumerate() {
            let mut s = gram[j * n + c];
            for b in 0..a {
                s -= row[b] * l[a][b];
            }
            row.push(s / l[a][a]);
        }
        let d = gram[j * n + j] - row.iter().map(|v| v * v).sum::<f64>();
        if d > tol * gram[j * n + j].abs() && d > 0.0 {
            row.push(d.sqrt());
            kept.push(j);
            l.push(row);
        }
    }
    kept
}
