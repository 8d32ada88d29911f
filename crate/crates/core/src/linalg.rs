//! Small dense linear algebra for the active-set KKT systems.
//!
//! Matrices are row-major `Vec<f64>` with an explicit column count. Systems
//! here are at most a few dozen rows, so plain Gaussian elimination is enough.

/// Relative pivot tolerance below which a matrix is treated as singular.
pub const PIVOT_TOL: f64 = 1e-12;

/// Solves `A x = b` by Gaussian elimination with partial pivoting. Returns
/// `None` when a pivot falls below `PIVOT_TOL` times the largest entry of `A`.
pub fn solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    let tol = PIVOT_TOL * scale;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("non-empty range");
        if a[pivot * n + col].abs() <= tol {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let p = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / p;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}

/// Basis of the null space of a `rows x cols` matrix, one vector per free
/// column of its reduced row echelon form (in increasing column order).
pub fn null_space(mut m: Vec<f64>, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    debug_assert_eq!(m.len(), rows * cols);
    let scale = m.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    let tol = PIVOT_TOL * scale.max(1.0);
    let mut pivot_cols = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let pivot = (r..rows)
            .max_by(|&i, &j| m[i * cols + c].abs().total_cmp(&m[j * cols + c].abs()))
            .expect("non-empty range");
        if m[pivot * cols + c].abs() <= tol {
            continue;
        }
        for k in 0..cols {
            m.swap(r * cols + k, pivot * cols + k);
        }
        let p = m[r * cols + c];
        for k in 0..cols {
            m[r * cols + k] /= p;
        }
        for i in 0..rows {
            if i != r {
                let f = m[i * cols + c];
                if f != 0.0 {
                    for k in 0..cols {
                        m[i * cols + k] -= f * m[r * cols + k];
                    }
                }
            }
        }
        pivot_cols.push(c);
        r += 1;
    }
    (0..cols)
        .filter(|c| !pivot_cols.contains(c))
        .map(|free| {
            let mut v = vec![0.0; cols];
            v[free] = 1.0;
            for (row, &pc) in pivot_cols.iter().enumerate() {
                v[pc] = -m[row * cols + free];
            }
            v
        })
        .collect()
}
