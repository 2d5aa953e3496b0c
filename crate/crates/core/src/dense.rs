//! Allocation-light dense kernels for the tiny systems solved inside the
//! cone projection hot loop. Matrices are row-major `n x n` slices.

/// In-place lower Cholesky factorisation. Returns `false` if a pivot falls
/// below `rel_tol` times the corresponding original diagonal entry.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize, rel_tol: f64) -> bool {
    for j in 0..n {
        let diag0 = a[j * n + j];
        let mut d = diag0;
        for p in 0..j {
            d -= a[j * n + p] * a[j * n + p];
        }
        if !(d > rel_tol * diag0.abs()) || d <= 0.0 {
            return false;
        }
        let ljj = d.sqrt();
        a[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for p in 0..j {
                s -= a[i * n + p] * a[j * n + p];
            }
            a[i * n + j] = s / ljj;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            a[i * n + j] = 0.0;
        }
    }
    true
}

/// Solves `L L^T x = b` in place given the lower factor from [`cholesky_in_place`].
pub(crate) fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for p in 0..i {
            s -= l[i * n + p] * b[p];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for p in (i + 1)..n {
            s -= l[p * n + i] * b[p];
        }
        b[i] = s / l[i * n + i];
    }
}
