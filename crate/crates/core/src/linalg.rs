use alloc::vec::Vec;

/// Largest singular value of a dense `rows x cols` matrix stored row-major,
/// via cyclic Jacobi on the `cols x cols` Gram matrix.
pub(crate) fn spectral_norm(matrix: &[f64], rows: usize, cols: usize) -> f64 {
    debug_assert_eq!(matrix.len(), rows * cols);
    if cols == 0 || rows == 0 {
        return 0.0;
    }
    let mut gram = Vec::with_capacity(cols * cols);
    for a in 0..cols {
        for b in 0..cols {
            gram.push((0..rows).map(|r| matrix[r * cols + a] * matrix[r * cols + b]).sum::<f64>());
        }
    }
    let eig = symmetric_eigenvalues(gram, cols);
    libm::sqrt(eig.into_iter().fold(0.0_f64, f64::max).max(0.0))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub(crate) fn symmetric_eigenvalues(mut a: Vec<f64>, n: usize) -> Vec<f64> {
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum();
        let diag: f64 = (0..n).map(|p| a[p * n + p] * a[p * n + p]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|p| a[p * n + p]).collect()
}
