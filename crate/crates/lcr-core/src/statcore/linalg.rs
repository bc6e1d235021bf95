//! Householder QR least squares, sized for small design matrices.

use super::StatError;

/// Solution of a least-squares problem min ||y - X b||.
pub(crate) struct LeastSquares {
    pub coef: Vec<f64>,
    /// Diagonal of (X^T X)^{-1}, for coefficient standard errors.
    pub xtx_inv_diag: Vec<f64>,
}

/// Solve min ||y - X b|| by Householder QR on the column-major design.
///
/// Requires n >= p and full column rank; rank deficiency is detected from
/// the R diagonal relative to its largest entry.
pub(crate) fn qr_least_squares(columns: &[&[f64]], y: &[f64]) -> Result<LeastSquares, StatError> {
    let p = columns.len();
    let n = y.len();
    debug_assert!(columns.iter().all(|c| c.len() == n));
    debug_assert!(n >= p && p > 0);

    // Row-major working copy of X; qty starts as y and accumulates Q^T y.
    let mut w = vec![0.0; n * p];
    for (j, col) in columns.iter().enumerate() {
        for i in 0..n {
            w[i * p + j] = col[i];
        }
    }
    let mut qty = y.to_vec();

    for k in 0..p {
        let mut norm2 = 0.0;
        for i in k..n {
            norm2 += w[i * p + k] * w[i * p + k];
        }
        let norm = norm2.sqrt();
        if norm == 0.0 {
            return Err(StatError::SingularDesign);
        }
        let alpha = if w[k * p + k] >= 0.0 { -norm } else { norm };
        // Householder vector v: v_k = x_k - alpha, v_i = x_i below.
        let vk = w[k * p + k] - alpha;
        let vnorm2 = norm2 - 2.0 * alpha * w[k * p + k] + alpha * alpha;
        if vnorm2 == 0.0 {
            return Err(StatError::SingularDesign);
        }
        // Apply H = I - 2 v v^T / (v^T v) to the trailing columns and qty.
        for j in (k + 1)..p {
            let mut dot = vk * w[k * p + j];
            for i in (k + 1)..n {
                dot += w[i * p + k] * w[i * p + j];
            }
            let scale = 2.0 * dot / vnorm2;
            w[k * p + j] -= scale * vk;
            for i in (k + 1)..n {
                w[i * p + j] -= scale * w[i * p + k];
            }
        }
        let mut dot = vk * qty[k];
        for i in (k + 1)..n {
            dot += w[i * p + k] * qty[i];
        }
        let scale = 2.0 * dot / vnorm2;
        qty[k] -= scale * vk;
        for i in (k + 1)..n {
            qty[i] -= scale * w[i * p + k];
        }
        w[k * p + k] = alpha;
    }

    // Rank check on the R diagonal.
    let max_diag = (0..p).map(|k| w[k * p + k].abs()).fold(0.0, f64::max);
    let tol = f64::EPSILON * (n.max(p) as f64) * max_diag;
    if (0..p).any(|k| w[k * p + k].abs() <= tol) {
        return Err(StatError::SingularDesign);
    }

    // Back-substitution: R b = (Q^T y)[..p].
    let mut coef = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = qty[k];
        for j in (k + 1)..p {
            s -= w[k * p + j] * coef[j];
        }
        coef[k] = s / w[k * p + k];
    }

    // diag((X^T X)^{-1}) = squared row norms of R^{-1}.
    let mut rinv = vec![0.0; p * p];
    for col in 0..p {
        rinv[col * p + col] = 1.0 / w[col * p + col];
        for k in (0..col).rev() {
            let mut s = 0.0;
            for j in (k + 1)..=col {
                s -= w[k * p + j] * rinv[j * p + col];
            }
            rinv[k * p + col] = s / w[k * p + k];
        }
    }
    let xtx_inv_diag = (0..p)
        .map(|j| (j..p).map(|k| rinv[j * p + k] * rinv[j * p + k]).sum())
        .collect();

    Ok(LeastSquares { coef, xtx_inv_diag })
}
