//! Small dense linear-algebra helpers shared by the residual computations.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-8;

/// Singular values of `m`, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let svd = m.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let max = s.first().copied().unwrap_or(0.0);
    if max == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * max).count()
}

/// Orthonormal basis of the null space of `m` (as matrix columns), computed
/// from the symmetric eigendecomposition of mᵀm. Returns `None` when the
/// numeric rank disagrees with `expected_rank`.
pub fn nullspace(m: &DMatrix<f64>, expected_rank: usize) -> Option<DMatrix<f64>> {
    let cols = m.ncols();
    let gram = m.transpose() * m;
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap()
    });
    let max_sv2 = order
        .last()
        .map(|&i| eig.eigenvalues[i].max(0.0))
        .unwrap_or(0.0);
    // eigenvalues of the Gram matrix are only accurate to ~eps * |G|, so the
    // cutoff must sit well above that rather than at RANK_TOL^2
    let threshold = 1e-12 * max_sv2;
    let null_dim = cols - expected_rank;
    // the null_dim smallest eigenvalues must sit below threshold and the
    // rest above it, otherwise the rank assumption is wrong
    for (pos, &i) in order.iter().enumerate() {
        let ev = eig.eigenvalues[i].max(0.0);
        if pos < null_dim {
            if max_sv2 > 0.0 && ev > threshold {
                return None;
            }
        } else if ev <= threshold {
            return None;
        }
    }
    let mut basis = DMatrix::zeros(cols, null_dim);
    for (j, &i) in order.iter().take(null_dim).enumerate() {
        basis.set_column(j, &eig.eigenvectors.column(i));
    }
    Some(basis)
}

/// Euclidean distance from `target` to the column span of `basis`
/// (least-squares residual norm). An empty basis gives `|target|`.
pub fn span_residual(basis: &DMatrix<f64>, target: &DVector<f64>) -> f64 {
    if basis.ncols() == 0 {
        return target.norm();
    }
    let svd = basis.clone().svd(true, true);
    match svd.solve(target, 1e-13) {
        Ok(x) => (basis * x - target).norm(),
        Err(_) => target.norm(),
    }
}

pub fn dmatrix_from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nrows = rows.len();
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c])
}
