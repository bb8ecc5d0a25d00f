//! Small dense linear-algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector, Dyn, SVD};

/// Singular values below `PINV_RCOND * sigma_max` are treated as zero.
pub const PINV_RCOND: f64 = 1e-10;
/// Relative threshold used for numerical rank decisions.
pub const RANK_RTOL: f64 = 1e-8;

/// Convergence thresholds tried in turn by [`svd`].
const SVD_EPS_LADDER: [f64; 4] = [f64::EPSILON, 1e-14, 1e-12, 1e-10];

/// Full SVD whose factors are checked to reproduce `a`.
///
/// nalgebra's iteration can stop on a wrong factorization for some nearly
/// rank-deficient inputs (reconstruction errors of order 1e-2 for 2x2
/// projectors) when run at machine-epsilon tolerance; a looser convergence
/// threshold fixes those cases.
pub fn svd(a: &DMatrix<f64>) -> SVD<f64, Dyn, Dyn> {
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, SVD<f64, Dyn, Dyn>)> = None;
    for eps in SVD_EPS_LADDER {
        let Some(candidate) = a.clone().try_svd(true, true, eps, 0) else {
            continue;
        };
        let err = match candidate.clone().recompose() {
            Ok(r) => (r - a).norm() / scale,
            Err(_) => f64::INFINITY,
        };
        if err <= 1e-12 {
            return candidate;
        }
        if best.as_ref().map_or(true, |(e, _)| err < *e) {
            best = Some((err, candidate));
        }
    }
    best.expect("at least one SVD attempt converges").1
}

/// Moore-Penrose pseudo-inverse with relative cutoff `rcond`.
pub fn pinv_with(a: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = svd(a);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut out = DMatrix::zeros(c, r);
    if smax == 0.0 {
        return out;
    }
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > rcond * smax {
            out += (vt.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    out
}

pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    pinv_with(a, PINV_RCOND)
}

/// Numerical rank with a relative singular-value threshold.
pub fn rank(a: &DMatrix<f64>, rtol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let s = svd(a).singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rtol * smax).count()
}

/// Orthonormal basis of the column span of `a` (columns of the result).
pub fn column_basis(a: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    if a.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = svd(a);
    let u = svd.u.expect("svd u");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<_> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| smax > 0.0 && s > rtol * smax)
        .map(|(k, _)| u.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// The `k` leading left singular vectors of `a`.
pub fn leading_basis(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = a.nrows();
    if k == 0 || a.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = svd(a);
    let u = svd.u.expect("svd u");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let cols: Vec<_> = order.iter().take(k).map(|&i| u.column(i).into_owned()).collect();
    DMatrix::from_columns(&cols)
}

/// Orthonormal basis of the null space of `a` (columns of the result).
pub fn null_basis(a: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let c = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(c, c);
    }
    // Pad to a square system so that the full right singular basis is available.
    let mut padded = DMatrix::zeros(a.nrows().max(c), c);
    padded.view_mut((0, 0), a.shape()).copy_from(a);
    let svd = svd(&padded);
    let vt = svd.v_t.expect("svd v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<_> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| smax == 0.0 || s <= rtol * smax)
        .map(|(k, _)| vt.row(k).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(c, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthogonal projector onto the column span of `a`.
pub fn span_projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    let q = column_basis(a, RANK_RTOL);
    &q * q.transpose()
}

/// Orthogonal polar factor `U V^T` of `a = U S V^T`.
pub fn polar(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = svd(a);
    svd.u.expect("svd u") * svd.v_t.expect("svd v_t")
}

/// 2-norm condition number; infinite for rank-deficient input.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = svd(a).singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Sine of the largest principal angle between two subspaces given by
/// spanning columns. Zero when the spans coincide.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let pa = span_projector(a);
    let pb = span_projector(b);
    (pa - pb).norm().min(1.0e300) / std::f64::consts::SQRT_2
}

/// Column-major flattening of a matrix.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v)
}

/// Symmetric part `(a + a^T) / 2`.
pub fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest absolute entry.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
