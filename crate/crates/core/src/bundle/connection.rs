//! The semi-connection induced by an equivariant generator,
//! `h_u(v) = sigma^B((T pi)^* alpha)` for any covector `alpha` with
//! `sigma^A alpha = v`, and its completion to a connection one-form.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::{BundleSystem, PrincipalBundle};
use crate::error::{Error, Result};
use crate::geometry::spaces::gaussian_vector;
use crate::hormander::E_MEMBERSHIP_TOL;
use crate::linalg;

/// Smallest relative singular value of the splitting matrix `[H C V]`
/// accepted by [`ConnectionForm`].
pub const SPLITTING_RCOND: f64 = 1e-10;

fn base_symbol(bs: &BundleSystem, x: &DVector<f64>) -> DMatrix<f64> {
    let xm = bs.base().x_matrix(x);
    &xm * xm.transpose()
}

/// Minimum-norm covector `alpha` with `sigma^A(x) alpha = v`.
pub fn covector_preimage(bs: &BundleSystem, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let s = base_symbol(bs, x);
    let alpha = linalg::pinv(&s) * v;
    let res = (&s * &alpha - v).norm();
    if res > E_MEMBERSHIP_TOL * (1.0 + v.norm()) {
        return Err(Error::Domain { what: "vector is not in E_x".into(), residual: res });
    }
    Ok(alpha)
}

/// `alpha + k` for a random `k` in the kernel of `sigma^A(x)`.
pub fn random_preimage(bs: &BundleSystem, x: &DVector<f64>, v: &DVector<f64>, rng: &mut dyn RngCore) -> Result<DVector<f64>> {
    let alpha = covector_preimage(bs, x, v)?;
    let s = base_symbol(bs, x);
    let kernel = DMatrix::identity(x.len(), x.len()) - linalg::pinv(&s) * &s;
    Ok(alpha + kernel * gaussian_vector(rng, x.len()))
}

/// `sigma^B((T pi)^* alpha)` at `u`.
pub fn lift_covector(bs: &BundleSystem, u: &DVector<f64>, alpha: &DVector<f64>) -> DVector<f64> {
    let xb = bs.system().x_matrix(u);
    let t = bs.bundle().tpi();
    &xb * (xb.transpose() * (t.transpose() * alpha))
}

/// `h_u(v)` for `v` in `E_{pi(u)}`.
pub fn horizontal_lift(bs: &BundleSystem, u: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let x = bs.bundle().project(u);
    let alpha = covector_preimage(bs, &x, v)?;
    Ok(lift_covector(bs, u, &alpha))
}

/// The matrix of `h_u` applied to the columns of `vs`.
pub fn horizontal_lift_matrix(bs: &BundleSystem, u: &DVector<f64>, vs: &DMatrix<f64>) -> DMatrix<f64> {
    let x = bs.bundle().project(u);
    let s = base_symbol(bs, &x);
    let xb = bs.system().x_matrix(u);
    let t = bs.bundle().tpi();
    &xb * (xb.transpose() * (t.transpose() * (linalg::pinv(&s) * vs)))
}

/// `A^a(u) = d/dt u exp(t a)`, that is `(0, vec(F a))`.
pub fn fundamental_field(bundle: &dyn PrincipalBundle, u: &DVector<f64>, a: &DMatrix<f64>) -> DVector<f64> {
    let x = bundle.project(u);
    bundle.join(&(x * 0.0), &(bundle.fibre_matrix(u) * a))
}

/// How the horizontal space is extended over directions of `T_xM`
/// outside `E_x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Completion {
    /// The bundle's transport lift of the complement.
    Transport,
    /// The transport lift plus the fundamental field of `F^+ L(w) F`, for a
    /// fixed skew-valued linear map `L`.
    Twisted,
}

/// The connection one-form `omega~` that vanishes on `h_u(E_x)` and on the
/// chosen lift of the complement of `E_x`, and reproduces the Lie algebra
/// on fundamental fields.
#[derive(Clone, Debug)]
pub struct ConnectionForm {
    bs: BundleSystem,
    completion: Completion,
}

impl ConnectionForm {
    pub fn new(bs: &BundleSystem, completion: Completion) -> Self {
        Self { bs: bs.clone(), completion }
    }

    pub fn completion(&self) -> Completion {
        self.completion
    }

    fn twist(&self, rows: usize, w: &DVector<f64>) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(rows, rows);
        if rows < 2 {
            return l;
        }
        for (a, c) in w.iter().enumerate() {
            let i = a % rows;
            let j = (a + 1) % rows;
            let s = 0.7 + 0.3 * a as f64;
            l[(i, j)] += s * c;
            l[(j, i)] -= s * c;
        }
        l
    }

    /// The `k x N_P` matrix of `omega~` at `u` in the coordinates of the
    /// group basis.
    pub fn matrix(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let bundle = self.bs.bundle().as_ref();
        let x = bundle.project(u);
        let tangent = bundle.base().projector(&x);
        let s = base_symbol(&self.bs, &x);
        let p = self.bs.base().rank();
        let e_basis = linalg::leading_basis(&s, p);
        let pi_e = &e_basis * e_basis.transpose();
        let c_basis = linalg::leading_basis(&(&tangent - &pi_e), bundle.base().intrinsic_dim() - p);
        let group = self.bs.group();

        let mut cols: Vec<DVector<f64>> = Vec::new();
        let h = horizontal_lift_matrix(&self.bs, u, &e_basis);
        cols.extend((0..h.ncols()).map(|j| h.column(j).into_owned()));
        let f = bundle.fibre_matrix(u);
        let f_inv = linalg::pinv(&f);
        for j in 0..c_basis.ncols() {
            let w = c_basis.column(j).into_owned();
            let mut c = bundle.transport_lift(u, &w);
            if self.completion == Completion::Twisted {
                let rho = &f_inv * self.twist(f.nrows(), &w) * &f;
                c += fundamental_field(bundle, u, &rho);
            }
            cols.push(c);
        }
        let horizontal = cols.len();
        for a in group.basis() {
            cols.push(fundamental_field(bundle, u, a));
        }
        let m = DMatrix::from_columns(&cols);
        let sv = linalg::svd(&m).singular_values;
        let smax = sv.max();
        let smin = sv.min();
        if !(smin > SPLITTING_RCOND * smax) {
            return Err(Error::SplittingDegenerate(format!(
                "splitting matrix has relative singular value {:.3e}",
                smin / smax
            )));
        }
        let inv = linalg::pinv(&m);
        Ok(inv.rows(horizontal, group.dim()).into_owned())
    }

    /// `omega~_u(w)` in basis coordinates.
    pub fn eval(&self, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.matrix(u)? * w)
    }
}
