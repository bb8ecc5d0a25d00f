//! `B = A^H + B^V` for an equivariant generator `B` on a principal bundle,
//! with the vertical part written as
//! `B^V = sum alpha^{kl} L_{A_k*} L_{A_l*} + sum beta^k L_{A_k*}`,
//! `alpha^{kl} = omega~^k(sigma^B omega~^l)` and `beta^l = delta^B(omega~^l)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::connection::{horizontal_lift_matrix, Completion, ConnectionForm};
use super::{BundleSystem, PrincipalBundle};
use crate::error::{Error, Result};
use crate::geometry::calculus::directional_derivative_vec;
use crate::geometry::fields::{FieldRef, FnFieldMap, LinearPullback, Polynomial, ProductField, ScalarField, ScalarRef};
use crate::hormander::{is_along, HormanderSystem};
use crate::linalg;

/// Probes of the operator-level equivariance check run by [`decompose`].
pub const EQUIVARIANCE_PROBES: usize = 50;

/// The coefficients of the vertical part at one point of `P`: `alpha` is
/// `k x k`, `beta` has length `k`, both in the coordinates of the group
/// basis.
#[derive(Clone, Debug, PartialEq)]
pub struct VerticalCoeffs {
    pub alpha: DMatrix<f64>,
    pub beta: DVector<f64>,
}

impl VerticalCoeffs {
    /// `sum alpha^{ij} A_i A_j + sum beta^k A_k`, the matrix by which the
    /// vertical part acts on the linear functions `u -> phi(u xi)`.
    pub fn action_matrix(&self, basis: &[DMatrix<f64>]) -> DMatrix<f64> {
        let n = basis[0].nrows();
        let mut out = DMatrix::zeros(n, n);
        for (i, ai) in basis.iter().enumerate() {
            for (j, aj) in basis.iter().enumerate() {
                out += ai * aj * self.alpha[(i, j)];
            }
            out += ai * self.beta[i];
        }
        out
    }

    /// `alpha` as the tensor `sum alpha^{ij} vec(A_i) vec(A_j)^T` and `beta`
    /// as the matrix `sum beta^k A_k`; both independent of the basis.
    pub fn invariant_parts(&self, basis: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
        let cols: Vec<DVector<f64>> = basis.iter().map(linalg::vec_of).collect();
        let b = DMatrix::from_columns(&cols);
        let n = basis[0].nrows();
        let beta = linalg::unvec((&b * &self.beta).as_slice(), n, n);
        (&b * &self.alpha * b.transpose(), beta)
    }

    /// Smallest eigenvalue of `alpha`.
    pub fn alpha_min_eigenvalue(&self) -> f64 {
        linalg::sym(&self.alpha).symmetric_eigenvalues().min()
    }
}

/// Result of [`decompose`]: the horizontal generator `A^H` on `P` and the
/// connection form used for the vertical coefficients.
#[derive(Clone, Debug)]
pub struct Decomposition {
    bs: BundleSystem,
    horizontal: HormanderSystem,
    form: ConnectionForm,
}

/// The horizontal lift of the base generator: fields `h_u(X^j(x))` and
/// drift `h_u(A(x))`.
pub fn horizontal_generator(bs: &BundleSystem) -> Result<HormanderSystem> {
    let (f_bs, d_bs) = (bs.clone(), bs.clone());
    let total = bs.bundle().total().clone();
    let m = bs.base().noise_dim();
    let np = total.ambient_dim();
    let fields: FieldRef = FnFieldMap::new(np, m, move |u| {
        let x = f_bs.bundle().project(u);
        horizontal_lift_matrix(&f_bs, u, &f_bs.base().x_matrix(&x))
    })
    .shared();
    let drift: FieldRef = FnFieldMap::new(np, 1, move |u| {
        let x = d_bs.bundle().project(u);
        let a = d_bs.base().drift_map().eval(&x);
        horizontal_lift_matrix(&d_bs, u, &a)
    })
    .shared();
    HormanderSystem::new(total, fields, drift, bs.base().rank())
}

/// Checks equivariance and strong cohesiveness of the induced base
/// generator, then builds `A^H` and the connection form.
pub fn decompose(bs: &BundleSystem, completion: Completion, rng: &mut dyn RngCore) -> Result<Decomposition> {
    let probe = bs.sample(rng);
    let has_derivatives = bs.system().fields().derivative(&probe, &probe).is_some();
    if has_derivatives {
        bs.check_equivariant(EQUIVARIANCE_PROBES, rng)?;
    }
    bs.base().validate(100, rng)?;
    let base = bs.base().clone();
    let along = is_along(
        bs.base(),
        move |x: &DVector<f64>| base.x_matrix(x),
        &[],
        20,
        rng,
    )?;
    if !along.pass {
        return Err(Error::Config(format!(
            "induced base operator is not along the image of its symbol (max |delta phi| = {:.3e})",
            along.max_abs_delta
        )));
    }
    let horizontal = horizontal_generator(bs)?;
    Ok(Decomposition { bs: bs.clone(), horizontal, form: ConnectionForm::new(bs, completion) })
}

impl Decomposition {
    pub fn bundle_system(&self) -> &BundleSystem {
        &self.bs
    }

    pub fn horizontal(&self) -> &HormanderSystem {
        &self.horizontal
    }

    pub fn form(&self) -> &ConnectionForm {
        &self.form
    }

    /// Same decomposition with the other completion of the semi-connection.
    pub fn with_completion(&self, completion: Completion) -> Self {
        Self { form: ConnectionForm::new(&self.bs, completion), ..self.clone() }
    }

    /// `alpha(u)` and `beta(u)`.
    pub fn coeffs(&self, u: &DVector<f64>) -> Result<VerticalCoeffs> {
        let system = self.bs.system();
        let w = self.form.matrix(u)?;
        let xb = system.x_matrix(u);
        let wx = &w * &xb;
        let alpha = &wx * wx.transpose() * 0.5;
        let total = self.bs.bundle().total();
        let mut beta = &w * system.drift(u);
        for j in 0..xb.ncols() {
            let pairing = |y: &DVector<f64>| match self.form.matrix(y) {
                Ok(wy) => wy * system.fields().column(y, j),
                Err(_) => DVector::from_element(wx.nrows(), f64::NAN),
            };
            let d = directional_derivative_vec(total.as_ref(), pairing, u, &xb.column(j).into_owned())?;
            if d.iter().any(|c| !c.is_finite()) {
                return Err(Error::SplittingDegenerate("connection form failed near the probe point".into()));
            }
            beta += d * 0.5;
        }
        Ok(VerticalCoeffs { alpha, beta })
    }

    /// `(B - A^H) f` at `u`.
    pub fn apply_vertical(&self, f: &dyn ScalarField, u: &DVector<f64>) -> Result<f64> {
        Ok(self.bs.system().apply(f, u)? - self.horizontal.apply(f, u)?)
    }

    /// `A^H f` at `u`.
    pub fn apply_horizontal(&self, f: &dyn ScalarField, u: &DVector<f64>) -> Result<f64> {
        self.horizontal.apply(f, u)
    }

    /// `|alpha(ug) - Ad(g^-1) alpha(u) Ad(g^-1)^T|` and
    /// `|beta(ug) - Ad(g^-1) beta(u)|`.
    pub fn equivariance_alpha_beta(&self, u: &DVector<f64>, g: &DMatrix<f64>) -> Result<(f64, f64)> {
        let group = self.bs.group();
        let gi = g.clone().try_inverse().ok_or_else(|| Error::Config("group element is singular".into()))?;
        let ad = group.ad_matrix(&gi);
        let cu = self.coeffs(u)?;
        let cug = self.coeffs(&self.bs.bundle().right_act(u, g))?;
        let da = (&cug.alpha - &ad * &cu.alpha * ad.transpose()).norm();
        let db = (&cug.beta - &ad * &cu.beta).norm();
        Ok((da, db))
    }
}

/// `max |D(f1 (f2 o pi)) - (f2 o pi) D f1|` over the probes and test
/// functions, for an operator `D` on `P` given by its action.
pub fn verticality_defect(
    op: &dyn Fn(&dyn ScalarField, &DVector<f64>) -> Result<f64>,
    bundle: &dyn PrincipalBundle,
    f1s: &[ScalarRef],
    f2s: &[ScalarRef],
    probes: &[DVector<f64>],
) -> Result<f64> {
    let tpi = bundle.tpi();
    let mut worst: f64 = 0.0;
    for u in probes {
        let x = bundle.project(u);
        for f1 in f1s {
            let d1 = op(f1.as_ref(), u)?;
            for f2 in f2s {
                let pulled: ScalarRef = Arc::new(LinearPullback { inner: f2.clone(), map: tpi.clone() });
                let prod = ProductField(f1.clone(), pulled);
                let lhs = op(&prod, u)?;
                worst = worst.max((lhs - f2.value(&x) * d1).abs());
            }
        }
    }
    Ok(worst)
}

/// Test functions on `P`: polynomials in the fibre coordinates and their
/// products with pulled-back base functions.
pub fn bundle_test_functions(bundle: &dyn PrincipalBundle, base_functions: &[ScalarRef]) -> Vec<ScalarRef> {
    let nb = bundle.base_ambient();
    let dim = bundle.total().ambient_dim();
    let nf = dim - nb;
    let mut out: Vec<ScalarRef> = vec![
        Arc::new(Polynomial::coordinate(dim, nb)),
        Arc::new(Polynomial::new(dim).term(1.0, &[(nb + nf - 1, 1), (nb + nf / 2, 1)])),
        Arc::new(Polynomial::new(dim).term(0.5, &[(nb + 1, 2)]).term(-1.0, &[(nb, 1)])),
    ];
    let tpi = bundle.tpi();
    for (k, f) in base_functions.iter().take(3).enumerate() {
        let pulled: ScalarRef = Arc::new(LinearPullback { inner: f.clone(), map: tpi.clone() });
        let fibre: ScalarRef = Arc::new(Polynomial::coordinate(dim, nb + (k + 1) % nf));
        out.push(Arc::new(ProductField(pulled, fibre)));
    }
    out
}
