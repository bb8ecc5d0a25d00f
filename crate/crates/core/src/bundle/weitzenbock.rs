//! Derivative-flow generators acting on one-forms lifted to the frame
//! bundle: the vertical part against the Ricci term, the closed-form
//! coefficients in terms of the LeJan-Watanabe connection, and the
//! covariant derivative induced on `TM`.

use nalgebra::{DMatrix, DVector};

use super::connection::horizontal_lift;
use super::decompose::{Decomposition, VerticalCoeffs};
use super::{BundleRef, BundleSystem};
use crate::error::Result;
use crate::geometry::calculus::directional_derivative_vec;
use crate::geometry::fields::{OneFormRef, ScalarField};
use crate::group::MatrixGroup;
use crate::hormander::HormanderSystem;
use crate::linalg;
use crate::lw::{lw_covariant_derivative, ricci_sharp, VectorField};

/// `phi~_xi(x, u) = phi_x(u xi)`, a function on the frame bundle.
pub struct FrameOneForm {
    pub phi: OneFormRef,
    pub xi: DVector<f64>,
    pub bundle: BundleRef,
}

impl ScalarField for FrameOneForm {
    fn value(&self, p: &DVector<f64>) -> f64 {
        let x = self.bundle.project(p);
        self.phi.eval(&x, &(self.bundle.fibre_matrix(p) * &self.xi))
    }

    fn gradient(&self, p: &DVector<f64>) -> Option<DVector<f64>> {
        let x = self.bundle.project(p);
        let ue = self.bundle.fibre_matrix(p) * &self.xi;
        let gx = self.phi.jacobian(&x)?.transpose() * ue;
        let gu = self.phi.covector(&x) * self.xi.transpose();
        Some(self.bundle.join(&gx, &gu))
    }

    fn hessian(&self, p: &DVector<f64>) -> Option<DMatrix<f64>> {
        let x = self.bundle.project(p);
        let nb = x.len();
        let ue = self.bundle.fibre_matrix(p) * &self.xi;
        let j = self.phi.jacobian(&x)?;
        let mut h = DMatrix::zeros(p.len(), p.len());
        h.view_mut((0, 0), (nb, nb)).copy_from(&self.phi.covector_hessian(&x, &ue)?);
        let rows = self.bundle.fibre_rows();
        for (i, xi) in self.xi.iter().enumerate() {
            for r in 0..rows {
                let col = nb + r + rows * i;
                for a in 0..nb {
                    h[(a, col)] = j[(r, a)] * xi;
                    h[(col, a)] = j[(r, a)] * xi;
                }
            }
        }
        Some(h)
    }
}

/// The vertical part applied to a lifted one-form, evaluated on the
/// standard basis of `R^n`, computed three ways.
#[derive(Clone, Debug)]
pub struct WeitzenbockReport {
    /// `sum alpha^{ij} phi(u A_i A_j e) + sum beta^k phi(u A_k e)`.
    pub coefficients: DVector<f64>,
    /// `-1/2 phi(Ric#(u e))`.
    pub ricci: DVector<f64>,
    /// `(B - A^H) phi~_e` by finite differences.
    pub direct: DVector<f64>,
    /// `phi(u e)`.
    pub phi: DVector<f64>,
}

impl WeitzenbockReport {
    pub fn two_way_defect(&self) -> f64 {
        (&self.coefficients - &self.ricci).amax()
    }

    pub fn direct_defect(&self) -> f64 {
        (&self.coefficients - &self.direct).amax()
    }

    /// Largest deviation of both ways from `-1/2 phi(u e)`.
    pub fn half_phi_defect(&self) -> f64 {
        let target = &self.phi * -0.5;
        (&self.coefficients - &target).amax().max((&self.ricci - &target).amax())
    }
}

pub fn weitzenbock_on_oneform(dec: &Decomposition, u: &DVector<f64>, phi: &OneFormRef) -> Result<WeitzenbockReport> {
    let bs = dec.bundle_system();
    let bundle = bs.bundle();
    let x = bundle.project(u);
    let frame = bundle.fibre_matrix(u);
    let n = frame.ncols();
    let coeffs = dec.coeffs(u)?;
    let action = coeffs.action_matrix(bs.group().basis());
    let mut report = WeitzenbockReport {
        coefficients: DVector::zeros(n),
        ricci: DVector::zeros(n),
        direct: DVector::zeros(n),
        phi: DVector::zeros(n),
    };
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let ue = &frame * &e;
        report.phi[i] = phi.eval(&x, &ue);
        report.coefficients[i] = phi.eval(&x, &(&frame * (&action * &e)));
        report.ricci[i] = -0.5 * phi.eval(&x, &ricci_sharp(bs.base(), &x, &ue)?);
        let lifted = FrameOneForm { phi: phi.clone(), xi: e, bundle: bundle.clone() };
        report.direct[i] = dec.apply_vertical(&lifted, u)?;
    }
    Ok(report)
}

/// `xi_p = u^{-1} nabla_{u(.)} X^p` as `n x n` matrices.
fn lw_factors(base: &HormanderSystem, x: &DVector<f64>, frame: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
    let n = frame.ncols();
    let u_inv = linalg::pinv(frame);
    let mut out = Vec::new();
    for p in 0..base.noise_dim() {
        let field = |y: &DVector<f64>| base.fields().column(y, p);
        let mut xi = DMatrix::zeros(n, n);
        for i in 0..n {
            let d = lw_covariant_derivative(base, &field, x, &frame.column(i).into_owned())?;
            xi.set_column(i, &(&u_inv * d));
        }
        out.push(xi);
    }
    Ok(out)
}

/// The vertical coefficients of a derivative-flow generator predicted from
/// the LeJan-Watanabe connection of the base system:
/// `alpha = 1/2 sum_p xi_p (x) xi_p` and
/// `beta = -1/2 sum_p u^{-1} nabla_{nabla_{u(.)} X^p} X^p - 1/2 u^{-1} Ric#(u(.))`.
pub fn lw_predicted_coeffs(base: &HormanderSystem, group: &MatrixGroup, x: &DVector<f64>, frame: &DMatrix<f64>) -> Result<VerticalCoeffs> {
    let n = frame.ncols();
    let k = group.dim();
    let u_inv = linalg::pinv(frame);
    let factors = lw_factors(base, x, frame)?;
    let mut alpha = DMatrix::zeros(k, k);
    for xi in &factors {
        let c = group.coords(xi);
        alpha += &c * c.transpose() * 0.5;
    }
    let mut beta_m = DMatrix::zeros(n, n);
    for i in 0..n {
        let ue = frame.column(i).into_owned();
        let mut col = -(&u_inv * ricci_sharp(base, x, &ue)?) * 0.5;
        for p in 0..base.noise_dim() {
            let field = |y: &DVector<f64>| base.fields().column(y, p);
            let inner = lw_covariant_derivative(base, &field, x, &ue)?;
            col -= &u_inv * lw_covariant_derivative(base, &field, x, &inner)? * 0.5;
        }
        beta_m.set_column(i, &col);
    }
    Ok(VerticalCoeffs { alpha, beta: group.coords(&beta_m) })
}

/// `nabla_w Z = u d(u^{-1} Z)(h_u(w))` for a vector field `Z` on the base
/// and `w` in `E_x`.
pub fn associated_covariant_derivative(bs: &BundleSystem, u: &DVector<f64>, z: &VectorField<'_>, w: &DVector<f64>) -> Result<DVector<f64>> {
    let bundle = bs.bundle().clone();
    let h = horizontal_lift(bs, u, w)?;
    let equivariant = |p: &DVector<f64>| linalg::pinv(&bundle.fibre_matrix(p)) * z(&bundle.project(p));
    let d = directional_derivative_vec(bundle.total().as_ref(), equivariant, u, &h)?;
    Ok(bundle.fibre_matrix(u) * d)
}
