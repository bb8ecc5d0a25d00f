//! Directional derivatives along retraction curves and application of
//! second-order operators in Hörmander form.
//!
//! A first derivative of a function `g` defined on `M` along a tangent
//! vector `v` is taken along the curve `s -> R(x + s v)`, which has velocity
//! `v` at `s = 0`. Central differences with one Richardson level are used.

use nalgebra::DVector;

use super::fields::{FieldMap, ScalarField};
use super::manifold::{Manifold, ManifoldPoint, TANGENT_TOL};
use crate::error::{Error, Result};

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-4;

fn curve(m: &dyn Manifold, x: &DVector<f64>, v: &DVector<f64>, s: f64) -> Result<DVector<f64>> {
    m.retract(&(x + v * s))
}

fn central<T, F>(m: &dyn Manifold, g: &F, x: &DVector<f64>, v: &DVector<f64>, h: f64) -> Result<T>
where
    F: Fn(&DVector<f64>) -> T,
    T: std::ops::Sub<Output = T> + std::ops::Div<f64, Output = T>,
{
    let plus = g(&curve(m, x, v, h)?);
    let minus = g(&curve(m, x, v, -h)?);
    Ok((plus - minus) / (2.0 * h))
}

/// `d/ds g(R(x + s v))` at `s = 0`, with step `h` and one Richardson level.
pub fn directional_derivative_with<F>(m: &dyn Manifold, g: F, x: &DVector<f64>, v: &DVector<f64>, h: f64) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    if v.iter().all(|c| *c == 0.0) {
        return Ok(0.0);
    }
    let d1 = central(m, &g, x, v, h)?;
    let d2 = central(m, &g, x, v, h / 2.0)?;
    Ok((4.0 * d2 - d1) / 3.0)
}

pub fn directional_derivative<F>(m: &dyn Manifold, g: F, x: &DVector<f64>, v: &DVector<f64>) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    directional_derivative_with(m, g, x, v, FD_STEP)
}

/// Vector-valued version of [`directional_derivative_with`].
pub fn directional_derivative_vec_with<F>(
    m: &dyn Manifold,
    g: F,
    x: &DVector<f64>,
    v: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if v.iter().all(|c| *c == 0.0) {
        return Ok(g(x) * 0.0);
    }
    let d1 = central(m, &g, x, v, h)?;
    let d2 = central(m, &g, x, v, h / 2.0)?;
    Ok((d2 * 4.0 - d1) / 3.0)
}

pub fn directional_derivative_vec<F>(m: &dyn Manifold, g: F, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    directional_derivative_vec_with(m, g, x, v, FD_STEP)
}

/// Lie derivative `L_V f` at `y`; exact when `f` has an analytic gradient.
pub fn lie_derivative(m: &dyn Manifold, f: &dyn ScalarField, v: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    match f.gradient(y) {
        Some(g) => Ok(g.dot(v)),
        None => directional_derivative(m, |z| f.value(z), y, v),
    }
}

/// Reject field values that are not tangent at `x`.
pub fn check_tangent(m: &dyn Manifold, x: &DVector<f64>, vectors: &[DVector<f64>], what: &str) -> Result<()> {
    let p = m.projector(x);
    for (j, v) in vectors.iter().enumerate() {
        let res = (v - &p * v).norm();
        if res > 1e2 * TANGENT_TOL * (1.0 + v.norm()) {
            return Err(Error::Config(format!(
                "{what} {j} is not tangent to {} (normal residual {res:.3e})",
                m.name()
            )));
        }
    }
    Ok(())
}

/// `(1/2 sum_j L_{X^j} L_{X^j} + L_A) f` at ambient coordinates `x` on `M`.
///
/// Uses closed-form derivatives when `f` supplies its gradient and Hessian
/// and every field supplies its first derivative; otherwise nested
/// retraction-curve finite differences.
pub fn apply_hormander(
    m: &dyn Manifold,
    fields: &dyn FieldMap,
    drift: &dyn FieldMap,
    f: &dyn ScalarField,
    x: &DVector<f64>,
) -> Result<f64> {
    let xm = fields.eval(x);
    let a = drift.eval(x).column(0).into_owned();
    let cols: Vec<DVector<f64>> = (0..xm.ncols()).map(|j| xm.column(j).into_owned()).collect();
    check_tangent(m, x, &cols, "driving field")?;
    check_tangent(m, x, std::slice::from_ref(&a), "drift")?;

    if let (Some(g), Some(h)) = (f.gradient(x), f.hessian(x)) {
        let derivs: Option<Vec<DVector<f64>>> = cols
            .iter()
            .enumerate()
            .map(|(j, c)| fields.derivative(x, c).map(|d| d.column(j).into_owned()))
            .collect();
        if let Some(derivs) = derivs {
            let mut second = 0.0;
            for (c, dc) in cols.iter().zip(&derivs) {
                second += c.dot(&(&h * c)) + g.dot(dc);
            }
            return Ok(0.5 * second + g.dot(&a));
        }
    }

    let mut second = 0.0;
    for (j, c) in cols.iter().enumerate() {
        let inner = |y: &DVector<f64>| {
            let vj = fields.column(y, j);
            lie_derivative(m, f, &vj, y).unwrap_or(f64::NAN)
        };
        let d = directional_derivative(m, inner, x, c)?;
        if !d.is_finite() {
            return Err(Error::Domain {
                what: "non-finite nested derivative".into(),
                residual: f64::NAN,
            });
        }
        second += d;
    }
    Ok(0.5 * second + lie_derivative(m, f, &a, x)?)
}

/// [`apply_hormander`] at a checked manifold point.
pub fn apply_operator(fields: &dyn FieldMap, drift: &dyn FieldMap, f: &dyn ScalarField, x: &ManifoldPoint) -> Result<f64> {
    apply_hormander(x.manifold().as_ref(), fields, drift, f, x.coords())
}
