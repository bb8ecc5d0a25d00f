//! Left-invariant Stratonovich equations `dg = g xi(t, g) o dB` on a matrix
//! group, stepped with exponentials.

use nalgebra::DMatrix;

use super::brownian::BrownianPath;
use crate::error::{Error, Result};
use crate::group::MatrixGroup;

/// Group residual allowed after re-projection.
pub const GROUP_TOL: f64 = 1e-8;

/// Lie algebra coefficients at one grid point: one element per noise
/// component plus the drift element.
#[derive(Clone, Debug)]
pub struct AlgebraCoefficients {
    pub noise: Vec<DMatrix<f64>>,
    pub drift: DMatrix<f64>,
}

impl AlgebraCoefficients {
    pub fn zero(n: usize, m: usize) -> Self {
        Self { noise: vec![DMatrix::zeros(n, n); m], drift: DMatrix::zeros(n, n) }
    }

    /// `sum_j xi_j dB^j + xi_0 dt`.
    pub fn increment(&self, db: &nalgebra::DVector<f64>, dt: f64) -> DMatrix<f64> {
        let mut out = &self.drift * dt;
        for (a, b) in self.noise.iter().zip(db.iter()) {
            out += a * *b;
        }
        out
    }
}

/// `g_0 = id, g_1, ..., g_K` on the grid of the driver.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupPath {
    pub t0: f64,
    pub dt: f64,
    pub elements: Vec<DMatrix<f64>>,
}

impl GroupPath {
    pub fn last(&self) -> &DMatrix<f64> {
        self.elements.last().expect("paths are never empty")
    }
}

/// Heun on the group: with `xi_k = coeff(k, g_k)` applied to `dB_k`,
/// predictor `g~ = g_k exp(xi_k)` and `g_{k+1} = g_k exp((xi_k + xi~_{k+1}) / 2)`
/// where `xi~_{k+1} = coeff(k + 1, g~)` applied to the same increment.
pub fn integrate_group(
    group: &MatrixGroup,
    coeff: &mut dyn FnMut(usize, &DMatrix<f64>) -> Result<AlgebraCoefficients>,
    path: &BrownianPath,
) -> Result<GroupPath> {
    let mut g = group.identity();
    let mut elements = vec![g.clone()];
    let dt = path.dt();
    for k in 0..path.steps() {
        let db = path.increment(k);
        let checked = |xi: DMatrix<f64>| {
            let norm = xi.norm();
            if !(norm <= 1.0) {
                return Err(Error::StepSize { step: k, norm });
            }
            Ok(xi)
        };
        let xi0 = checked(coeff(k, &g)?.increment(db, dt))?;
        let pred = &g * group.exp(&xi0);
        let xi1 = checked(coeff(k + 1, &pred)?.increment(db, dt))?;
        let next = group.reproject(&(&g * group.exp(&((xi0 + xi1) * 0.5))));
        let res = group.residual(&next);
        if res > GROUP_TOL {
            return Err(Error::Integration {
                step: k,
                source: Box::new(Error::Domain { what: "group path left the group".into(), residual: res }),
            });
        }
        g = next;
        elements.push(g.clone());
    }
    Ok(GroupPath { t0: path.t0(), dt, elements })
}
