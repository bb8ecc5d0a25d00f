//! Stratonovich integration on embedded manifolds and matrix groups,
//! reproducible Brownian drivers and refinement-order estimates.

pub mod brownian;
pub mod group_path;
pub mod integrator;
pub mod order;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::geometry::calculus::directional_derivative_vec;
use crate::hormander::HormanderSystem;

pub use brownian::{grid_steps, sample_brownian, stream_rng, BrownianPath};
pub use group_path::{integrate_group, AlgebraCoefficients, GroupPath, GROUP_TOL};
pub use integrator::{heun_step, integrate_inspected, integrate_ode, integrate_stratonovich, strong_error, PathSample, Sde};
pub use order::{convergence_order, dyadic_steps, RefinementStudy, ROUNDING_FLOOR};

/// `Lambda(x) = 1/2 sum_j (D_{X^j(x)} K)(x) e_j`, the drift turning
/// `int K(x_s) o dB_s` into an Ito integral along the paths of `system`.
pub fn strat_correction(system: &HormanderSystem, k: &dyn Fn(&DVector<f64>) -> DMatrix<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    let xm = system.x_matrix(x);
    let m = xm.ncols();
    let mut out = DVector::zeros(k(x).nrows());
    for j in 0..m {
        let col = |y: &DVector<f64>| k(y).column(j).into_owned();
        out += directional_derivative_vec(system.manifold().as_ref(), col, x, &xm.column(j).into_owned())?;
    }
    Ok(out * 0.5)
}

/// [`strat_correction`] for the kernel projection `K` of the system.
pub fn kernel_correction(system: &HormanderSystem, x: &DVector<f64>) -> Result<DVector<f64>> {
    strat_correction(system, &|y| system.kernel_projection(y).0, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;

    #[test]
    fn constant_integrands_have_no_correction() {
        let sys = systems::torus_rank1();
        let x = DVector::from_column_slice(&[0.3, 2.0]);
        assert_eq!(kernel_correction(&sys, &x).unwrap(), DVector::zeros(2));
        let sys = systems::torus_flat();
        assert_eq!(strat_correction(&sys, &|_| DMatrix::identity(2, 2), &x).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn sphere_kernel_correction_matches_symbolic_derivative() {
        let sys = systems::s2_gradient();
        let x = DVector::from_column_slice(&[0.48, -0.6, 0.64]);
        // D_v (x x^T) = v x^T + x v^T
        let xm = sys.x_matrix(&x);
        let mut symbolic = DVector::zeros(3);
        for j in 0..3 {
            let v = xm.column(j).into_owned();
            symbolic += (&v * x.transpose() + &x * v.transpose()).column(j) * 0.5;
        }
        let fd = kernel_correction(&sys, &x).unwrap();
        assert!((&fd - &symbolic).norm() < 1e-8, "{fd} vs {symbolic}");
        assert!((&fd - &x).norm() < 1e-8);
    }
}
