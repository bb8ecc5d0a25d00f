//! Skew products of equivariant diffusions on principal bundles: direct
//! simulation on `P`, horizontal lifts, the group-valued fibre process and
//! the pathwise identity `b_t = x~_t g_t`, plus derivative flows on frame
//! bundles and the small-time action on lifted one-forms.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bundle::weitzenbock::FrameOneForm;
use crate::bundle::{BundleSystem, Decomposition};
use crate::error::{Error, Result};
use crate::geometry::fields::{FnScalar, OneFormRef, ScalarField};
use crate::geometry::manifold::{Frame, FRAME_MAX_CONDITION};
use crate::linalg;
use crate::sde::{
    integrate_group, integrate_inspected, integrate_stratonovich, sample_brownian, stream_rng, AlgebraCoefficients,
    BrownianPath, GroupPath, PathSample, RefinementStudy,
};
use crate::stats::{self, Summary};

/// Stream offset for the random starting points of batch runs, so that
/// they never share a keystream with a driver.
const START_STREAM: u64 = 1 << 40;

/// The derivative flow `(xi_t(x_0), T xi_t o u_0)` from the lifted system of
/// a frame-bundle generator. Aborts when the frame Gram matrix has
/// condition number above [`FRAME_MAX_CONDITION`].
pub fn derivative_flow(bs: &BundleSystem, frame: &Frame, path: &BrownianPath) -> Result<PathSample> {
    let bundle = bs.bundle();
    let u0 = bundle.join(frame.base().coords(), frame.columns());
    integrate_inspected(bs.system(), &u0, path, |k, u| {
        let f = bundle.fibre_matrix(u);
        let condition = linalg::condition_number(&(f.transpose() * &f));
        if !(condition < FRAME_MAX_CONDITION) {
            return Err(Error::FrameDegenerate { time: path.time(k), condition });
        }
        Ok(())
    })
}

/// `sup_t |u_t^T u_t - u_0^T u_0|`.
pub fn isometry_defect(bs: &BundleSystem, path: &PathSample) -> f64 {
    let gram = |u: &DVector<f64>| {
        let f = bs.bundle().fibre_matrix(u);
        f.transpose() * f
    };
    let g0 = gram(&path.points[0]);
    path.points.iter().map(|u| (gram(u) - &g0).norm()).fold(0.0, f64::max)
}

/// The equivariant diffusion on `P` driven by all its noises.
pub fn simulate_direct(bs: &BundleSystem, b0: &DVector<f64>, path: &BrownianPath) -> Result<PathSample> {
    integrate_stratonovich(bs.system(), b0, path)
}

/// `dx~ = h(X(x~)) o dB + h(A(x~)) dt` from `a`.
pub fn horizontal_lift_path(dec: &Decomposition, a: &DVector<f64>, path: &BrownianPath) -> Result<PathSample> {
    integrate_stratonovich(dec.horizontal(), a, path)
}

/// `g^{-1} dg = omega~(X~(y g)) o dB + omega~(A~(y g)) dt` along the
/// horizontal path `y`, with `g_0 = id`.
pub fn vertical_group_path(dec: &Decomposition, y: &PathSample, path: &BrownianPath) -> Result<GroupPath> {
    let bs = dec.bundle_system();
    let group = bs.group();
    if y.steps() != path.steps() {
        return Err(Error::Config("horizontal path and driver have different grids".into()));
    }
    let mut coeff = |k: usize, g: &DMatrix<f64>| -> Result<AlgebraCoefficients> {
        let b = bs.bundle().right_act(&y.points[k], g);
        let w = dec.form().matrix(&b)?;
        let xb = bs.system().x_matrix(&b);
        let noise = (0..xb.ncols()).map(|j| group.element(&(&w * xb.column(j)))).collect();
        Ok(AlgebraCoefficients { noise, drift: group.element(&(&w * bs.system().drift(&b))) })
    };
    integrate_group(group, &mut coeff, path)
}

/// One realization of the skew product under a shared driver.
#[derive(Clone, Debug)]
pub struct SkewProductRun {
    pub direct: PathSample,
    pub horizontal: PathSample,
    pub group: GroupPath,
    /// `dist(b_k, x~_k g_k)` on the grid.
    pub defects: Vec<f64>,
}

impl SkewProductRun {
    pub fn sup_defect(&self) -> f64 {
        self.defects.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn reconstruct_and_compare(dec: &Decomposition, b0: &DVector<f64>, path: &BrownianPath) -> Result<SkewProductRun> {
    let bs = dec.bundle_system();
    let bundle = bs.bundle();
    let direct = simulate_direct(bs, b0, path)?;
    let horizontal = horizontal_lift_path(dec, b0, path)?;
    let group = vertical_group_path(dec, &horizontal, path)?;
    let defects = (0..direct.points.len())
        .map(|k| {
            let rebuilt = bundle.right_act(&horizontal.points[k], &group.elements[k]);
            bundle.total().distance(&direct.points[k], &rebuilt)
        })
        .collect();
    Ok(SkewProductRun { direct, horizontal, group, defects })
}

/// Group-path concatenation at grid index `split`: the second leg is
/// lifted from the direct path at the split and run with the remaining
/// increments. Returns `sup_{k >= split} |g_k - g_split g'_{k - split}|`.
pub fn concatenation_check(dec: &Decomposition, run: &SkewProductRun, path: &BrownianPath, split: usize) -> Result<f64> {
    if split > path.steps() {
        return Err(Error::Config(format!("split index {split} beyond {} steps", path.steps())));
    }
    let tail = path.tail(split);
    let second = horizontal_lift_path(dec, &run.direct.points[split], &tail)?;
    let g2 = vertical_group_path(dec, &second, &tail)?;
    let gs = &run.group.elements[split];
    Ok(g2
        .elements
        .iter()
        .enumerate()
        .map(|(j, g)| (&run.group.elements[split + j] - gs * g).norm())
        .fold(0.0, f64::max))
}

/// Batch settings for pathwise refinement studies.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementConfig {
    pub t_end: f64,
    pub dt_finest: f64,
    pub levels: usize,
    pub paths: usize,
    pub seed: u64,
    /// Replace the fibre matrix of each random start by its polar factor.
    pub orthonormal_starts: bool,
}

/// A random point of `P`, optionally with orthonormalized fibre matrix.
pub fn sample_start(bs: &BundleSystem, orthonormal: bool, rng: &mut dyn rand::RngCore) -> DVector<f64> {
    let b = bs.sample(rng);
    if !orthonormal {
        return b;
    }
    let bundle = bs.bundle();
    bundle.join(&bundle.project(&b), &linalg::polar(&bundle.fibre_matrix(&b)))
}

/// Reconstruction and mid-point concatenation defects on dyadic grids.
#[derive(Clone, Debug)]
pub struct SkewStudy {
    pub reconstruction: RefinementStudy,
    pub concatenation: RefinementStudy,
    /// Per level, per path `(reconstruction, concatenation)` defects.
    pub per_path: Vec<Vec<(f64, f64)>>,
}

/// Runs `cfg.paths` independent skew products per level, each from a
/// random start and its own driver stream, with the coarser drivers
/// obtained by summing the finest increments. Reports the mean over paths
/// of the sup defects, concatenating at the midpoint.
pub fn skew_study(dec: &Decomposition, cfg: &RefinementConfig) -> Result<SkewStudy> {
    skew_study_split(dec, cfg, 0.5)
}

/// [`skew_study`] with the concatenation split at `split * t_end`, rounded
/// to the grid of each level.
pub fn skew_study_split(dec: &Decomposition, cfg: &RefinementConfig, split: f64) -> Result<SkewStudy> {
    if !(0.0..=1.0).contains(&split) {
        return Err(Error::Config(format!("split fraction {split} outside [0, 1]")));
    }
    let bs = dec.bundle_system();
    let m = bs.system().noise_dim();
    let dts = crate::sde::dyadic_steps(cfg.dt_finest, cfg.levels);
    let per_path: Vec<Vec<(f64, f64)>> = dts
        .iter()
        .map(|dt| {
            let factor = (dt / cfg.dt_finest).round() as usize;
            (0..cfg.paths as u64)
                .into_par_iter()
                .map(|i| -> Result<(f64, f64)> {
                    let fine = sample_brownian(m, cfg.t_end, cfg.dt_finest, cfg.seed, i)?;
                    let path = fine.coarsen(factor)?;
                    let b0 = sample_start(bs, cfg.orthonormal_starts, &mut stream_rng(cfg.seed, START_STREAM + i));
                    let run = reconstruct_and_compare(dec, &b0, &path)?;
                    let conc = concatenation_check(dec, &run, &path, (split * path.steps() as f64).round() as usize)?;
                    Ok((run.sup_defect(), conc))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mean = |sel: fn(&(f64, f64)) -> f64| -> Vec<f64> {
        per_path.iter().map(|l| l.iter().map(sel).sum::<f64>() / l.len() as f64).collect()
    };
    Ok(SkewStudy {
        reconstruction: RefinementStudy::new(dts.clone(), mean(|p| p.0)),
        concatenation: RefinementStudy::new(dts, mean(|p| p.1)),
        per_path,
    })
}

/// Transport along the base of a path by `dv = DX(x)[v] Y(x) o dx`, the
/// parallel transport of the adjoint LeJan-Watanabe connection, stepped by
/// Heun on the realized base increments and projected to the tangent
/// space. Needs analytic field derivatives.
pub fn adjoint_transport_along(bs: &BundleSystem, base_path: &[DVector<f64>], v0: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
    let base = bs.base();
    let m = base.manifold();
    let rhs = |x: &DVector<f64>, v: &DMatrix<f64>, dx: &DVector<f64>| -> Result<DMatrix<f64>> {
        let c = base.y_matrix(x) * dx;
        let mut out = DMatrix::zeros(v.nrows(), v.ncols());
        for i in 0..v.ncols() {
            let d = base
                .fields()
                .derivative(x, &v.column(i).into_owned())
                .ok_or_else(|| Error::Config("transport needs analytic field derivatives".into()))?;
            out.set_column(i, &(d * &c));
        }
        Ok(out)
    };
    let mut v = v0.clone();
    let mut out = vec![v.clone()];
    for w in base_path.windows(2) {
        let dx = m.difference(&w[1], &w[0]);
        let k0 = rhs(&w[0], &v, &dx)?;
        let pred = m.projector(&w[1]) * (&v + &k0);
        let k1 = rhs(&w[1], &pred, &dx)?;
        v = m.projector(&w[1]) * (&v + (k0 + k1) * 0.5);
        out.push(v.clone());
    }
    Ok(out)
}

/// Monte Carlo comparison of `E[phi~(u_t)] - phi~(u_0)` with
/// `t (B phi~)(u_0)` for a lifted one-form.
#[derive(Clone, Debug)]
pub struct SmallTimeReport {
    pub t: f64,
    pub increment: Summary,
    /// `t (A^H phi~ + B^V phi~)(u_0)`, with `B^V` from the vertical
    /// coefficients.
    pub predicted: f64,
    /// `t (B phi~)(u_0)` from the generator on `P` directly.
    pub predicted_direct: f64,
    /// Vertical part alone, `t B^V phi~(u_0)`.
    pub vertical: f64,
    /// `t^2 / 2 |B^2 phi~(u_0)|`.
    pub second_order: f64,
}

impl SmallTimeReport {
    pub fn deviation(&self) -> f64 {
        (self.increment.mean - self.predicted).abs()
    }

    /// `3 SE + t^2/2 |B^2 phi~|`.
    pub fn tolerance(&self) -> f64 {
        3.0 * self.increment.standard_error + self.second_order
    }

    pub fn passes(&self) -> bool {
        self.deviation() <= self.tolerance()
    }
}

/// Runs `n` derivative-flow paths of length `t` (step `dt`) from `u0` with
/// streams `0..n` of `seed`. Errors with `InsufficientSamples` when the
/// standard error exceeds a nonzero predicted signal.
#[allow(clippy::too_many_arguments)]
pub fn small_time_generator_check(
    dec: &Decomposition,
    phi: &OneFormRef,
    xi: &DVector<f64>,
    u0: &DVector<f64>,
    t: f64,
    dt: f64,
    n: usize,
    seed: u64,
) -> Result<SmallTimeReport> {
    let bs = dec.bundle_system();
    let bundle = bs.bundle();
    let f = FrameOneForm { phi: phi.clone(), xi: xi.clone(), bundle: bundle.clone() };
    let f0 = f.value(u0);
    let m = bs.system().noise_dim();
    let samples: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let path = sample_brownian(m, t, dt, seed, i)?;
            let out = integrate_stratonovich(bs.system(), u0, &path)?;
            Ok(f.value(out.last()) - f0)
        })
        .collect::<Result<_>>()?;
    let increment = stats::summarize(&samples).ok_or_else(|| Error::Config("need at least two paths".into()))?;

    let x = bundle.project(u0);
    let frame = bundle.fibre_matrix(u0);
    let action = dec.coeffs(u0)?.action_matrix(bs.group().basis());
    let vertical = t * phi.eval(&x, &(&frame * (&action * xi)));
    let predicted = t * dec.apply_horizontal(&f, u0)? + vertical;
    let predicted_direct = t * bs.system().apply(&f, u0)?;
    let bf = FnScalar(|u: &DVector<f64>| bs.system().apply(&f, u).unwrap_or(f64::NAN));
    let b2 = bs.system().apply(&bf, u0)?;
    let report = SmallTimeReport { t, increment, predicted, predicted_direct, vertical, second_order: 0.5 * t * t * b2.abs() };
    if predicted.abs() > 1e-12 && increment.standard_error > predicted.abs() {
        return Err(Error::InsufficientSamples { standard_error: increment.standard_error, signal: predicted.abs() });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::bundle::{decompose, Completion, FrameBundle};
    use crate::geometry::manifold::{ManifoldPoint, ManifoldRef};
    use crate::geometry::spaces::{FlatTorus, Sphere};
    use crate::systems;

    fn frame(m: ManifoldRef, x: &[f64], cols: DMatrix<f64>) -> Frame {
        Frame::new(ManifoldPoint::new(m, DVector::from_column_slice(x)).unwrap(), cols).unwrap()
    }

    fn s2_start() -> (DVector<f64>, DMatrix<f64>) {
        let x = DVector::from_column_slice(&[0.0, 0.6, 0.8]);
        let f = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.8, -0.6]);
        (x, f)
    }

    #[test]
    fn flat_torus_frames_are_constant() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let bs = systems::torus_frames(&mut rng).unwrap();
        let fr = frame(FlatTorus::shared(2), &[0.5, 1.0], DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 2.0]));
        let path = sample_brownian(2, 0.5, 1e-2, 1, 0).unwrap();
        let out = derivative_flow(&bs, &fr, &path).unwrap();
        for u in &out.points {
            assert!((bs.bundle().fibre_matrix(u) - fr.columns()).amax() < 1e-14);
        }
    }

    #[test]
    fn noiseless_derivative_flow_is_the_flow_jacobian() {
        // the rotation drift on S^1 has flow Jacobian R(r t)
        let rate = 0.7;
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let bs = FrameBundle::shared(Sphere::shared(2)).derivative_flow(&systems::s1_rank1(rate), &mut rng).unwrap();
        let a = 0.3f64;
        let fr = frame(Sphere::shared(2), &[a.cos(), a.sin()], DMatrix::from_column_slice(2, 1, &[-2.0 * a.sin(), 2.0 * a.cos()]));
        let quiet = BrownianPath::from_increments(1e-3, vec![DVector::zeros(2); 1000]);
        let out = derivative_flow(&bs, &fr, &quiet).unwrap();
        let b = a + rate;
        let want = DMatrix::from_column_slice(2, 1, &[-2.0 * b.sin(), 2.0 * b.cos()]);
        assert!((bs.bundle().fibre_matrix(out.last()) - want).amax() < 1e-6);
    }

    #[test]
    fn killing_frames_stay_orthonormal_to_first_order() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let bs = systems::s2_killing_frames(&mut rng).unwrap();
        let (x, f) = s2_start();
        let fr = frame(Sphere::shared(3), x.as_slice(), f);
        let mut defects = Vec::new();
        for dt in [4e-3, 1e-3] {
            let path = sample_brownian(3, 0.4, 1e-3, 3, 0).unwrap().coarsen((dt / 1e-3_f64).round() as usize).unwrap();
            let d = isometry_defect(&bs, &derivative_flow(&bs, &fr, &path).unwrap());
            assert!(d < 10.0 * dt, "{d} at {dt}");
            defects.push(d);
        }
        assert!(defects[1] < defects[0]);
    }

    #[test]
    fn degenerate_start_frames_are_rejected() {
        let (x, _) = s2_start();
        let m: ManifoldRef = Sphere::shared(3);
        let cols = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.8e-6, -0.6e-6]);
        assert!(matches!(Frame::new(ManifoldPoint::new(m, x).unwrap(), cols), Err(Error::FrameDegenerate { .. })));
    }

    #[test]
    fn pure_base_motion_has_trivial_group_path() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let bs = systems::trivial_bundle_so2_with(0.0, 0.0, 0.0, &mut rng).unwrap();
        let dec = decompose(&bs, Completion::Transport, &mut rng).unwrap();
        let b0 = sample_start(&bs, true, &mut rng);
        let path = sample_brownian(2, 0.4, 1e-3, 5, 0).unwrap();
        let run = reconstruct_and_compare(&dec, &b0, &path).unwrap();
        let id = DMatrix::<f64>::identity(2, 2);
        assert!(run.group.elements.iter().all(|g| (g - &id).amax() < 1e-14));
        assert!(run.sup_defect() < 1e-12);
    }

    #[test]
    fn horizontal_part_is_constant_without_base_noise() {
        // coupling zero keeps the horizontal lift on the starting fibre point
        // up to the base coordinate; the fibre matrix never moves
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let bs = systems::trivial_bundle_so2_with(0.0, 1.0, 0.3, &mut rng).unwrap();
        let dec = decompose(&bs, Completion::Transport, &mut rng).unwrap();
        let b0 = sample_start(&bs, true, &mut rng);
        let path = sample_brownian(2, 0.4, 1e-3, 6, 0).unwrap();
        let run = reconstruct_and_compare(&dec, &b0, &path).unwrap();
        let f0 = bs.bundle().fibre_matrix(&b0);
        assert!(run.horizontal.points.iter().all(|y| (bs.bundle().fibre_matrix(y) - &f0).amax() < 1e-13));
        assert!(run.sup_defect() < 1e-3, "{}", run.sup_defect());
    }

    #[test]
    fn concatenation_is_exact_at_the_ends() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let bs = systems::trivial_bundle_so2(&mut rng).unwrap();
        let dec = decompose(&bs, Completion::Transport, &mut rng).unwrap();
        let b0 = sample_start(&bs, true, &mut rng);
        let path = sample_brownian(2, 0.2, 1e-3, 7, 0).unwrap();
        let run = reconstruct_and_compare(&dec, &b0, &path).unwrap();
        assert!(concatenation_check(&dec, &run, &path, 0).unwrap() < 1e-12);
        assert!(concatenation_check(&dec, &run, &path, path.steps()).unwrap() < 1e-14);
        assert!(concatenation_check(&dec, &run, &path, path.steps() + 1).is_err());
    }

    #[test]
    fn killing_lift_is_adjoint_transport() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let bs = systems::s2_killing_frames(&mut rng).unwrap();
        let dec = decompose(&bs, Completion::Transport, &mut rng).unwrap();
        let (x, f) = s2_start();
        let u0 = bs.bundle().join(&x, &f);
        let dt = 1e-3;
        for stream in 0..3 {
            let path = sample_brownian(3, 0.4, dt, 8, stream).unwrap();
            let lift = horizontal_lift_path(&dec, &u0, &path).unwrap();
            let base: Vec<_> = lift.points.iter().map(|u| bs.bundle().project(u)).collect();
            let transported = adjoint_transport_along(&bs, &base, &f).unwrap();
            let worst = lift
                .points
                .iter()
                .zip(&transported)
                .map(|(u, v)| (bs.bundle().fibre_matrix(u) - v).norm())
                .fold(0.0, f64::max);
            assert!(worst <= 5.0 * dt, "{worst}");
        }
    }

    #[test]
    fn flat_torus_small_time_increment_is_unbiased() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let bs = systems::torus_frames(&mut rng).unwrap();
        let dec = decompose(&bs, Completion::Transport, &mut rng).unwrap();
        let u0 = bs.bundle().join(&DVector::from_column_slice(&[0.4, 1.1]), &DMatrix::identity(2, 2));
        let xi = DVector::from_column_slice(&[0.3, 1.0]);
        let forms = systems::torus_test_one_forms();
        let constant = small_time_generator_check(&dec, &forms[0], &xi, &u0, 0.01, 1e-3, 200, 9).unwrap();
        assert_eq!(constant.increment.mean, 0.0);
        assert!(constant.passes() && constant.vertical == 0.0);
        let scaled = small_time_generator_check(&dec, &forms[2], &xi, &u0, 0.01, 1e-3, 4000, 9).unwrap();
        assert!(scaled.passes(), "{scaled:?}");
        assert!(scaled.vertical.abs() < 1e-12);
        assert!((scaled.predicted - scaled.predicted_direct).abs() < 1e-9);
    }

    #[test]
    fn skew_study_on_the_trivial_bundle_converges() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let bs = systems::trivial_bundle_so2(&mut rng).unwrap();
        let dec = decompose(&bs, Completion::Transport, &mut rng).unwrap();
        let cfg = RefinementConfig { t_end: 0.4, dt_finest: 1e-3, levels: 4, paths: 4, seed: 10, orthonormal_starts: true };
        let st = skew_study(&dec, &cfg).unwrap();
        assert!(st.reconstruction.passes(0.8), "{:?}", st.reconstruction);
        assert!(st.concatenation.passes(0.8), "{:?}", st.concatenation);
        assert_eq!(st.per_path.len(), 4);
    }
}
