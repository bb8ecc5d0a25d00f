//! Stochastic flows acting on finite point clouds: the flow `xi` of a
//! Hörmander system, the flow `theta` driven only by the noise seen at a
//! base point, the splitting of the driver into relevant and redundant
//! parts, and the frame-level homomorphism `theta -> T_{x_0} theta o u`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bundle::Decomposition;
use crate::error::{Error, Result};
use crate::geometry::spaces::wrapped_difference;
use crate::hormander::HormanderSystem;
use crate::linalg;
use crate::frame_flow::RefinementConfig;
use crate::sde::{integrate_ode, integrate_stratonovich, BrownianPath, PathSample, RefinementStudy, Sde};
use crate::stats;

/// Orthogonality drift of a transport above which it is re-orthonormalized.
pub const TRANSPORT_ORTHO_TOL: f64 = 1e-6;

/// Interpolation tolerance, as a fraction of the grid spacing, above which
/// a cloud is too sparse to invert.
pub const INTERPOLATION_LIMIT: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum CloudMode {
    Xi,
    Theta,
}

/// `J + 1` points of `M` stacked into one state; point 0 is `x_0`.
struct CloudSde<'a> {
    system: &'a HormanderSystem,
    points: usize,
    mode: CloudMode,
}

impl CloudSde<'_> {
    fn block(&self, x: &DVector<f64>, i: usize) -> DVector<f64> {
        let n = self.system.manifold().ambient_dim();
        x.rows(i * n, n).into_owned()
    }
}

impl Sde for CloudSde<'_> {
    fn ambient_dim(&self) -> usize {
        self.points * self.system.manifold().ambient_dim()
    }

    fn noise_dim(&self) -> usize {
        self.system.noise_dim()
    }

    fn diffusion(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.system.manifold().ambient_dim();
        let m = self.system.noise_dim();
        let mut out = DMatrix::zeros(self.ambient_dim(), m);
        let k_perp = match self.mode {
            CloudMode::Theta => Some(self.system.kernel_projection(&self.block(x, 0)).1),
            CloudMode::Xi => None,
        };
        for i in 0..self.points {
            let xm = self.system.x_matrix(&self.block(x, i));
            let b = match &k_perp {
                Some(k) => xm * k,
                None => xm,
            };
            out.view_mut((i * n, 0), (n, m)).copy_from(&b);
        }
        out
    }

    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.system.manifold().ambient_dim();
        let mut out = DVector::zeros(self.ambient_dim());
        let coef = match self.mode {
            CloudMode::Theta => {
                let x0 = self.block(x, 0);
                Some(self.system.y_matrix(&x0) * self.system.drift(&x0))
            }
            CloudMode::Xi => None,
        };
        for i in 0..self.points {
            let y = self.block(x, i);
            let a = match &coef {
                Some(c) => self.system.x_matrix(&y) * c,
                None => self.system.drift(&y),
            };
            out.rows_mut(i * n, n).copy_from(&a);
        }
        out
    }

    fn retract(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = x.clone();
        let n = self.system.manifold().ambient_dim();
        for i in 0..self.points {
            out.rows_mut(i * n, n).copy_from(&self.system.manifold().retract(&self.block(x, i))?);
        }
        Ok(out)
    }
}

/// Images of `x_0` and of tracked points `s_1..s_J` along a flow.
#[derive(Clone, Debug)]
pub struct PointCloudDiffeo {
    pub x0: DVector<f64>,
    pub sources: Vec<DVector<f64>>,
    /// Stacked states, `x_0` first.
    pub path: PathSample,
    ambient: usize,
}

impl PointCloudDiffeo {
    /// Image of tracked point `i` (0 is `x_0`, `i >= 1` is `s_i`) at step `k`.
    pub fn image(&self, k: usize, i: usize) -> DVector<f64> {
        self.path.points[k].rows(i * self.ambient, self.ambient).into_owned()
    }

    pub fn base_path(&self) -> Vec<DVector<f64>> {
        (0..self.path.points.len()).map(|k| self.image(k, 0)).collect()
    }

    pub fn final_images(&self) -> Vec<DVector<f64>> {
        let k = self.path.steps();
        (1..=self.sources.len()).map(|i| self.image(k, i)).collect()
    }
}

fn stack(x0: &DVector<f64>, cloud: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(x0.len() * (cloud.len() + 1), std::iter::once(x0).chain(cloud).flat_map(|p| p.iter().cloned()))
}

fn run_cloud(system: &HormanderSystem, x0: &DVector<f64>, cloud: &[DVector<f64>], path: &BrownianPath, mode: CloudMode) -> Result<PointCloudDiffeo> {
    let sde = CloudSde { system, points: cloud.len() + 1, mode };
    let out = crate::sde::integrate_inspected(&sde, &stack(x0, cloud), path, |_, _| Ok(()))?;
    Ok(PointCloudDiffeo { x0: x0.clone(), sources: cloud.to_vec(), path: out, ambient: x0.len() })
}

/// The flow `xi_t` of `dx = X(x) o dB + A(x) dt` on the cloud.
pub fn xi_flow(system: &HormanderSystem, x0: &DVector<f64>, cloud: &[DVector<f64>], path: &BrownianPath) -> Result<PointCloudDiffeo> {
    run_cloud(system, x0, cloud, path, CloudMode::Xi)
}

/// `d theta(x) = X(theta(x)) K_perp(theta(x_0)) o dB
/// + X(theta(x)) Y(theta(x_0)) A(theta(x_0)) dt`, all points in lockstep.
pub fn theta_flow(system: &HormanderSystem, x0: &DVector<f64>, cloud: &[DVector<f64>], path: &BrownianPath) -> Result<PointCloudDiffeo> {
    run_cloud(system, x0, cloud, path, CloudMode::Theta)
}

/// The driver split along a base path into relevant and redundant parts.
#[derive(Clone, Debug)]
pub struct NoiseSplit {
    /// Orthogonal transports `//_k` of the trivial `R^m` bundle.
    pub transports: Vec<DMatrix<f64>>,
    /// Increments `//_k^{-1} K_perp(x_k) dB_k`.
    pub relevant: BrownianPath,
    /// Increments `//_k^{-1} K(x_k) dB_k`.
    pub redundant: BrownianPath,
    /// Number of steps at which the transport was re-orthonormalized.
    pub reorthonormalized: usize,
}

/// Transports by the direct rotation taking `ker X(x_k)` onto
/// `ker X(x_{k+1})`, `//_{k+1} = polar(K_{k+1} K_k + K'_{k+1} K'_k) //_k`,
/// and splits the increments at the left end point of each step.
pub fn noise_split(system: &HormanderSystem, base_path: &[DVector<f64>], path: &BrownianPath) -> Result<NoiseSplit> {
    if base_path.len() != path.steps() + 1 {
        return Err(Error::Config("base path and driver have different grids".into()));
    }
    let m = system.noise_dim();
    let projections: Vec<_> = base_path.iter().map(|x| system.kernel_projection(x)).collect();
    let mut t = DMatrix::<f64>::identity(m, m);
    let mut transports = vec![t.clone()];
    let (mut rel, mut red) = (Vec::with_capacity(path.steps()), Vec::with_capacity(path.steps()));
    let mut reorthonormalized = 0;
    for k in 0..path.steps() {
        let (kk, kp) = &projections[k];
        let ti = t.transpose();
        rel.push(&ti * kp * path.increment(k));
        red.push(&ti * kk * path.increment(k));
        let (k1, kp1) = &projections[k + 1];
        t = linalg::polar(&(k1 * kk + kp1 * kp)) * &t;
        if (t.transpose() * &t - DMatrix::identity(m, m)).norm() > TRANSPORT_ORTHO_TOL {
            t = linalg::polar(&t);
            reorthonormalized += 1;
        }
        transports.push(t.clone());
    }
    Ok(NoiseSplit {
        transports,
        relevant: BrownianPath::from_increments(path.dt(), rel),
        redundant: BrownianPath::from_increments(path.dt(), red),
        reorthonormalized,
    })
}

impl NoiseSplit {
    /// `sup_k |B_k - sum_{j<k} //_j (d beta_j + dB~_j)|`.
    pub fn reconstruction_defect(&self, path: &BrownianPath) -> f64 {
        let mut acc = DVector::zeros(path.dim());
        let mut b = DVector::zeros(path.dim());
        let mut worst: f64 = 0.0;
        for k in 0..path.steps() {
            b += path.increment(k);
            acc += &self.transports[k] * (self.redundant.increment(k) + self.relevant.increment(k));
            worst = worst.max((&b - &acc).norm());
        }
        worst
    }

    pub fn orthogonality_defect(&self) -> f64 {
        self.transports
            .iter()
            .map(|t| (t.transpose() * t - DMatrix::identity(t.nrows(), t.ncols())).norm())
            .fold(0.0, f64::max)
    }

    /// `sup_k` distance between `//_k ker X(x_0)` and `ker X(x_k)`.
    pub fn kernel_defect(&self, system: &HormanderSystem, base_path: &[DVector<f64>]) -> f64 {
        let k0 = system.kernel_projection(&base_path[0]).0;
        let basis0 = linalg::column_basis(&k0, linalg::RANK_RTOL);
        if basis0.ncols() == 0 {
            return 0.0;
        }
        base_path
            .iter()
            .zip(&self.transports)
            .map(|(x, t)| {
                let kb = linalg::column_basis(&system.kernel_projection(x).0, linalg::RANK_RTOL);
                linalg::subspace_distance(&(t * &basis0), &kb)
            })
            .fold(0.0, f64::max)
    }
}

/// Coordinates of the relevant and redundant increments in fixed
/// orthonormal bases of `ker X(x_0)^perp` and `ker X(x_0)`.
pub fn split_coordinates(system: &HormanderSystem, x0: &DVector<f64>, split: &NoiseSplit) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let (k, kp) = system.kernel_projection(x0);
    let bk = linalg::column_basis(&k, linalg::RANK_RTOL);
    let bp = linalg::column_basis(&kp, linalg::RANK_RTOL);
    let rel = split.relevant.increments().iter().map(|d| bp.transpose() * d).collect();
    let red = split.redundant.increments().iter().map(|d| bk.transpose() * d).collect();
    (rel, red)
}

/// Pooled correlations between every relevant and every redundant
/// coordinate over a batch of splits.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitCorrelation {
    pub max_abs: f64,
    /// Pooled sample count.
    pub samples: usize,
}

impl SplitCorrelation {
    /// `3 / sqrt(K)`.
    pub fn threshold(&self) -> f64 {
        3.0 / (self.samples as f64).sqrt()
    }

    pub fn passes(&self) -> bool {
        self.max_abs < self.threshold()
    }
}

pub fn split_correlation(coords: &[(Vec<DVector<f64>>, Vec<DVector<f64>>)]) -> SplitCorrelation {
    let rel: Vec<&DVector<f64>> = coords.iter().flat_map(|c| c.0.iter()).collect();
    let red: Vec<&DVector<f64>> = coords.iter().flat_map(|c| c.1.iter()).collect();
    let (dr, db) = (rel.first().map_or(0, |v| v.len()), red.first().map_or(0, |v| v.len()));
    let mut max_abs: f64 = 0.0;
    for a in 0..dr {
        let xs: Vec<f64> = rel.iter().map(|v| v[a]).collect();
        for b in 0..db {
            let ys: Vec<f64> = red.iter().map(|v| v[b]).collect();
            max_abs = max_abs.max(stats::correlation(&xs, &ys).map_or(0.0, f64::abs));
        }
    }
    SplitCorrelation { max_abs, samples: rel.len() }
}

/// Correlation check over `paths` drivers (streams `0..paths` of `seed`)
/// of the system started at `x0`.
pub fn batch_split_correlation(system: &HormanderSystem, x0: &DVector<f64>, t_end: f64, dt: f64, paths: usize, seed: u64) -> Result<SplitCorrelation> {
    let coords = (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = crate::sde::sample_brownian(system.noise_dim(), t_end, dt, seed, i)?;
            let base = integrate_stratonovich(system, x0, &path)?;
            let split = noise_split(system, &base.points, &path)?;
            Ok(split_coordinates(system, x0, &split))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(split_correlation(&coords))
}

/// The frame-bundle process `(theta_t(x_0), T_{x_0} theta_t o u)`: fields
/// `(X(x) K_perp(x) e, DX(x)[u_i] K_perp(x) e)` and drift from `Y(x) A(x)`.
struct GlmSde<'a> {
    dec: &'a Decomposition,
}

impl GlmSde<'_> {
    fn parts(&self, p: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let bundle = self.dec.bundle_system().bundle();
        (bundle.project(p), bundle.fibre_matrix(p))
    }

    fn lift(&self, p: &DVector<f64>, c: &DVector<f64>) -> DVector<f64> {
        let base = self.dec.bundle_system().base();
        let (x, u) = self.parts(p);
        let top = base.fields().apply(&x, c);
        let mut cols = DMatrix::zeros(u.nrows(), u.ncols());
        for i in 0..u.ncols() {
            let d = base.fields().derivative(&x, &u.column(i).into_owned()).expect("frame bundle systems carry derivatives");
            cols.set_column(i, &(d * c));
        }
        self.dec.bundle_system().bundle().join(&top, &cols)
    }
}

impl Sde for GlmSde<'_> {
    fn ambient_dim(&self) -> usize {
        self.dec.bundle_system().bundle().total().ambient_dim()
    }

    fn noise_dim(&self) -> usize {
        self.dec.bundle_system().base().noise_dim()
    }

    fn diffusion(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let base = self.dec.bundle_system().base();
        let (x, _) = self.parts(p);
        let kp = base.kernel_projection(&x).1;
        let cols: Vec<DVector<f64>> = (0..kp.ncols()).map(|j| self.lift(p, &kp.column(j).into_owned())).collect();
        DMatrix::from_columns(&cols)
    }

    fn drift(&self, p: &DVector<f64>) -> DVector<f64> {
        let base = self.dec.bundle_system().base();
        let (x, _) = self.parts(p);
        self.lift(p, &(base.y_matrix(&x) * base.drift(&x)))
    }

    fn retract(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        self.dec.bundle_system().bundle().total().retract(p)
    }
}

/// `T_{x_0} theta_t o u_0` against the horizontal lift of the frame-bundle
/// decomposition under the same driver.
#[derive(Clone, Debug)]
pub struct GlmReport {
    pub glm: PathSample,
    pub lift: PathSample,
    pub defects: Vec<f64>,
}

impl GlmReport {
    pub fn sup_defect(&self) -> f64 {
        self.defects.iter().cloned().fold(0.0, f64::max)
    }
}

/// `dec` must decompose a derivative-flow generator on a frame bundle.
pub fn glm_homomorphism(dec: &Decomposition, u0: &DVector<f64>, path: &BrownianPath) -> Result<GlmReport> {
    let glm = integrate_stratonovich(&GlmSde { dec }, u0, path)?;
    let lift = crate::frame_flow::horizontal_lift_path(dec, u0, path)?;
    let total = dec.bundle_system().bundle().total();
    let defects = glm.points.iter().zip(&lift.points).map(|(a, b)| total.distance(a, b)).collect();
    Ok(GlmReport { glm, lift, defects })
}

/// Integrates `dy/dt = X(y) Y(sigma(t)) sigma'(t)` for `x_0 = sigma(0)` and
/// every cloud point; `sigma(t)` returns the point and the velocity.
pub fn horizontal_lift_ode(
    system: &HormanderSystem,
    sigma: &(dyn Fn(f64) -> (DVector<f64>, DVector<f64>) + Sync),
    cloud: &[DVector<f64>],
    t_end: f64,
    dt: f64,
) -> Result<PointCloudDiffeo> {
    let steps = crate::sde::grid_steps(t_end, dt)?;
    let (x0, _) = sigma(0.0);
    let n = x0.len();
    let points = cloud.len() + 1;
    let m = system.manifold();
    let f = |t: f64, state: &DVector<f64>| -> Result<DVector<f64>> {
        let (s, ds) = sigma(t);
        let c = system.y_map(&s, &ds)?;
        let mut out = DVector::zeros(state.len());
        for i in 0..points {
            let y = state.rows(i * n, n).into_owned();
            out.rows_mut(i * n, n).copy_from(&system.fields().apply(&y, &c));
        }
        Ok(out)
    };
    let r = |state: &DVector<f64>| -> Result<DVector<f64>> {
        let mut out = state.clone();
        for i in 0..points {
            out.rows_mut(i * n, n).copy_from(&m.retract(&state.rows(i * n, n).into_owned())?);
        }
        Ok(out)
    };
    let path = integrate_ode(&f, &r, &stack(&x0, cloud), 0.0, dt, steps)?;
    Ok(PointCloudDiffeo { x0, sources: cloud.to_vec(), path, ambient: n })
}

/// Dyadic refinement of the pathwise diffeo identities at a fixed base
/// point: `theta_t(x_0)` against `xi_t(x_0)`, the noise reconstruction and
/// the frame homomorphism against the horizontal lift.
#[derive(Clone, Debug)]
pub struct DiffeoStudy {
    pub lift: RefinementStudy,
    pub reconstruction: RefinementStudy,
    pub glm: RefinementStudy,
}

/// Means over `cfg.paths` drivers of the sup defects per level; coarse
/// drivers sum the finest increments. `u0` is a frame over `x0` in the
/// bundle of `dec`.
pub fn diffeo_study(system: &HormanderSystem, dec: &Decomposition, x0: &DVector<f64>, u0: &DVector<f64>, cfg: &RefinementConfig) -> Result<DiffeoStudy> {
    let m = system.manifold();
    let dts = crate::sde::dyadic_steps(cfg.dt_finest, cfg.levels);
    let levels: Vec<[f64; 3]> = dts
        .iter()
        .map(|dt| {
            let factor = (dt / cfg.dt_finest).round() as usize;
            let per: Vec<[f64; 3]> = (0..cfg.paths as u64)
                .into_par_iter()
                .map(|i| -> Result<[f64; 3]> {
                    let path = crate::sde::sample_brownian(system.noise_dim(), cfg.t_end, cfg.dt_finest, cfg.seed, i)?.coarsen(factor)?;
                    let xi = xi_flow(system, x0, &[], &path)?.base_path();
                    let theta = theta_flow(system, x0, &[], &path)?.base_path();
                    let lift = xi.iter().zip(&theta).map(|(a, b)| m.distance(a, b)).fold(0.0, f64::max);
                    let split = noise_split(system, &theta, &path)?;
                    let glm = glm_homomorphism(dec, u0, &path)?.sup_defect();
                    Ok([lift, split.reconstruction_defect(&path), glm])
                })
                .collect::<Result<_>>()?;
            Ok(std::array::from_fn(|c| per.iter().map(|p| p[c]).sum::<f64>() / per.len() as f64))
        })
        .collect::<Result<_>>()?;
    let col = |c: usize| RefinementStudy::new(dts.clone(), levels.iter().map(|l| l[c]).collect());
    Ok(DiffeoStudy { lift: col(0), reconstruction: col(1), glm: col(2) })
}

/// Angle charts in which a cloud is a regular periodic grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridChart {
    /// `S^1` in `R^2`, `J` points.
    Circle { points: usize },
    /// `T^2` in angle coordinates, `side x side` points.
    Torus { side: usize },
}

impl GridChart {
    fn dim(&self) -> usize {
        match self {
            GridChart::Circle { .. } => 1,
            GridChart::Torus { .. } => 2,
        }
    }

    fn side(&self) -> usize {
        match *self {
            GridChart::Circle { points } => points,
            GridChart::Torus { side } => side,
        }
    }

    pub fn size(&self) -> usize {
        self.side().pow(self.dim() as u32)
    }

    fn angles(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            GridChart::Circle { .. } => DVector::from_element(1, x[1].atan2(x[0])),
            GridChart::Torus { .. } => x.clone(),
        }
    }

    fn point(&self, a: &DVector<f64>) -> DVector<f64> {
        match self {
            GridChart::Circle { .. } => DVector::from_column_slice(&[a[0].cos(), a[0].sin()]),
            GridChart::Torus { .. } => a.map(crate::geometry::spaces::wrap_angle),
        }
    }

    fn step(&self) -> f64 {
        std::f64::consts::TAU / self.side() as f64
    }

    fn index(&self, multi: &[usize]) -> usize {
        let s = self.side();
        multi.iter().rev().fold(0, |acc, i| acc * s + (i % s))
    }

    /// The regular grid through `x0`, starting with `x0`.
    pub fn cloud(&self, x0: &DVector<f64>) -> Vec<DVector<f64>> {
        let a0 = self.angles(x0);
        let s = self.side();
        (0..self.size())
            .map(|flat| {
                let mut a = a0.clone();
                let mut r = flat;
                for d in 0..self.dim() {
                    a[d] += self.step() * (r % s) as f64;
                    r /= s;
                }
                self.point(&a)
            })
            .collect()
    }
}

/// Periodic piecewise-(bi)linear interpolant of the angle displacement of
/// a flow sampled on a [`GridChart`] grid.
struct GridMap {
    chart: GridChart,
    origin: DVector<f64>,
    displacement: Vec<DVector<f64>>,
}

impl GridMap {
    fn new(chart: GridChart, sources: &[DVector<f64>], images: &[DVector<f64>]) -> Self {
        let origin = chart.angles(&sources[0]);
        let displacement = sources
            .iter()
            .zip(images)
            .map(|(s, i)| {
                let (a, b) = (chart.angles(s), chart.angles(i));
                DVector::from_iterator(a.len(), (0..a.len()).map(|d| wrapped_difference(b[d], a[d])))
            })
            .collect();
        Self { chart, origin, displacement }
    }

    fn displacement_at(&self, a: &DVector<f64>) -> DVector<f64> {
        let h = self.chart.step();
        let dim = self.chart.dim();
        let mut base = vec![0usize; dim];
        let mut frac = vec![0.0; dim];
        for d in 0..dim {
            let r = (a[d] - self.origin[d]).rem_euclid(std::f64::consts::TAU) / h;
            base[d] = r.floor() as usize;
            frac[d] = r - r.floor();
        }
        let mut out = DVector::zeros(dim);
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut idx = base.clone();
            for d in 0..dim {
                if corner >> d & 1 == 1 {
                    w *= frac[d];
                    idx[d] += 1;
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            out += &self.displacement[self.chart.index(&idx)] * w;
        }
        out
    }

    fn apply(&self, a: &DVector<f64>) -> DVector<f64> {
        a + self.displacement_at(a)
    }

    /// `max` over axes and nodes of `|second difference| / 4`: twice the
    /// linear-interpolation bound `h^2 |f''| / 8`.
    fn interpolation_tolerance(&self) -> f64 {
        let s = self.chart.side();
        let dim = self.chart.dim();
        let mut worst: f64 = 0.0;
        for flat in 0..self.chart.size() {
            let mut multi = vec![0usize; dim];
            let mut r = flat;
            for m in multi.iter_mut() {
                *m = r % s;
                r /= s;
            }
            let mut total = 0.0;
            for d in 0..dim {
                let (mut lo, mut hi) = (multi.clone(), multi.clone());
                lo[d] = (multi[d] + s - 1) % s;
                hi[d] = multi[d] + 1;
                let second = &self.displacement[self.chart.index(&hi)] - &self.displacement[flat] * 2.0
                    + &self.displacement[self.chart.index(&lo)];
                total += second.amax();
            }
            worst = worst.max(total / 4.0);
        }
        worst
    }

    /// The interpolation tolerance, or `InverseGridInsufficient` when it
    /// exceeds [`INTERPOLATION_LIMIT`] grid spacings or the map folds a cell.
    fn admissible_tolerance(&self) -> Result<f64> {
        let tol = self.interpolation_tolerance();
        if tol > INTERPOLATION_LIMIT * self.chart.step() || !self.is_monotone() {
            return Err(Error::InverseGridInsufficient { residual: tol });
        }
        Ok(tol)
    }

    /// Every grid cell keeps positive extent along each axis under the map.
    fn is_monotone(&self) -> bool {
        let s = self.chart.side();
        let h = self.chart.step();
        (0..self.chart.size()).all(|flat| {
            let mut multi = vec![0usize; self.chart.dim()];
            let mut r = flat;
            for m in multi.iter_mut() {
                *m = r % s;
                r /= s;
            }
            (0..self.chart.dim()).all(|d| {
                let mut next = multi.clone();
                next[d] += 1;
                h + self.displacement[self.chart.index(&next)][d] - self.displacement[flat][d] > 0.0
            })
        })
    }

    /// Damped Newton iteration for `apply(a) = target` in angle space.
    fn invert(&self, target: &DVector<f64>) -> Result<DVector<f64>> {
        let dim = target.len();
        let wrap = |v: DVector<f64>| v.map(|c| wrapped_difference(c, 0.0));
        let mut a = target - self.displacement_at(target);
        let mut res = f64::INFINITY;
        for _ in 0..60 {
            let r = wrap(self.apply(&a) - target);
            res = r.amax();
            if res < 1e-13 {
                return Ok(a);
            }
            let h = 1e-7;
            let mut jac = DMatrix::zeros(dim, dim);
            for d in 0..dim {
                let mut e = DVector::zeros(dim);
                e[d] = h;
                jac.set_column(d, &(wrap(self.apply(&(&a + &e)) - self.apply(&(&a - &e))) / (2.0 * h)));
            }
            let step = jac.lu().solve(&r).ok_or(Error::InverseGridInsufficient { residual: res })?;
            let mut scale = 1.0;
            loop {
                let trial = &a - &step * scale;
                if wrap(self.apply(&trial) - target).amax() < res || scale < 1e-6 {
                    a = trial;
                    break;
                }
                scale *= 0.5;
            }
        }
        Err(Error::InverseGridInsufficient { residual: res })
    }
}

/// Outcome of the composite check `theta_t g_t = xi_t`.
#[derive(Clone, Debug)]
pub struct CompositeReport {
    /// (a) `sup_t dist(theta_t(x_0), xi_t(x_0))`.
    pub base_point: f64,
    /// (b) `sup_t` frame defect of the homomorphism against the horizontal
    /// lift, when a frame-bundle decomposition was given.
    pub frame: Option<f64>,
    /// (c) `max_x dist(theta_T(g_T(x)), xi_T(x))` with `g_T(x)` from the
    /// grid inverse of `theta_T`.
    pub fixed_point: f64,
    pub interpolation_tolerance: f64,
    /// `dist(g_T(x_0), x_0)`.
    pub fibre_identity: f64,
}

impl CompositeReport {
    /// The interpolation bound, floored at rounding level for maps the
    /// interpolant reproduces exactly.
    pub fn fixed_point_tolerance(&self) -> f64 {
        self.interpolation_tolerance.max(crate::sde::ROUNDING_FLOOR)
    }

    pub fn fixed_point_passes(&self) -> bool {
        self.fixed_point <= self.fixed_point_tolerance()
    }
}

/// Runs `xi` and `theta` on the chart grid through `x0`, recovers `g_T` at
/// every grid point by inverting the interpolated `theta_T`, and pushes the
/// recovered points through `theta` again.
pub fn composite_check(
    system: &HormanderSystem,
    chart: GridChart,
    x0: &DVector<f64>,
    path: &BrownianPath,
    frame: Option<(&Decomposition, &DVector<f64>)>,
) -> Result<CompositeReport> {
    let grid = chart.cloud(x0);
    let m = system.manifold();
    let xi = xi_flow(system, x0, &grid, path)?;
    let theta = theta_flow(system, x0, &grid, path)?;
    let base_point = xi
        .base_path()
        .iter()
        .zip(theta.base_path())
        .map(|(a, b)| m.distance(a, &b))
        .fold(0.0, f64::max);
    let frame = match frame {
        Some((dec, u0)) => Some(glm_homomorphism(dec, u0, path)?.sup_defect()),
        None => None,
    };

    let map = GridMap::new(chart, &grid, &theta.final_images());
    let interpolation_tolerance = map.admissible_tolerance()?;
    let targets = xi.final_images();
    let preimages: Vec<DVector<f64>> = targets
        .iter()
        .map(|t| map.invert(&chart.angles(t)).map(|a| chart.point(&a)))
        .collect::<Result<_>>()?;
    let fibre_identity = m.distance(&preimages[0], x0);
    let pushed = theta_flow(system, x0, &preimages, path)?.final_images();
    let fixed_point = pushed.iter().zip(&targets).map(|(a, b)| m.distance(a, b)).fold(0.0, f64::max);
    Ok(CompositeReport { base_point, frame, fixed_point, interpolation_tolerance, fibre_identity })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::bundle::{decompose, Completion, FrameBundle};
    use crate::geometry::spaces::Sphere;
    use crate::sde::sample_brownian;
    use crate::systems;

    fn circle_point(a: f64) -> DVector<f64> {
        DVector::from_column_slice(&[a.cos(), a.sin()])
    }

    #[test]
    fn flat_torus_theta_is_xi_and_split_is_trivial() {
        let sys = systems::torus_flat();
        let x0 = DVector::from_column_slice(&[0.3, 1.2]);
        let cloud = GridChart::Torus { side: 5 }.cloud(&x0);
        let path = sample_brownian(2, 0.2, 1e-2, 4, 0).unwrap();
        let xi = xi_flow(&sys, &x0, &cloud, &path).unwrap();
        let theta = theta_flow(&sys, &x0, &cloud, &path).unwrap();
        for (a, b) in xi.path.points.iter().zip(&theta.path.points) {
            assert!((a - b).amax() < 1e-13);
        }
        let split = noise_split(&sys, &xi.base_path(), &path).unwrap();
        assert!(split.redundant.increments().iter().all(|d| d.amax() < 1e-14));
        for k in 0..path.steps() {
            assert!((split.relevant.increment(k) - path.increment(k)).amax() < 1e-14);
        }
        assert!(split.transports.iter().all(|t| (t - DMatrix::identity(2, 2)).amax() < 1e-14));
    }

    #[test]
    fn rank_one_torus_split_separates_coordinates() {
        let sys = systems::torus_rank1();
        let x0 = DVector::from_column_slice(&[0.1, 0.2]);
        let path = sample_brownian(2, 0.2, 1e-2, 5, 0).unwrap();
        let base = xi_flow(&sys, &x0, &[], &path).unwrap().base_path();
        let split = noise_split(&sys, &base, &path).unwrap();
        for k in 0..path.steps() {
            let db = path.increment(k);
            assert!((split.relevant.increment(k) - DVector::from_column_slice(&[db[0], 0.0])).amax() < 1e-14);
            assert!((split.redundant.increment(k) - DVector::from_column_slice(&[0.0, db[1]])).amax() < 1e-14);
        }
        assert!(split.orthogonality_defect() < 1e-14);
    }

    #[test]
    fn sphere_split_reconstructs_and_transports_the_kernel() {
        let sys = systems::s2_gradient();
        let x0 = DVector::from_column_slice(&[0.0, 0.6, 0.8]);
        for stream in 0..4 {
            let path = sample_brownian(3, 0.5, 1e-3, 6, stream).unwrap();
            let xi = xi_flow(&sys, &x0, &[], &path).unwrap();
            let theta = theta_flow(&sys, &x0, &[], &path).unwrap();
            let gap = xi.base_path().iter().zip(theta.base_path()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(gap < 1e-12, "{gap}");
            let split = noise_split(&sys, &xi.base_path(), &path).unwrap();
            assert!(split.reconstruction_defect(&path) < 1e-12);
            assert!(split.orthogonality_defect() < 1e-8);
            assert!(split.kernel_defect(&sys, &xi.base_path()) < 1e-4);
            assert_eq!(split.reorthonormalized, 0);
        }
    }

    #[test]
    fn split_is_a_functional_of_the_base_path() {
        let sys = systems::s2_gradient();
        let x0 = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        let path = sample_brownian(3, 0.2, 1e-3, 7, 0).unwrap();
        let base = xi_flow(&sys, &x0, &[], &path).unwrap().base_path();
        let a = noise_split(&sys, &base, &path).unwrap();
        let b = noise_split(&sys, &base, &path).unwrap();
        assert_eq!(a.transports, b.transports);
    }

    #[test]
    fn correlation_statistic_flags_dependence() {
        let v = |x: f64| DVector::from_element(1, x);
        let xs: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64) - 50.0).collect();
        let same = vec![(xs.iter().map(|&x| v(x)).collect(), xs.iter().map(|&x| v(x)).collect())];
        assert!((split_correlation(&same).max_abs - 1.0).abs() < 1e-12);
        assert!(!split_correlation(&same).passes());
    }

    #[test]
    fn circle_split_is_uncorrelated() {
        let sys = systems::s1_rank1(0.7);
        let c = batch_split_correlation(&sys, &circle_point(0.4), 0.1, 1e-2, 200, 8).unwrap();
        assert_eq!(c.samples, 2000);
        assert!(c.passes(), "{c:?}");
    }

    #[test]
    fn circle_composite_check_recovers_the_fibre_flow() {
        let sys = systems::s1_rank1(0.7);
        let x0 = circle_point(0.4);
        let path = sample_brownian(2, 0.5, 1e-3, 9, 0).unwrap();
        let r = composite_check(&sys, GridChart::Circle { points: 256 }, &x0, &path, None).unwrap();
        assert!(r.base_point < 1e-12);
        assert!(r.fibre_identity < 1e-10);
        assert!(r.fixed_point_passes(), "{r:?}");
        assert!(r.interpolation_tolerance > 0.0);
    }

    #[test]
    fn torus_composite_check_is_trivial() {
        let sys = systems::torus_flat();
        let x0 = DVector::from_column_slice(&[0.5, 0.5]);
        let path = sample_brownian(2, 0.2, 1e-2, 10, 0).unwrap();
        let r = composite_check(&sys, GridChart::Torus { side: 12 }, &x0, &path, None).unwrap();
        assert!(r.base_point < 1e-13 && r.fixed_point < 1e-10 && r.fibre_identity < 1e-10, "{r:?}");
    }

    #[test]
    fn sparse_grids_are_rejected() {
        let chart = GridChart::Circle { points: 8 };
        let grid = chart.cloud(&circle_point(0.0));
        let warped = |amp: f64| -> Vec<DVector<f64>> {
            grid.iter().map(|p| {
                let a = p[1].atan2(p[0]);
                circle_point(a + amp * (3.0 * a).sin())
            }).collect()
        };
        assert!(GridMap::new(chart, &grid, &warped(0.02)).admissible_tolerance().is_ok());
        for amp in [0.4, 0.8] {
            let err = GridMap::new(chart, &grid, &warped(amp)).admissible_tolerance().unwrap_err();
            assert!(matches!(err, Error::InverseGridInsufficient { .. }));
        }
    }

    fn circle_frames() -> Decomposition {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let bs = FrameBundle::shared(Sphere::shared(2)).derivative_flow(&systems::s1_rank1(0.7), &mut rng).unwrap();
        decompose(&bs, Completion::Transport, &mut rng).unwrap()
    }

    #[test]
    fn glm_path_is_the_horizontal_lift() {
        let dec = circle_frames();
        let bundle = dec.bundle_system().bundle();
        let x0 = circle_point(0.4);
        let u0 = bundle.join(&x0, &DMatrix::from_column_slice(2, 1, &[-0.4f64.sin() * 1.5, 0.4f64.cos() * 1.5]));
        let path = sample_brownian(2, 0.4, 1e-3, 13, 0).unwrap();
        let r = glm_homomorphism(&dec, &u0, &path).unwrap();
        assert!(r.sup_defect() < 1e-10, "{}", r.sup_defect());

        let g = DMatrix::from_element(1, 1, -0.5);
        let ug = bundle.right_act(&u0, &g);
        let rg = glm_homomorphism(&dec, &ug, &path).unwrap();
        for (a, b) in r.glm.points.iter().zip(&rg.glm.points) {
            assert!((bundle.right_act(a, &g) - b).amax() < 1e-10);
        }
    }

    #[test]
    fn circle_study_is_at_rounding() {
        let dec = circle_frames();
        let x0 = circle_point(0.4);
        let u0 = dec.bundle_system().bundle().join(&x0, &DMatrix::from_column_slice(2, 1, &[-0.4f64.sin(), 0.4f64.cos()]));
        let cfg = RefinementConfig { t_end: 0.4, dt_finest: 1e-3, levels: 4, paths: 4, seed: 14, orthonormal_starts: true };
        let st = diffeo_study(&systems::s1_rank1(0.7), &dec, &x0, &u0, &cfg).unwrap();
        for s in [&st.lift, &st.reconstruction, &st.glm] {
            assert!(s.at_rounding() && s.passes(0.8), "{s:?}");
        }
    }

    #[test]
    fn lift_ode_is_identity_for_constant_curves() {
        let sys = systems::s1_rank1(0.7);
        let x0 = circle_point(1.0);
        let cloud = GridChart::Circle { points: 8 }.cloud(&x0);
        let sigma = move |_t: f64| (circle_point(1.0), DVector::zeros(2));
        let out = horizontal_lift_ode(&sys, &sigma, &cloud, 0.5, 1e-2).unwrap();
        for k in 0..=out.path.steps() {
            for (i, s) in cloud.iter().enumerate() {
                assert!((out.image(k, i + 1) - s).amax() < 1e-14);
            }
        }
    }

    #[test]
    fn lift_ode_translates_flat_clouds() {
        let sys = systems::torus_flat();
        let x0 = DVector::from_column_slice(&[0.2, 0.3]);
        let v = DVector::from_column_slice(&[0.5, -0.25]);
        let (xs, vs) = (x0.clone(), v.clone());
        let sigma = move |t: f64| ((&xs + &vs * t).map(crate::geometry::spaces::wrap_angle), vs.clone());
        let cloud = GridChart::Torus { side: 3 }.cloud(&x0);
        let out = horizontal_lift_ode(&sys, &sigma, &cloud, 1.0, 1e-2).unwrap();
        let m = sys.manifold();
        for (s, y) in cloud.iter().zip(out.final_images()) {
            assert!(m.distance(&y, &(s + &v).map(crate::geometry::spaces::wrap_angle)) < 1e-12);
        }
    }

    #[test]
    fn lift_ode_matches_noiseless_theta_flow() {
        let rate = 0.7;
        let sys = systems::s1_rank1(rate);
        let x0 = circle_point(0.4);
        let sigma = move |t: f64| {
            let a = 0.4 + rate * t;
            (circle_point(a), DVector::from_column_slice(&[-rate * a.sin(), rate * a.cos()]))
        };
        let cloud = GridChart::Circle { points: 16 }.cloud(&x0);
        let ode = horizontal_lift_ode(&sys, &sigma, &cloud, 0.5, 1e-3).unwrap();
        let quiet = BrownianPath::from_increments(1e-3, vec![DVector::zeros(2); 500]);
        let theta = theta_flow(&sys, &x0, &cloud, &quiet).unwrap();
        let gap = ode.path.points.iter().zip(&theta.path.points).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
        assert!(gap < 1e-5, "{gap}");
    }

    #[test]
    fn lift_ode_rejects_velocities_outside_the_image() {
        let sys = systems::torus_rank1();
        let sigma = |t: f64| (DVector::from_column_slice(&[0.0, t]), DVector::from_column_slice(&[0.0, 1.0]));
        let err = horizontal_lift_ode(&sys, &sigma, &[], 0.1, 1e-2).unwrap_err();
        match err {
            Error::Integration { step: 0, source } => assert!(matches!(*source, Error::Domain { .. })),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_inverse_inverts_a_smooth_circle_map() {
        let chart = GridChart::Circle { points: 256 };
        let x0 = circle_point(0.0);
        let grid = chart.cloud(&x0);
        let f = |a: f64| a + 0.3 * a.sin();
        let images: Vec<_> = grid.iter().map(|p| circle_point(f(p[1].atan2(p[0])))).collect();
        let map = GridMap::new(chart, &grid, &images);
        let target = DVector::from_element(1, f(1.234));
        let pre = map.invert(&target).unwrap();
        assert!(wrapped_difference(pre[0], 1.234).abs() < map.interpolation_tolerance());
    }
}
