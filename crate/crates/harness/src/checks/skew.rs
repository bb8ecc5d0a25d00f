//! Pathwise skew products, derivative flows and the small-time action of
//! the generator on lifted one-forms.

use eqdiff::bundle::Decomposition;
use eqdiff::frame_flow::{
    adjoint_transport_along, derivative_flow, horizontal_lift_path, isometry_defect, skew_study_split,
    small_time_generator_check, RefinementConfig,
};
use eqdiff::geometry::{Frame, ManifoldPoint};
use eqdiff::sde::sample_brownian;
use nalgebra::DVector;
use rayon::prelude::*;

use super::{decomposition, Group, Outcome, Suite};
use crate::error::Result;
use crate::report::Trace;
use crate::scenario::BundleKind;

/// Direction in `R^n` of the lifted one-forms; padded or truncated to `n`.
const SMALL_TIME_DIRECTION: [f64; 2] = [0.7, -0.4];
/// Driver streams of the per-path frame checks.
const FRAME_PATHS: u64 = 4;

pub(super) fn run(s: &mut Suite<'_>) {
    let mut rng = s.rng(Group::Skew);
    let cfg = s.cfg;
    let sc = cfg.scenario.clone();
    let dec = match decomposition(cfg, &mut rng) {
        Ok((_, dec)) => dec,
        Err(e) => {
            for id in ["skew.reconstruction-order", "skew.concatenation-order"] {
                s.fail(id, &e);
            }
            return;
        }
    };
    let rc = RefinementConfig {
        t_end: cfg.refinement_t_end(),
        dt_finest: cfg.dt,
        levels: cfg.levels,
        paths: cfg.paths,
        seed: cfg.seed,
        orthonormal_starts: true,
    };
    match skew_study_split(&dec, &rc, cfg.split) {
        Ok(st) => {
            let horizon = format!("T = {:.4}", rc.t_end);
            s.check("skew.reconstruction-order", |tol| Ok(Outcome::order(&st.reconstruction, tol).note(&horizon)));
            s.check("skew.concatenation-order", |tol| {
                Ok(Outcome::order(&st.concatenation, tol).note(&horizon).note(format!("split at {} T", cfg.split)))
            });
            let mut trace = Trace::new("skew_defects", &["dt", "path", "reconstruction", "concatenation"]);
            for (dt, level) in st.reconstruction.dts.iter().zip(&st.per_path) {
                for (i, (r, c)) in level.iter().enumerate() {
                    trace.rows.push(vec![*dt, i as f64, *r, *c]);
                }
            }
            s.trace(trace);
        }
        Err(e) => {
            let e = e.into();
            s.fail("skew.reconstruction-order", &e);
            s.fail("skew.concatenation-order", &e);
        }
    }

    if sc.bundle == Some(BundleKind::TrivialSo2) {
        s.skip("skew.adjoint-transport, skew.isometry", "the bundle is not a frame bundle");
        return;
    }
    let u0 = sc.start_frame();
    s.check("skew.adjoint-transport", |factor| {
        let worst = adjoint_transport(&dec, &u0, cfg.t_end, cfg.dt, cfg.seed)?;
        Ok(Outcome::new(worst, factor * cfg.dt).note(format!("{FRAME_PATHS} paths")))
    });
    if sc.isometric {
        s.check("skew.isometry", |factor| {
            let worst = isometry(&dec, &u0, cfg.t_end, cfg.dt, cfg.seed)?;
            Ok(Outcome::new(worst, factor * cfg.dt).note(format!("{FRAME_PATHS} paths")))
        });
    } else {
        s.skip("skew.isometry", "the derivative flow is not isometric");
    }
}

pub(super) fn run_small_time(s: &mut Suite<'_>) {
    let mut rng = s.rng(Group::SmallTime);
    let sc = s.cfg.scenario.clone();
    if sc.bundle == Some(BundleKind::TrivialSo2) {
        s.skip("skew.small-time", "the bundle is not a frame bundle");
        return;
    }
    match decomposition(s.cfg, &mut rng) {
        Ok((_, dec)) => small_time(s, &dec, &sc.start_frame()),
        Err(e) => s.fail("skew.small-time", &e),
    }
}

/// `sup_t |F_t - V_t|` between the fibre of the horizontal lift and the
/// adjoint transport of the starting frame along its base path, worst
/// over a few drivers.
fn adjoint_transport(dec: &Decomposition, u0: &DVector<f64>, t_end: f64, dt: f64, seed: u64) -> Result<f64> {
    let bs = dec.bundle_system();
    let bundle = bs.bundle();
    let f0 = bundle.fibre_matrix(u0);
    let m = bs.system().noise_dim();
    let per: Vec<f64> = (0..FRAME_PATHS)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let path = sample_brownian(m, t_end, dt, seed, i)?;
            let lift = horizontal_lift_path(dec, u0, &path)?;
            let base: Vec<_> = lift.points.iter().map(|u| bundle.project(u)).collect();
            let transported = adjoint_transport_along(bs, &base, &f0)?;
            Ok(lift
                .points
                .iter()
                .zip(&transported)
                .map(|(u, v)| (bundle.fibre_matrix(u) - v).norm())
                .fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().fold(0.0, f64::max))
}

fn isometry(dec: &Decomposition, u0: &DVector<f64>, t_end: f64, dt: f64, seed: u64) -> Result<f64> {
    let bs = dec.bundle_system();
    let bundle = bs.bundle();
    let base = ManifoldPoint::new(bundle.base().clone(), bundle.project(u0))?;
    let frame = Frame::new(base, bundle.fibre_matrix(u0))?;
    let m = bs.system().noise_dim();
    let per: Vec<f64> = (0..FRAME_PATHS)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let path = sample_brownian(m, t_end, dt, seed, i)?;
            Ok(isometry_defect(bs, &derivative_flow(bs, &frame, &path)?))
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().fold(0.0, f64::max))
}

/// One record per test one-form; the tolerance is the configured number of
/// standard errors plus the second-order budget `t^2/2 |B^2 phi~|`.
fn small_time(s: &mut Suite<'_>, dec: &Decomposition, u0: &DVector<f64>) {
    let cfg = s.cfg;
    let n = dec.bundle_system().group().n();
    let xi = DVector::from_fn(n, |i, _| SMALL_TIME_DIRECTION.get(i).copied().unwrap_or(0.3));
    let mut trace = Trace::new("small_time", &["form", "mean", "standard_error", "predicted", "predicted_direct", "vertical", "second_order"]);
    for (k, phi) in cfg.scenario.test_one_forms().iter().enumerate() {
        s.check("skew.small-time", |factor| {
            let r = small_time_generator_check(dec, phi, &xi, u0, cfg.small_time, cfg.dt, cfg.mc_paths, cfg.seed)?;
            trace.rows.push(vec![
                k as f64,
                r.increment.mean,
                r.increment.standard_error,
                r.predicted,
                r.predicted_direct,
                r.vertical,
                r.second_order,
            ]);
            let tol = factor * r.increment.standard_error + r.second_order;
            Ok(Outcome::new(r.deviation(), tol).note(format!(
                "form {k}: mean {:.4e}, predicted {:.4e}, SE {:.2e}, N = {}",
                r.increment.mean, r.predicted, r.increment.standard_error, cfg.mc_paths
            )))
        });
    }
    s.trace(trace);
}
