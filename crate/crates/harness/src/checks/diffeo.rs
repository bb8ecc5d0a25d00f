//! Stochastic flows of point clouds: the lift of the base process, the
//! split of the driver into relevant and redundant noise, the frame
//! homomorphism and the composite identity on a grid.

use eqdiff::bundle::{decompose, Completion, Decomposition};
use eqdiff::diffeo::{batch_split_correlation, composite_check, diffeo_study, noise_split, CompositeReport, GridChart};
use eqdiff::frame_flow::RefinementConfig;
use eqdiff::sde::{integrate_stratonovich, sample_brownian, ROUNDING_FLOOR};
use nalgebra::DVector;
use rayon::prelude::*;

use super::{Group, Outcome, Suite};
use crate::error::Result;
use crate::report::Trace;

/// Driver streams of the per-path split and composite checks.
const SPLIT_PATHS: u64 = 4;
const COMPOSITE_PATHS: u64 = 3;

struct SplitDefects {
    reconstruction: f64,
    kernel: f64,
    orthogonality: f64,
    reorthonormalized: usize,
}

pub(super) fn run(s: &mut Suite<'_>) {
    let mut rng = s.rng(Group::Diffeo);
    let cfg = s.cfg;
    let sc = cfg.scenario.clone();
    let system = sc.base();
    let x0 = sc.x0();
    let u0 = sc.start_frame();

    match sc.frame_system(&mut rng).and_then(|bs| Ok(decompose(&bs, Completion::Transport, &mut rng)?)) {
        Ok(dec) => {
            let rc = RefinementConfig {
                t_end: cfg.refinement_t_end(),
                dt_finest: cfg.dt,
                levels: cfg.levels,
                paths: cfg.paths,
                seed: cfg.seed,
                orthonormal_starts: true,
            };
            match diffeo_study(&system, &dec, &x0, &u0, &rc) {
                Ok(st) => {
                    let horizon = format!("T = {:.4}", rc.t_end);
                    s.check("diffeo.lift-order", |tol| Ok(Outcome::order(&st.lift, tol).note(&horizon)));
                    s.check("diffeo.glm-order", |tol| Ok(Outcome::order(&st.glm, tol).note(&horizon)));
                    let mut trace = Trace::new("diffeo_levels", &["dt", "lift", "reconstruction", "glm"]);
                    for (k, dt) in st.lift.dts.iter().enumerate() {
                        trace.rows.push(vec![*dt, st.lift.errors[k], st.reconstruction.errors[k], st.glm.errors[k]]);
                    }
                    s.trace(trace);
                }
                Err(e) => {
                    let e = e.into();
                    s.fail("diffeo.lift-order", &e);
                    s.fail("diffeo.glm-order", &e);
                }
            }
            if let Some(chart) = sc.chart {
                composite(s, chart(cfg.cloud), Some((&dec, &u0)));
            } else {
                s.skip("diffeo.composite-fixed-point, diffeo.fibre-identity", "no chart with a regular grid");
            }
        }
        Err(e) => {
            s.fail("diffeo.lift-order", &e);
            s.fail("diffeo.glm-order", &e);
        }
    }

    let splits: Result<Vec<SplitDefects>> = (0..SPLIT_PATHS)
        .into_par_iter()
        .map(|i| {
            let path = sample_brownian(system.noise_dim(), cfg.t_end, cfg.dt, cfg.seed, i)?;
            let base = integrate_stratonovich(&system, &x0, &path)?;
            let split = noise_split(&system, &base.points, &path)?;
            Ok(SplitDefects {
                reconstruction: split.reconstruction_defect(&path),
                kernel: split.kernel_defect(&system, &base.points),
                orthogonality: split.orthogonality_defect(),
                reorthonormalized: split.reorthonormalized,
            })
        })
        .collect();
    match splits {
        Ok(d) => {
            let worst = |f: fn(&SplitDefects) -> f64| d.iter().map(f).fold(0.0, f64::max);
            let repaired: usize = d.iter().map(|p| p.reorthonormalized).sum();
            let note = format!("{SPLIT_PATHS} paths, {repaired} re-orthonormalizations");
            s.check("diffeo.noise-reconstruction", |factor| {
                Ok(Outcome::new(worst(|p| p.reconstruction), factor * cfg.dt).note(note.clone()))
            });
            s.check("diffeo.kernel-transport", |tol| Ok(Outcome::new(worst(|p| p.kernel), tol).note(note.clone())));
            s.check("diffeo.transport-orthogonality", |tol| Ok(Outcome::new(worst(|p| p.orthogonality), tol).note(note.clone())));
        }
        Err(e) => {
            for id in ["diffeo.noise-reconstruction", "diffeo.kernel-transport", "diffeo.transport-orthogonality"] {
                s.fail(id, &e);
            }
        }
    }

    s.check("diffeo.split-correlation", |factor| {
        let c = batch_split_correlation(&system, &x0, cfg.t_end, cfg.dt, cfg.correlation_paths, cfg.seed)?;
        Ok(Outcome::new(c.max_abs, factor / (c.samples as f64).sqrt())
            .note(format!("{} paths, K = {} pooled increments", cfg.correlation_paths, c.samples))
            .note(if system.rank() == system.noise_dim() { "ker X = 0, no redundant noise" } else { "" }))
    });
}

fn composite(s: &mut Suite<'_>, chart: GridChart, frame: Option<(&Decomposition, &DVector<f64>)>) {
    let cfg = s.cfg;
    let system = cfg.scenario.base();
    let x0 = cfg.scenario.x0();
    let reports: Result<Vec<CompositeReport>> = (0..COMPOSITE_PATHS)
        .map(|i| {
            let path = sample_brownian(system.noise_dim(), cfg.t_end, cfg.dt, cfg.seed, i)?;
            Ok(composite_check(&system, chart, &x0, &path, frame)?)
        })
        .collect();
    let reports = match reports {
        Ok(r) => r,
        Err(e) => {
            s.fail("diffeo.composite-fixed-point", &e);
            s.fail("diffeo.fibre-identity", &e);
            return;
        }
    };
    let mut trace = Trace::new("composite", &["path", "fixed_point", "interpolation_tolerance", "base_point", "frame", "fibre_identity"]);
    for (i, r) in reports.iter().enumerate() {
        trace.rows.push(vec![i as f64, r.fixed_point, r.interpolation_tolerance, r.base_point, r.frame.unwrap_or(f64::NAN), r.fibre_identity]);
        s.check("diffeo.composite-fixed-point", |factor| {
            Ok(Outcome::new(r.fixed_point, (factor * r.interpolation_tolerance).max(ROUNDING_FLOOR)).note(format!(
                "path {i}, J = {}, base point {:.1e}, frame {}",
                chart.size(),
                r.base_point,
                r.frame.map_or("n/a".to_string(), |f| format!("{f:.1e}"))
            )))
        });
    }
    s.check("diffeo.fibre-identity", |tol| {
        Ok(Outcome::new(reports.iter().map(|r| r.fibre_identity).fold(0.0, f64::max), tol).note(format!("{COMPOSITE_PATHS} paths")))
    });
    s.trace(trace);
}
