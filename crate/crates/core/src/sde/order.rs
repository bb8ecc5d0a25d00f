//! Refinement-order estimates from errors on dyadic grids.

use crate::error::{Error, Result};

/// Defects at or below this are rounding noise and carry no order
/// information.
pub const ROUNDING_FLOOR: f64 = 1e-10;

/// Least-squares slope of `log error` against `log dt`.
///
/// Needs at least three levels with positive errors that decrease with
/// `dt`; anything else is reported as unreliable.
pub fn convergence_order(dts: &[f64], errors: &[f64]) -> Result<f64> {
    if dts.len() != errors.len() || dts.len() < 3 {
        return Err(Error::OrderUnreliable(format!("{} levels given, need at least 3", dts.len())));
    }
    if errors.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::OrderUnreliable("non-positive or non-finite error".into()));
    }
    let mut idx: Vec<usize> = (0..dts.len()).collect();
    idx.sort_by(|&a, &b| dts[a].total_cmp(&dts[b]));
    if idx.windows(2).any(|w| errors[w[0]] > errors[w[1]]) {
        return Err(Error::OrderUnreliable(format!("errors {errors:?} are not monotone in dt {dts:?}")));
    }
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Errors at several step sizes together with the fitted order.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementStudy {
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    pub order: std::result::Result<f64, String>,
}

impl RefinementStudy {
    pub fn new(dts: Vec<f64>, errors: Vec<f64>) -> Self {
        let order = convergence_order(&dts, &errors).map_err(|e| e.to_string());
        Self { dts, errors, order }
    }

    /// Defects at rounding level on every grid.
    pub fn at_rounding(&self) -> bool {
        self.errors.iter().all(|e| *e <= ROUNDING_FLOOR)
    }

    /// Passes when every level is at rounding level, otherwise when the
    /// fitted order is at least `min_order`.
    pub fn passes(&self, min_order: f64) -> bool {
        self.at_rounding() || matches!(self.order, Ok(p) if p >= min_order)
    }

    pub fn finest_error(&self) -> f64 {
        let i = (0..self.dts.len()).min_by(|&a, &b| self.dts[a].total_cmp(&self.dts[b])).unwrap_or(0);
        self.errors.get(i).copied().unwrap_or(f64::NAN)
    }
}

/// `dt_finest * 2^l` for `l = levels-1, ..., 0`, coarse to fine.
pub fn dyadic_steps(dt_finest: f64, levels: usize) -> Vec<f64> {
    (0..levels).rev().map(|l| dt_finest * (1u64 << l) as f64).collect()
}
