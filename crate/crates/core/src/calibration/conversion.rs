use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use crate::bank::ConversionCoefficients;
use crate::irt::logistic;

use super::CalibrationError;

const SLOPE_MIN: f64 = 0.05;
const SLOPE_MAX: f64 = 5.0;
const GRID_STEPS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionFit {
    pub coefficients: ConversionCoefficients,
    /// Root mean squared residual, in words.
    pub rmse: f64,
    pub points: usize,
}

struct Sse<'a> {
    /// (difficulty, rank / cap)
    points: &'a [(f64, f64)],
}

impl Sse<'_> {
    fn eval(&self, slope: f64, midpoint: f64) -> f64 {
        self.points
            .iter()
            .map(|&(d, share)| {
                let r = share - logistic(slope * (d - midpoint));
                r * r
            })
            .sum()
    }
}

impl CostFunction for Sse<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        Ok(self.eval(p[0], p[1]))
    }
}

/// Least-squares fit of `rank ≈ cap / (1 + exp(-slope (d - midpoint)))` with
/// the default cap.
pub fn fit_conversion(ranked_items: &[(f64, f64)]) -> Result<ConversionFit, CalibrationError> {
    fit_conversion_with_cap(ranked_items, ConversionCoefficients::DEFAULT_CAP)
}

/// Least-squares fit of the conversion curve over `(rank, difficulty)` pairs
/// for a fixed cap. A coarse grid seeds a Nelder–Mead refinement.
pub fn fit_conversion_with_cap(ranked_items: &[(f64, f64)], cap: f64) -> Result<ConversionFit, CalibrationError> {
    if ranked_items.len() < 3 {
        return Err(CalibrationError::InvalidArgument(format!(
            "conversion fit needs at least 3 points, got {}",
            ranked_items.len()
        )));
    }
    if !(cap.is_finite() && cap > 0.0) {
        return Err(CalibrationError::InvalidArgument(format!("cap must be positive, got {cap}")));
    }
    if let Some(&(r, d)) = ranked_items.iter().find(|(r, d)| !(r.is_finite() && *r > 0.0 && d.is_finite())) {
        return Err(CalibrationError::InvalidArgument(format!(
            "ranks must be positive and difficulties finite, got ({r}, {d})"
        )));
    }
    let first = ranked_items[0].0;
    if ranked_items.iter().all(|p| p.0 == first) {
        return Err(CalibrationError::FitFailure("all ranks are identical".into()));
    }
    let points: Vec<(f64, f64)> = ranked_items.iter().map(|&(r, d)| (d, r / cap)).collect();
    let d_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let d_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if d_min == d_max {
        return Err(CalibrationError::FitFailure("all difficulties are identical".into()));
    }
    let problem = Sse { points: &points };

    let mut best = (f64::INFINITY, SLOPE_MIN, d_min);
    let ratio = (SLOPE_MAX / SLOPE_MIN).ln();
    for i in 0..GRID_STEPS {
        let slope = SLOPE_MIN * (ratio * i as f64 / (GRID_STEPS - 1) as f64).exp();
        for j in 0..GRID_STEPS {
            let mid = d_min + (d_max - d_min) * j as f64 / (GRID_STEPS - 1) as f64;
            let sse = problem.eval(slope, mid);
            if sse < best.0 {
                best = (sse, slope, mid);
            }
        }
    }
    let (_, s0, m0) = best;
    let simplex = vec![
        vec![s0, m0],
        vec![s0 * 1.1, m0],
        vec![s0, m0 + 0.05 * (d_max - d_min)],
    ];
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-15)
        .map_err(|e| CalibrationError::FitFailure(e.to_string()))?;
    let res = Executor::new(problem, solver)
        .configure(|s| s.max_iters(5000))
        .run()
        .map_err(|e| CalibrationError::FitFailure(e.to_string()))?;
    let state = res.state();
    let p = state
        .best_param
        .clone()
        .ok_or_else(|| CalibrationError::FitFailure("optimiser returned no parameters".into()))?;
    let (slope, midpoint) = (p[0], p[1]);
    if !(slope > SLOPE_MIN && slope < SLOPE_MAX) || !midpoint.is_finite() {
        return Err(CalibrationError::FitFailure(format!(
            "best fit at slope {slope:.4} lies outside ({SLOPE_MIN}, {SLOPE_MAX}); midpoint {midpoint:.4}"
        )));
    }
    let rmse = cap * (state.best_cost / points.len() as f64).sqrt();
    Ok(ConversionFit {
        coefficients: ConversionCoefficients { cap, slope, midpoint },
        rmse,
        points: points.len(),
    })
}
