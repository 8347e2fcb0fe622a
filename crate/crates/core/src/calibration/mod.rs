//! Offline Rasch calibration: marginal maximum likelihood by EM, residual fit
//! statistics, pruning, separation reliability, conversion-curve fitting and
//! plotting exports.

mod conversion;
mod export;
mod fit;
mod matrix;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::irt::{estimate_ability_on, log_prob_clamped, prob, Ability, Prior, QuadratureGrid, ScoredResponse};

pub use conversion::{fit_conversion, fit_conversion_with_cap, ConversionFit};
pub use export::{export_item_curve, export_wright_map, write_curve_csv, write_item_table, CurvePoint, WrightMap};
pub use fit::{fit_statistics, prune_items, separation_reliability, strata, FitStatistics, PruneReport, RemovedItem};
pub use matrix::{matrix_from_sessions, trusted_scores, ResponseMatrix};

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no convergence after {iterations} iterations (last change {last_change:.3e})")]
    NotConverged {
        iterations: usize,
        last_change: f64,
        last: Box<CalibrationResult>,
    },
    #[error("conversion fit failed: {0}")]
    FitFailure(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    pub max_iterations: usize,
    /// Convergence when the largest difficulty change falls below this.
    pub tolerance: f64,
    /// Estimate the latent standard deviation alongside the difficulties.
    /// When false the latent distribution stays standard normal.
    pub estimate_latent_sd: bool,
    pub grid: QuadratureGrid,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            max_iterations: 1000,
            tolerance: 1e-4,
            estimate_latent_sd: true,
            grid: QuadratureGrid::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemEstimate {
    pub difficulty: f64,
    pub se: f64,
}

/// Why a row or column was left out of estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extreme {
    AllCorrect,
    AllIncorrect,
    /// Every observation fell on extreme counterparts.
    NoData,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SideSummary {
    pub count: usize,
    pub location_mean: f64,
    pub location_sd: f64,
    pub mean_infit: f64,
    pub mean_outfit: f64,
    pub mean_infit_z: f64,
    pub mean_outfit_z: f64,
    pub reliability: f64,
    pub strata: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub items: SideSummary,
    pub persons: SideSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub item_difficulties: BTreeMap<String, ItemEstimate>,
    pub extreme_items: BTreeMap<String, Extreme>,
    /// EAP scores for every person, extreme ones included.
    pub person_abilities: BTreeMap<String, Ability>,
    pub extreme_persons: BTreeMap<String, Extreme>,
    pub item_fit: BTreeMap<String, FitStatistics>,
    pub person_fit: BTreeMap<String, FitStatistics>,
    pub summary: CalibrationSummary,
    pub latent_sd: f64,
    pub iterations: usize,
    /// Marginal log-likelihood at the final E-step.
    pub log_likelihood: f64,
    pub converged: bool,
}

impl CalibrationResult {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration result serialises")
    }

    pub fn from_json_str(s: &str) -> Result<Self, CalibrationError> {
        serde_json::from_str(s).map_err(|e| CalibrationError::InvalidInput(e.to_string()))
    }
}

/// Iteratively flags all-correct, all-incorrect and empty rows and columns
/// until none remain among the non-extreme part.
fn find_extremes(m: &ResponseMatrix) -> (Vec<Option<Extreme>>, Vec<Option<Extreme>>) {
    let classify = |n: usize, r: usize| match (n, r) {
        (0, _) => Some(Extreme::NoData),
        (n, 0) if n > 0 => Some(Extreme::AllIncorrect),
        (n, r) if r == n => Some(Extreme::AllCorrect),
        _ => None,
    };
    let mut items: Vec<Option<Extreme>> = vec![None; m.items().len()];
    let mut persons: Vec<Option<Extreme>> = vec![None; m.persons().len()];
    loop {
        let mut changed = false;
        let mut counts = vec![(0usize, 0usize); items.len()];
        for (p, i, x) in m.cells() {
            if persons[p].is_none() {
                counts[i].0 += 1;
                counts[i].1 += usize::from(x);
            }
        }
        for (slot, &(n, r)) in items.iter_mut().zip(&counts) {
            if slot.is_none() {
                if let Some(e) = classify(n, r) {
                    *slot = Some(e);
                    changed = true;
                }
            }
        }
        for (p, slot) in persons.iter_mut().enumerate() {
            if slot.is_some() {
                continue;
            }
            let (n, r) = m
                .row(p)
                .iter()
                .filter(|(i, _)| items[*i].is_none())
                .fold((0, 0), |(n, r), &(_, x)| (n + 1, r + usize::from(x)));
            if let Some(e) = classify(n, r) {
                *slot = Some(e);
                changed = true;
            }
        }
        if !changed {
            return (items, persons);
        }
    }
}

/// Posterior weights over the grid for one response row, normalised, plus the
/// row's marginal log-likelihood.
fn row_posterior(row: &[(usize, bool)], log_p: &[Vec<f64>], log_q: &[Vec<f64>], log_prior: &[f64]) -> (Vec<f64>, f64) {
    let mut lp = log_prior.to_vec();
    for &(j, x) in row {
        let table = if x { &log_p[j] } else { &log_q[j] };
        for (acc, v) in lp.iter_mut().zip(table) {
            *acc += v;
        }
    }
    let peak = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut post: Vec<f64> = lp.iter().map(|v| (v - peak).exp()).collect();
    let mass: f64 = post.iter().sum();
    for v in &mut post {
        *v /= mass;
    }
    (post, peak + mass.ln())
}

/// Maximises one item's expected complete-data log-likelihood by Newton steps.
fn m_step_item(b0: f64, nodes: &[f64], n: &[f64], r: &[f64]) -> f64 {
    let mut b = b0;
    for _ in 0..50 {
        let (mut grad, mut hess) = (0.0, 0.0);
        for ((&t, &nq), &rq) in nodes.iter().zip(n).zip(r) {
            let p = prob(t, b);
            grad += nq * p - rq;
            hess += nq * p * (1.0 - p);
        }
        if hess <= 0.0 {
            break;
        }
        let step = (grad / hess).clamp(-1.0, 1.0);
        b += step;
        if step.abs() < 1e-12 {
            break;
        }
    }
    b
}

struct EmState {
    /// Difficulties of the estimated items, in active order.
    b: Vec<f64>,
    sd: f64,
    iterations: usize,
    last_change: f64,
    log_likelihood: f64,
    /// Expected counts at each node per estimated item, from the last E-step.
    expected_n: Vec<Vec<f64>>,
    converged: bool,
}

fn run_em(
    rows: &[Vec<(usize, bool)>],
    init: Vec<f64>,
    options: &CalibrationOptions,
) -> EmState {
    let nodes = options.grid.nodes();
    let n_items = init.len();
    let mut state = EmState {
        b: init,
        sd: 1.0,
        iterations: 0,
        last_change: f64::INFINITY,
        log_likelihood: f64::NEG_INFINITY,
        expected_n: vec![vec![0.0; nodes.len()]; n_items],
        converged: false,
    };
    while state.iterations < options.max_iterations {
        state.iterations += 1;
        let prior = Prior { mean: 0.0, sd: state.sd };
        let log_prior: Vec<f64> = options.grid.normal_weights(&prior).iter().map(|w| w.ln()).collect();
        let log_p: Vec<Vec<f64>> = state
            .b
            .iter()
            .map(|&b| nodes.iter().map(|&t| log_prob_clamped(t, b, true)).collect())
            .collect();
        let log_q: Vec<Vec<f64>> = state
            .b
            .iter()
            .map(|&b| nodes.iter().map(|&t| log_prob_clamped(t, b, false)).collect())
            .collect();

        let posteriors: Vec<(Vec<f64>, f64)> = rows
            .par_iter()
            .map(|row| row_posterior(row, &log_p, &log_q, &log_prior))
            .collect();

        let mut n = vec![vec![0.0; nodes.len()]; n_items];
        let mut r = vec![vec![0.0; nodes.len()]; n_items];
        let mut second_moment = 0.0;
        let mut ll = 0.0;
        for (row, (post, row_ll)) in rows.iter().zip(&posteriors) {
            ll += row_ll;
            second_moment += post.iter().zip(nodes).map(|(w, t)| w * t * t).sum::<f64>();
            for &(j, x) in row {
                for (q, w) in post.iter().enumerate() {
                    n[j][q] += w;
                    if x {
                        r[j][q] += w;
                    }
                }
            }
        }
        state.log_likelihood = ll;

        let new_b: Vec<f64> = state
            .b
            .par_iter()
            .zip(n.par_iter().zip(r.par_iter()))
            .map(|(&b, (nj, rj))| m_step_item(b, nodes, nj, rj))
            .collect();
        let mut change = new_b
            .iter()
            .zip(&state.b)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if options.estimate_latent_sd && !rows.is_empty() {
            let sd = (second_moment / rows.len() as f64).sqrt().max(1e-3);
            change = change.max((sd - state.sd).abs());
            state.sd = sd;
        }
        state.b = new_b;
        state.expected_n = n;
        state.last_change = change;
        if change < options.tolerance {
            state.converged = true;
            break;
        }
    }
    state
}

/// Marginal maximum-likelihood Rasch calibration.
///
/// Extreme rows and columns are removed first (repeatedly, since removing one
/// can make another extreme), reported in the result and never estimated.
/// Extreme persons still receive EAP scores from the fitted items.
pub fn calibrate(matrix: &ResponseMatrix, options: &CalibrationOptions) -> Result<CalibrationResult, CalibrationError> {
    if !(options.tolerance > 0.0) || options.max_iterations == 0 {
        return Err(CalibrationError::InvalidArgument(
            "tolerance must be positive and max_iterations at least 1".into(),
        ));
    }
    let (item_ext, person_ext) = find_extremes(matrix);
    let active_items: Vec<usize> = (0..item_ext.len()).filter(|&i| item_ext[i].is_none()).collect();
    let mut pos = vec![usize::MAX; item_ext.len()];
    for (k, &i) in active_items.iter().enumerate() {
        pos[i] = k;
    }
    let rows: Vec<Vec<(usize, bool)>> = (0..person_ext.len())
        .filter(|&p| person_ext[p].is_none())
        .map(|p| {
            matrix
                .row(p)
                .iter()
                .filter(|(i, _)| item_ext[*i].is_none())
                .map(|&(i, x)| (pos[i], x))
                .collect()
        })
        .collect();

    let mut counts = vec![(0.0f64, 0.0f64); active_items.len()];
    for row in &rows {
        for &(j, x) in row {
            counts[j].0 += 1.0;
            counts[j].1 += f64::from(u8::from(x));
        }
    }
    let init: Vec<f64> = counts.iter().map(|&(n, r)| ((n - r) / r).ln()).collect();

    let em = run_em(&rows, init, options);

    let mut item_difficulties = BTreeMap::new();
    for (k, &i) in active_items.iter().enumerate() {
        let b = em.b[k];
        let info: f64 = options
            .grid
            .nodes()
            .iter()
            .zip(&em.expected_n[k])
            .map(|(&t, &nq)| {
                let p = prob(t, b);
                nq * p * (1.0 - p)
            })
            .sum();
        item_difficulties.insert(
            matrix.items()[i].clone(),
            ItemEstimate { difficulty: b, se: 1.0 / info.sqrt() },
        );
    }
    let extreme_items: BTreeMap<String, Extreme> = item_ext
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.map(|e| (matrix.items()[i].clone(), e)))
        .collect();
    let extreme_persons: BTreeMap<String, Extreme> = person_ext
        .iter()
        .enumerate()
        .filter_map(|(p, e)| e.map(|e| (matrix.persons()[p].clone(), e)))
        .collect();

    let prior = Prior { mean: 0.0, sd: em.sd };
    let person_abilities: BTreeMap<String, Ability> = (0..matrix.persons().len())
        .into_par_iter()
        .map(|p| {
            let responses: Vec<ScoredResponse> = matrix
                .row(p)
                .iter()
                .filter(|(i, _)| item_ext[*i].is_none())
                .map(|&(i, x)| ScoredResponse::new(em.b[pos[i]], x))
                .collect();
            (p, estimate_ability_on(&responses, &prior, &options.grid))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .map(|(p, a)| (matrix.persons()[p].clone(), a))
        .collect();

    let mut result = CalibrationResult {
        item_difficulties,
        extreme_items,
        person_abilities,
        extreme_persons,
        item_fit: BTreeMap::new(),
        person_fit: BTreeMap::new(),
        summary: CalibrationSummary::default(),
        latent_sd: em.sd,
        iterations: em.iterations,
        log_likelihood: em.log_likelihood,
        converged: em.converged,
    };
    let (item_fit, person_fit) = fit_statistics(matrix, &result)?;
    result.item_fit = item_fit;
    result.person_fit = person_fit;
    result.summary = summarize(&result);

    if em.converged {
        Ok(result)
    } else {
        Err(CalibrationError::NotConverged {
            iterations: em.iterations,
            last_change: em.last_change,
            last: Box::new(result),
        })
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn side_summary(estimates: &[(f64, f64)], fits: &[&FitStatistics]) -> SideSummary {
    let locations: Vec<f64> = estimates.iter().map(|e| e.0).collect();
    let (location_mean, location_sd) = mean_sd(&locations);
    let avg = |f: fn(&FitStatistics) -> f64| {
        if fits.is_empty() {
            0.0
        } else {
            fits.iter().map(|s| f(s)).sum::<f64>() / fits.len() as f64
        }
    };
    let reliability = separation_reliability(estimates).unwrap_or(0.0);
    SideSummary {
        count: estimates.len(),
        location_mean,
        location_sd,
        mean_infit: avg(|s| s.infit_mse),
        mean_outfit: avg(|s| s.outfit_mse),
        mean_infit_z: avg(|s| s.infit_z),
        mean_outfit_z: avg(|s| s.outfit_z),
        reliability,
        strata: strata(reliability).unwrap_or(f64::MAX),
    }
}

/// Location, fit and reliability summaries over the non-extreme items and
/// persons of a result.
pub fn summarize(result: &CalibrationResult) -> CalibrationSummary {
    let items: Vec<(f64, f64)> = result.item_difficulties.values().map(|e| (e.difficulty, e.se)).collect();
    let item_fits: Vec<&FitStatistics> = result.item_fit.values().collect();
    let persons: Vec<(f64, f64)> = result
        .person_abilities
        .iter()
        .filter(|(id, _)| !result.extreme_persons.contains_key(*id))
        .map(|(_, a)| (a.theta, a.se))
        .collect();
    let person_fits: Vec<&FitStatistics> = result.person_fit.values().collect();
    CalibrationSummary {
        items: side_summary(&items, &item_fits),
        persons: side_summary(&persons, &person_fits),
    }
}
