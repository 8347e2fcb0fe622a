use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::irt::prob;

use super::{CalibrationError, CalibrationResult, ResponseMatrix};

/// Rasch residual mean-square fit with Wilson–Hilferty standardisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStatistics {
    pub infit_mse: f64,
    pub outfit_mse: f64,
    pub infit_z: f64,
    pub outfit_z: f64,
}

fn wilson_hilferty(mse: f64, q: f64) -> f64 {
    if !(q > 0.0) {
        return 0.0;
    }
    (mse.cbrt() - 1.0) * (3.0 / q) + q / 3.0
}

impl FitStatistics {
    /// Fit over `(model probability, observed)` cells. `None` when empty.
    pub fn from_cells(cells: impl IntoIterator<Item = (f64, bool)>) -> Option<Self> {
        let (mut n, mut sq_res, mut sum_w, mut std_sq, mut kurt_ratio, mut kurt_minus) =
            (0usize, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (p, x) in cells {
            let w = p * (1.0 - p);
            let e = f64::from(u8::from(x)) - p;
            // Fourth central moment of a Bernoulli residual.
            let c = w * (1.0 - 3.0 * w);
            n += 1;
            sq_res += e * e;
            sum_w += w;
            std_sq += e * e / w;
            kurt_ratio += c / (w * w);
            kurt_minus += c - w * w;
        }
        if n == 0 {
            return None;
        }
        let nf = n as f64;
        let outfit_mse = std_sq / nf;
        let infit_mse = sq_res / sum_w;
        let q_out = (kurt_ratio / (nf * nf) - 1.0 / nf).max(0.0).sqrt();
        let q_in = (kurt_minus / (sum_w * sum_w)).max(0.0).sqrt();
        Some(FitStatistics {
            infit_mse,
            outfit_mse,
            infit_z: wilson_hilferty(infit_mse, q_in),
            outfit_z: wilson_hilferty(outfit_mse, q_out),
        })
    }
}

/// Item and person fit of a matrix under a calibration of that matrix.
///
/// Item fit covers the estimated items over non-extreme persons; person fit
/// covers non-extreme persons over the estimated items.
pub fn fit_statistics(
    matrix: &ResponseMatrix,
    result: &CalibrationResult,
) -> Result<(BTreeMap<String, FitStatistics>, BTreeMap<String, FitStatistics>), CalibrationError> {
    let known_items = result.item_difficulties.len() + result.extreme_items.len();
    if known_items != matrix.items().len() || result.person_abilities.len() != matrix.persons().len() {
        return Err(CalibrationError::InvalidArgument(
            "calibration result does not match the response matrix".into(),
        ));
    }
    let mut difficulty: Vec<Option<f64>> = Vec::with_capacity(matrix.items().len());
    for id in matrix.items() {
        match (result.item_difficulties.get(id), result.extreme_items.contains_key(id)) {
            (Some(e), _) => difficulty.push(Some(e.difficulty)),
            (None, true) => difficulty.push(None),
            (None, false) => {
                return Err(CalibrationError::InvalidArgument(format!(
                    "item {id} missing from the calibration result"
                )))
            }
        }
    }
    let mut theta: Vec<Option<f64>> = Vec::with_capacity(matrix.persons().len());
    for id in matrix.persons() {
        let a = result.person_abilities.get(id).ok_or_else(|| {
            CalibrationError::InvalidArgument(format!("person {id} missing from the calibration result"))
        })?;
        theta.push((!result.extreme_persons.contains_key(id)).then_some(a.theta));
    }

    let mut by_item: HashMap<usize, Vec<(f64, bool)>> = HashMap::new();
    let mut person_fit = BTreeMap::new();
    for (p, t) in theta.iter().enumerate() {
        let Some(t) = *t else { continue };
        let cells: Vec<(usize, f64, bool)> = matrix
            .row(p)
            .iter()
            .filter_map(|&(i, x)| difficulty[i].map(|b| (i, prob(t, b), x)))
            .collect();
        for &(i, pr, x) in &cells {
            by_item.entry(i).or_default().push((pr, x));
        }
        if let Some(f) = FitStatistics::from_cells(cells.iter().map(|&(_, pr, x)| (pr, x))) {
            person_fit.insert(matrix.persons()[p].clone(), f);
        }
    }
    let mut item_fit = BTreeMap::new();
    for (i, cells) in by_item {
        if let Some(f) = FitStatistics::from_cells(cells) {
            item_fit.insert(matrix.items()[i].clone(), f);
        }
    }
    Ok((item_fit, person_fit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedItem {
    pub id: String,
    pub fit: FitStatistics,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PruneReport {
    pub retained: Vec<String>,
    pub removed: Vec<RemovedItem>,
    /// Extreme items, which have no fit to judge.
    pub unestimated: Vec<String>,
}

/// Removes an item iff its larger mean square exceeds `mse_cap` and its larger
/// absolute z exceeds `z_cap`, both strictly.
pub fn prune_items(result: &CalibrationResult, mse_cap: f64, z_cap: f64) -> PruneReport {
    let mut report = PruneReport {
        unestimated: result.extreme_items.keys().cloned().collect(),
        ..PruneReport::default()
    };
    for id in result.item_difficulties.keys() {
        let Some(fit) = result.item_fit.get(id) else {
            report.retained.push(id.clone());
            continue;
        };
        let mse = fit.infit_mse.max(fit.outfit_mse);
        let z = fit.infit_z.abs().max(fit.outfit_z.abs());
        if mse > mse_cap && z > z_cap {
            report.removed.push(RemovedItem {
                id: id.clone(),
                fit: *fit,
                reason: format!("mean square {mse:.3} > {mse_cap} and |z| {z:.2} > {z_cap}"),
            });
        } else {
            report.retained.push(id.clone());
        }
    }
    report
}

/// `(var(locations) - mean(se²)) / var(locations)`, floored at 0, using the
/// population variance.
pub fn separation_reliability(estimates: &[(f64, f64)]) -> Result<f64, CalibrationError> {
    if estimates.len() < 2 {
        return Err(CalibrationError::InvalidArgument(
            "separation reliability needs at least two estimates".into(),
        ));
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().map(|e| e.0).sum::<f64>() / n;
    let var = estimates.iter().map(|e| (e.0 - mean) * (e.0 - mean)).sum::<f64>() / n;
    let err = estimates.iter().map(|e| e.1 * e.1).sum::<f64>() / n;
    if !(var > 0.0) {
        return Ok(0.0);
    }
    Ok(((var - err) / var).clamp(0.0, 1.0))
}

/// Number of statistically distinct levels, `(4G + 1) / 3` with
/// `G = sqrt(R / (1 - R))`.
pub fn strata(reliability: f64) -> Result<f64, CalibrationError> {
    if !(0.0..1.0).contains(&reliability) {
        return Err(CalibrationError::InvalidArgument(format!(
            "strata needs reliability in [0, 1), got {reliability}"
        )));
    }
    let g = (reliability / (1.0 - reliability)).sqrt();
    Ok((4.0 * g + 1.0) / 3.0)
}
