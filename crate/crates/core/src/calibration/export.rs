use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::histogram::{logit_histogram, HistogramBin};
use crate::irt::prob;

use super::{CalibrationError, CalibrationResult, PruneReport, ResponseMatrix};

/// One ability bin of an empirical item response curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Mean ability of the persons in the bin.
    pub center: f64,
    pub observed: f64,
    pub model: f64,
    pub count: usize,
}

/// Observed versus model proportion correct for one item, with the persons who
/// saw it split into `n_bins` equal-count ability bins. Fewer bins are returned
/// when fewer persons saw the item.
pub fn export_item_curve(
    matrix: &ResponseMatrix,
    result: &CalibrationResult,
    item_id: &str,
    n_bins: usize,
) -> Result<Vec<CurvePoint>, CalibrationError> {
    if n_bins == 0 {
        return Err(CalibrationError::InvalidArgument("n_bins must be at least 1".into()));
    }
    let b = result
        .item_difficulties
        .get(item_id)
        .ok_or_else(|| CalibrationError::InvalidArgument(format!("item {item_id} has no difficulty estimate")))?
        .difficulty;
    let col = matrix
        .items()
        .iter()
        .position(|i| i == item_id)
        .ok_or_else(|| CalibrationError::InvalidArgument(format!("item {item_id} is not in the matrix")))?;
    let mut obs: Vec<(f64, bool)> = Vec::new();
    for (p, person) in matrix.persons().iter().enumerate() {
        if let Ok(k) = matrix.row(p).binary_search_by_key(&col, |c| c.0) {
            let a = result.person_abilities.get(person).ok_or_else(|| {
                CalibrationError::InvalidArgument(format!("person {person} has no ability estimate"))
            })?;
            obs.push((a.theta, matrix.row(p)[k].1));
        }
    }
    if obs.is_empty() {
        return Err(CalibrationError::InvalidArgument(format!("item {item_id} has no observations")));
    }
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let bins = n_bins.min(obs.len());
    let n = obs.len();
    Ok((0..bins)
        .map(|k| {
            let chunk = &obs[k * n / bins..(k + 1) * n / bins];
            let count = chunk.len();
            let center = chunk.iter().map(|o| o.0).sum::<f64>() / count as f64;
            let observed = chunk.iter().filter(|o| o.1).count() as f64 / count as f64;
            CurvePoint { center, observed, model: prob(center, b), count }
        })
        .collect())
}

pub fn write_curve_csv<W: Write>(w: W, curve: &[CurvePoint]) -> Result<(), CalibrationError> {
    let mut w = csv::Writer::from_writer(w);
    for p in curve {
        w.serialize(p).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CalibrationError::Io(e.to_string()))
}

/// Person and item distributions binned on one logit scale.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WrightMap {
    pub persons: Vec<HistogramBin>,
    pub items: Vec<HistogramBin>,
}

impl WrightMap {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CalibrationError> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["side", "lower", "upper", "count"]).map_err(csv_err)?;
        for (side, bins) in [("person", &self.persons), ("item", &self.items)] {
            for b in bins {
                w.write_record([side, &b.lower.to_string(), &b.upper.to_string(), &b.count.to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| CalibrationError::Io(e.to_string()))
    }
}

/// Wright map of all scored persons and estimated items.
pub fn export_wright_map(result: &CalibrationResult, bin_width: f64) -> Result<WrightMap, CalibrationError> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(CalibrationError::InvalidArgument(format!(
            "bin width must be positive, got {bin_width}"
        )));
    }
    Ok(WrightMap {
        persons: logit_histogram(result.person_abilities.values().map(|a| a.theta), bin_width),
        items: logit_histogram(result.item_difficulties.values().map(|e| e.difficulty), bin_width),
    })
}

/// Per-item CSV: `id,difficulty,se,infit,outfit,infit_z,outfit_z,retained`.
/// Extreme items appear with empty estimate columns and `retained = false`.
pub fn write_item_table<W: Write>(w: W, result: &CalibrationResult, prune: &PruneReport) -> Result<(), CalibrationError> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["id", "difficulty", "se", "infit", "outfit", "infit_z", "outfit_z", "retained"])
        .map_err(csv_err)?;
    let num = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for (id, est) in &result.item_difficulties {
        let fit = result.item_fit.get(id);
        let retained = prune.retained.iter().any(|r| r == id);
        w.write_record([
            id.clone(),
            est.difficulty.to_string(),
            est.se.to_string(),
            num(fit.map(|f| f.infit_mse)),
            num(fit.map(|f| f.outfit_mse)),
            num(fit.map(|f| f.infit_z)),
            num(fit.map(|f| f.outfit_z)),
            retained.to_string(),
        ])
        .map_err(csv_err)?;
    }
    for id in result.extreme_items.keys() {
        w.write_record([id.as_str(), "", "", "", "", "", "", "false"]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CalibrationError::Io(e.to_string()))
}

fn csv_err(e: csv::Error) -> CalibrationError {
    CalibrationError::Io(e.to_string())
}
