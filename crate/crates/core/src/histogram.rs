//! Fixed-width logit histograms shared by the Wright-map exports.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Inclusive lower edge.
    pub lower: f64,
    /// Exclusive upper edge.
    pub upper: f64,
    pub count: usize,
}

/// Counts values into bins `[k·width, (k+1)·width)`; only occupied bins are
/// returned, in ascending order. Non-finite values are ignored.
///
/// Panics if `width` is not strictly positive; callers validate it first.
pub fn logit_histogram(values: impl IntoIterator<Item = f64>, width: f64) -> Vec<HistogramBin> {
    assert!(width > 0.0 && width.is_finite(), "bin width must be > 0");
    let mut counts = std::collections::BTreeMap::<i64, usize>::new();
    for v in values.into_iter().filter(|v| v.is_finite()) {
        *counts.entry((v / width).floor() as i64).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(k, count)| HistogramBin {
            lower: k as f64 * width,
            upper: (k + 1) as f64 * width,
            count,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_are_half_open() {
        let h = logit_histogram([-1.2, 0.3, 0.4, 1.0], 1.0);
        let got: Vec<_> = h.iter().map(|b| (b.lower, b.upper, b.count)).collect();
        assert_eq!(got, vec![(-2.0, -1.0, 1), (0.0, 1.0, 2), (1.0, 2.0, 1)]);
    }

    #[test]
    fn empty_input() {
        assert!(logit_histogram(std::iter::empty(), 0.5).is_empty());
    }
}
