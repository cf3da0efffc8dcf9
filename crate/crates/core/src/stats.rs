//! Five-number summary plus standard deviation for repeated-run accuracies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column names of the summary, in output order.
pub const SUMMARY_COLUMNS: [&str; 6] = [
    "minimum",
    "lower_quartile",
    "median",
    "upper_quartile",
    "maximum",
    "standard_deviation",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub minimum: f64,
    pub lower_quartile: f64,
    pub median: f64,
    pub upper_quartile: f64,
    pub maximum: f64,
    pub standard_deviation: f64,
}

impl Summary {
    pub fn values(&self) -> [f64; 6] {
        [
            self.minimum,
            self.lower_quartile,
            self.median,
            self.upper_quartile,
            self.maximum,
            self.standard_deviation,
        ]
    }
}

/// Quantile by linear interpolation between order statistics at `p * (n - 1)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quartiles interpolate linearly; the standard deviation is the population
/// form (divide by `n`), so a single run reports 0.
pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::data("cannot summarize an empty sample"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("cannot summarize non-finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(Summary {
        minimum: sorted[0],
        lower_quartile: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        upper_quartile: quantile(&sorted, 0.75),
        maximum: sorted[sorted.len() - 1],
        standard_deviation: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value() {
        let s = summarize(&[0.7]).unwrap();
        assert_eq!(s.values(), [0.7, 0.7, 0.7, 0.7, 0.7, 0.0]);
    }

    #[test]
    fn hand_computed() {
        // sorted 1 2 3 4: q1 at h = 0.75 -> 1.75, median 2.5, q3 at 2.25 -> 3.25
        let s = summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.lower_quartile, 1.75);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.upper_quartile, 3.25);
        assert!((s.standard_deviation - 1.25f64.sqrt()).abs() < 1e-15);
        assert!(summarize(&[]).is_err());
    }
}
