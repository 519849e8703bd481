//! Krippendorff's alpha over a reliability matrix with missing cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scale::LabelScale;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMetric {
    #[default]
    Interval,
    Nominal,
}

impl AlphaMetric {
    pub fn distance(self, a: f64, b: f64) -> f64 {
        match self {
            AlphaMetric::Interval => (a - b) * (a - b),
            AlphaMetric::Nominal => {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

/// Alpha for a matrix of items (rows) by annotators (columns). `None` cells
/// are missing ratings. Every present value must be a point on `scale`.
pub fn krippendorff_alpha(
    matrix: &[Vec<Option<i64>>],
    metric: AlphaMetric,
    scale: &LabelScale,
) -> Result<Option<f64>> {
    let mut units = Vec::with_capacity(matrix.len());
    for row in matrix {
        let mut unit = Vec::new();
        for &score in row.iter().flatten() {
            if !scale.contains_score(score) {
                return Err(Error::OffScale {
                    scale: scale.name().to_string(),
                    score: score as f64,
                });
            }
            unit.push(score as f64);
        }
        units.push(unit);
    }
    Ok(alpha_from_units(&units, metric))
}

/// Alpha from per-item rating lists via the coincidence matrix.
///
/// Items with fewer than two ratings are not pairable and drop out. Returns
/// `None` with fewer than two pairable values; returns 1.0 when every
/// pairable value is identical.
pub fn alpha_from_units(units: &[Vec<f64>], metric: AlphaMetric) -> Option<f64> {
    let mut values: Vec<f64> = units
        .iter()
        .filter(|u| u.len() >= 2)
        .flatten()
        .copied()
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let k = values.len();
    let index = |v: f64| {
        values
            .binary_search_by(|probe| probe.total_cmp(&v))
            .expect("value collected above")
    };

    // coincidences[c][k]
    let mut coincidences = vec![vec![0.0f64; k]; k];
    for unit in units.iter().filter(|u| u.len() >= 2) {
        let mut counts = vec![0.0f64; k];
        for &v in unit {
            counts[index(v)] += 1.0;
        }
        let weight = 1.0 / (unit.len() as f64 - 1.0);
        for c in 0..k {
            if counts[c] == 0.0 {
                continue;
            }
            for kk in 0..k {
                let pairs = if c == kk {
                    counts[c] * (counts[c] - 1.0)
                } else {
                    counts[c] * counts[kk]
                };
                coincidences[c][kk] += pairs * weight;
            }
        }
    }

    let marginals: Vec<f64> = coincidences.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    if n < 2.0 {
        return None;
    }

    let (mut observed, mut expected) = (0.0, 0.0);
    for c in 0..k {
        for kk in 0..k {
            let d = metric.distance(values[c], values[kk]);
            observed += coincidences[c][kk] * d;
            expected += marginals[c] * marginals[kk] * d;
        }
    }
    if expected == 0.0 {
        return Some(1.0);
    }
    Some(1.0 - (n - 1.0) * observed / expected)
}
