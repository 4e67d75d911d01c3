//! Linear fits of metric-vs-K curves and the derived degradation rates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sweep::SweepRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub residuals: Vec<f64>,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    /// Degradation in percentage points per added class; positive means
    /// the metric falls as K grows.
    pub fn rate_percent_per_class(&self) -> f64 {
        -100.0 * self.slope
    }
}

/// Ordinary least squares with intercept. When every value is equal the
/// slope is 0 and R² is defined as 1.
pub fn fit_line(points: &[(f64, f64)]) -> Result<LinearFit> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if points.len() < 2 || xs.len() < 2 {
        return Err(Error::arg("need >= 2 distinct K values to fit a line"));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::arg("fit points must be finite"));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residuals: Vec<f64> = points
        .iter()
        .map(|&(x, y)| y - (intercept + slope * x))
        .collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(LinearFit {
        intercept,
        slope,
        r_squared,
        n_points: points.len(),
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Precision,
    Recall,
    F1,
    Accuracy,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Precision,
        Metric::Recall,
        Metric::F1,
        Metric::Accuracy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
            Metric::Accuracy => "accuracy",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::Precision => "Precision",
            Metric::Recall => "Recall",
            Metric::F1 => "F1 score",
            Metric::Accuracy => "Accuracy",
        }
    }

    pub fn of(self, row: &SweepRow) -> f64 {
        match self {
            Metric::Precision => row.macro_precision,
            Metric::Recall => row.macro_recall,
            Metric::F1 => row.macro_f1,
            Metric::Accuracy => row.accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
    pub rate_percent_per_class: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

/// Contents of `analysis.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationReport {
    pub fits: BTreeMap<Metric, MetricFit>,
    /// Signed residuals of the per-K means, ascending K.
    pub residuals: Vec<ResidualRow>,
    pub include_k1: bool,
}

impl DegradationReport {
    pub fn fit(&self, m: Metric) -> &MetricFit {
        &self.fits[&m]
    }

    /// Absolute residuals of one metric keyed by K.
    pub fn dispersion(&self, m: Metric) -> Vec<(usize, f64)> {
        self.residuals
            .iter()
            .map(|r| {
                let v = match m {
                    Metric::Precision => r.precision,
                    Metric::Recall => r.recall,
                    Metric::F1 => r.f1,
                    Metric::Accuracy => r.accuracy,
                };
                (r.k, v.abs())
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Means of every metric per K, ascending K, averaged over seeds.
pub fn per_k_means(rows: &[SweepRow]) -> Vec<(usize, [f64; 4])> {
    let mut acc: BTreeMap<usize, ([f64; 4], usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(r.k).or_insert(([0.0; 4], 0));
        for (i, m) in Metric::ALL.iter().enumerate() {
            e.0[i] += m.of(r);
        }
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (sums, n))| (k, sums.map(|s| s / n as f64)))
        .collect()
}

pub fn degradation_report(rows: &[SweepRow], include_k1: bool) -> Result<DegradationReport> {
    let means: Vec<_> = per_k_means(rows)
        .into_iter()
        .filter(|(k, _)| include_k1 || *k != 1)
        .collect();
    if means.len() < 2 {
        return Err(Error::arg(format!(
            "need ≥ 2 distinct K, found {}",
            means.len()
        )));
    }
    let mut fits = BTreeMap::new();
    let mut residuals: Vec<ResidualRow> = means
        .iter()
        .map(|(k, _)| ResidualRow {
            k: *k,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            accuracy: 0.0,
        })
        .collect();
    for (i, m) in Metric::ALL.iter().enumerate() {
        let points: Vec<(f64, f64)> = means.iter().map(|(k, v)| (*k as f64, v[i])).collect();
        let fit = fit_line(&points)?;
        for (row, r) in residuals.iter_mut().zip(&fit.residuals) {
            match m {
                Metric::Precision => row.precision = *r,
                Metric::Recall => row.recall = *r,
                Metric::F1 => row.f1 = *r,
                Metric::Accuracy => row.accuracy = *r,
            }
        }
        fits.insert(
            *m,
            MetricFit {
                intercept: fit.intercept,
                slope: fit.slope,
                r_squared: fit.r_squared,
                rate_percent_per_class: fit.rate_percent_per_class(),
                n_points: fit.n_points,
            },
        );
    }
    Ok(DegradationReport {
        fits,
        residuals,
        include_k1,
    })
}
