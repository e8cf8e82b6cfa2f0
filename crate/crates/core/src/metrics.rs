//! Forecast skill scores and error distributions.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::m_to_ft;
use crate::hydro::StateField;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("series lengths differ: {0} vs {1}")]
    Length(usize, usize),
    #[error("empty series")]
    Empty,
    #[error("state fields differ: {0}")]
    Shape(String),
}

fn check(pred: &[f64], truth: &[f64]) -> Result<(), MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::Length(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, MetricsError> {
    check(pred, truth)?;
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(libm::sqrt(s / pred.len() as f64))
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, MetricsError> {
    check(pred, truth)?;
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(s / pred.len() as f64)
}

/// Nash–Sutcliffe efficiency; `None` when the truth is constant.
pub fn nse(pred: &[f64], truth: &[f64]) -> Result<Option<f64>, MetricsError> {
    check(pred, truth)?;
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let den: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    if den == 0.0 {
        return Ok(None);
    }
    let num: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(Some(1.0 - num / den))
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorQuantiles {
    pub median: f64,
    pub mean: f64,
    pub p90: f64,
    pub max: f64,
}

impl ErrorQuantiles {
    pub fn of_abs(mut errors: Vec<f64>) -> Self {
        errors.iter_mut().for_each(|e| *e = e.abs());
        errors.sort_by(f64::total_cmp);
        Self {
            median: quantile_sorted(&errors, 0.5),
            mean: errors.iter().sum::<f64>() / errors.len().max(1) as f64,
            p90: quantile_sorted(&errors, 0.9),
            max: errors.last().copied().unwrap_or(f64::NAN),
        }
    }

    pub fn to_feet(self) -> Self {
        Self {
            median: m_to_ft(self.median),
            mean: m_to_ft(self.mean),
            p90: m_to_ft(self.p90),
            max: m_to_ft(self.max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub nse: Option<f64>,
    pub per_xs_nse: Vec<Option<f64>>,
    pub abs_error: ErrorQuantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub reach_id: String,
    pub variable: String,
    pub rmse: f64,
    pub mae: f64,
    pub nse: Option<f64>,
    pub median_abs_error: f64,
    pub p90_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub reach_id: String,
    pub hours: usize,
    pub n_xs: usize,
    pub stage: VariableMetrics,
    pub discharge: VariableMetrics,
    /// Stage error quantiles in feet.
    pub stage_abs_error_ft: ErrorQuantiles,
    pub summary: Vec<SummaryRow>,
}

impl MetricsReport {
    /// Median of the defined per-section stage NSE values.
    pub fn median_xs_stage_nse(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.stage.per_xs_nse.iter().flatten().copied().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(quantile_sorted(&v, 0.5))
    }
}

fn variable(pred: &StateField, truth: &StateField, skip: usize, stage: bool) -> Result<VariableMetrics, MetricsError> {
    let series = |f: &StateField, i: usize| -> Vec<f64> {
        let s = if stage { f.h_series(i) } else { f.q_series(i) };
        s[skip..].to_vec()
    };
    let mut all_p = Vec::new();
    let mut all_t = Vec::new();
    let mut per_xs_nse = Vec::with_capacity(truth.n_xs);
    for i in 0..truth.n_xs {
        let (p, t) = (series(pred, i), series(truth, i));
        per_xs_nse.push(nse(&p, &t)?);
        all_p.extend(p);
        all_t.extend(t);
    }
    let errors = all_p.iter().zip(&all_t).map(|(p, t)| p - t).collect();
    Ok(VariableMetrics {
        rmse: rmse(&all_p, &all_t)?,
        mae: mae(&all_p, &all_t)?,
        nse: nse(&all_p, &all_t)?,
        per_xs_nse,
        abs_error: ErrorQuantiles::of_abs(errors),
    })
}

/// Scores `pred` against `truth`, ignoring the first `warmup` hours.
pub fn evaluate_reach(pred: &StateField, truth: &StateField, warmup: usize) -> Result<MetricsReport, MetricsError> {
    if pred.n_xs != truth.n_xs || pred.hours() != truth.hours() {
        return Err(MetricsError::Shape(alloc::format!(
            "{}x{} vs {}x{}",
            pred.hours(),
            pred.n_xs,
            truth.hours(),
            truth.n_xs
        )));
    }
    if truth.hours() <= warmup {
        return Err(MetricsError::Empty);
    }
    let stage = variable(pred, truth, warmup, true)?;
    let discharge = variable(pred, truth, warmup, false)?;
    let row = |name: &str, m: &VariableMetrics| SummaryRow {
        reach_id: truth.reach_id.clone(),
        variable: name.into(),
        rmse: m.rmse,
        mae: m.mae,
        nse: m.nse,
        median_abs_error: m.abs_error.median,
        p90_abs_error: m.abs_error.p90,
    };
    let summary = alloc::vec![row("stage_m", &stage), row("discharge_m3s", &discharge)];
    Ok(MetricsReport {
        reach_id: truth.reach_id.clone(),
        hours: truth.hours() - warmup,
        n_xs: truth.n_xs,
        stage_abs_error_ft: stage.abs_error.to_feet(),
        stage,
        discharge,
        summary,
    })
}

/// `|max(pred) − max(truth)|` of stage at one section over hours `[start, end)`.
pub fn peak_stage_error(pred: &StateField, truth: &StateField, section: usize, start: usize, end: usize) -> f64 {
    let peak = |f: &StateField| (start..end).map(|t| f.h_at(t, section)).fold(f64::NEG_INFINITY, f64::max);
    (peak(pred) - peak(truth)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn perfect_mean_and_bias() {
        let t = [1.0, 3.0, 2.0, 7.0, 4.5];
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert_eq!(mae(&t, &t).unwrap(), 0.0);
        assert_eq!(nse(&t, &t).unwrap(), Some(1.0));
        let mean = [3.5; 5];
        assert!(nse(&mean, &t).unwrap().unwrap().abs() < 1e-12);
        for b in [-2.5, 0.3, 4.0] {
            let p: Vec<f64> = t.iter().map(|v| v + b).collect();
            assert!((rmse(&p, &t).unwrap() - b.abs()).abs() < 1e-12);
            assert!((mae(&p, &t).unwrap() - b.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_truth_has_no_nse() {
        assert_eq!(nse(&[1.0, 2.0], &[3.0, 3.0]).unwrap(), None);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile_sorted(&s, 0.5), 1.5);
        assert_eq!(quantile_sorted(&s, 0.9), 2.7);
        assert_eq!(quantile_sorted(&[4.0], 0.9), 4.0);
    }

    #[test]
    fn half_cells_off_by_one_metre() {
        let truth = StateField::new("r", 2, vec![1.0; 8], vec![5.0; 8]).unwrap();
        let h = vec![2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0];
        let pred = StateField::new("r", 2, h, vec![5.0; 8]).unwrap();
        let rep = evaluate_reach(&pred, &truth, 0).unwrap();
        assert_eq!(rep.stage.abs_error.median, 0.5);
        assert!((rep.stage_abs_error_ft.median - 0.5 * 3.28084).abs() < 1e-4);
        assert_eq!(rep.discharge.abs_error.median, 0.0);
    }

    #[test]
    fn outlier_pulls_mean_above_median() {
        let mut e = vec![0.1; 99];
        e.push(50.0);
        let q = ErrorQuantiles::of_abs(e);
        assert!(q.mean > q.median);
        assert!(q.median <= q.p90);
    }
}
