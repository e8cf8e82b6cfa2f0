//! Analysis outputs: metrics JSON, error and per-section CSVs, training log.

use std::path::Path;

use reach_surrogate_core::geometry::m_to_ft;
use reach_surrogate_core::hydro::StateField;
use reach_surrogate_core::metrics::MetricsReport;
use reach_surrogate_core::train::TrainReport;

use crate::container::{write_atomic, ContainerError};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Write(#[from] ContainerError),
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn metrics_json(report: &MetricsReport) -> Result<Vec<u8>, ReportError> {
    let mut out = serde_json::to_vec_pretty(report)?;
    out.push(b'\n');
    Ok(out)
}

/// One row per forecast cell: `hour,xs_index,stage_error_m,stage_error_ft,discharge_error_m3s`.
pub fn error_distribution_csv(pred: &StateField, truth: &StateField, warmup: usize) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["hour", "xs_index", "stage_error_m", "stage_error_ft", "discharge_error_m3s"])?;
    for t in warmup..truth.hours() {
        for i in 0..truth.n_xs {
            let dh = pred.h_at(t, i) - truth.h_at(t, i);
            let dq = pred.q_at(t, i) - truth.q_at(t, i);
            w.write_record([t.to_string(), i.to_string(), dh.to_string(), m_to_ft(dh).to_string(), dq.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()).into())
}

/// `xs_index,stage_nse,discharge_nse`; an undefined NSE is left empty.
pub fn per_xs_nse_csv(report: &MetricsReport) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["xs_index", "stage_nse", "discharge_nse"])?;
    for (i, (s, q)) in report.stage.per_xs_nse.iter().zip(&report.discharge.per_xs_nse).enumerate() {
        w.write_record([i.to_string(), opt(*s), opt(*q)])?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()).into())
}

/// One JSON object per epoch.
pub fn train_report_jsonl(report: &TrainReport) -> Result<Vec<u8>, ReportError> {
    let mut out = Vec::new();
    for e in &report.epochs {
        serde_json::to_writer(&mut out, e)?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Writes `metrics.json`, `error_distribution.csv` and `per_xs_nse.csv` into `dir`.
pub fn write_evaluation(
    dir: &Path,
    report: &MetricsReport,
    pred: &StateField,
    truth: &StateField,
    warmup: usize,
) -> Result<(), ReportError> {
    write_atomic(&dir.join("metrics.json"), &metrics_json(report)?)?;
    write_atomic(&dir.join("error_distribution.csv"), &error_distribution_csv(pred, truth, warmup)?)?;
    write_atomic(&dir.join("per_xs_nse.csv"), &per_xs_nse_csv(report)?)?;
    Ok(())
}
