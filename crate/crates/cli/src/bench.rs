//! Oracle-versus-surrogate wall-clock comparison.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use reach_surrogate_core::geometry::{ForcingSeries, Reach};
use reach_surrogate_core::hydro::{route_reach, HydroError, OracleConfig, StateField};
use reach_surrogate_core::rollout::{rollout, RolloutConfig, RolloutError};
use reach_surrogate_core::train::TrainedModel;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("reach {reach}: {source}")]
    Oracle {
        reach: String,
        #[source]
        source: HydroError,
    },
    #[error("reach {reach}: {source}")]
    Surrogate {
        reach: String,
        #[source]
        source: RolloutError,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Everything needed to time one reach.
pub struct BenchCase<'a> {
    pub reach: &'a Reach,
    pub model: &'a TrainedModel,
    /// Forcings covering warmup plus horizon.
    pub forcings: &'a ForcingSeries,
    /// True state for the warmup hours.
    pub warmup: &'a StateField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub reach_id: String,
    pub n_xs: usize,
    pub hours: usize,
    pub oracle_s: f64,
    pub surrogate_s: f64,
}

impl BenchRow {
    pub fn speedup(&self) -> f64 {
        self.oracle_s / self.surrogate_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn oracle_total(&self) -> f64 {
        self.rows.iter().map(|r| r.oracle_s).sum()
    }

    pub fn surrogate_total(&self) -> f64 {
        self.rows.iter().map(|r| r.surrogate_s).sum()
    }

    pub fn speedup(&self) -> f64 {
        self.oracle_total() / self.surrogate_total()
    }

    fn total_row(&self) -> BenchRow {
        BenchRow {
            reach_id: "TOTAL".into(),
            n_xs: self.rows.iter().map(|r| r.n_xs).sum(),
            hours: self.rows.iter().map(|r| r.hours).sum(),
            oracle_s: self.oracle_total(),
            surrogate_s: self.surrogate_total(),
        }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, BenchError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["reach_id", "n_xs", "hours", "oracle_s", "surrogate_s", "speedup"])?;
        for r in self.rows.iter().cloned().chain([self.total_row()]) {
            w.write_record([
                r.reach_id.clone(),
                r.n_xs.to_string(),
                r.hours.to_string(),
                r.oracle_s.to_string(),
                r.surrogate_s.to_string(),
                r.speedup().to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| csv::Error::from(e.into_error()).into())
    }

    pub fn to_text(&self) -> String {
        let rows: Vec<[String; 6]> = self
            .rows
            .iter()
            .cloned()
            .chain([self.total_row()])
            .map(|r| {
                [
                    r.reach_id.clone(),
                    r.n_xs.to_string(),
                    r.hours.to_string(),
                    format!("{:.4}", r.oracle_s),
                    format!("{:.4}", r.surrogate_s),
                    format!("{:.2}x", r.speedup()),
                ]
            })
            .collect();
        let head = ["reach", "sections", "hours", "oracle [s]", "surrogate [s]", "speedup"];
        let mut width = head.map(str::len);
        for r in &rows {
            for (w, cell) in width.iter_mut().zip(r) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[&str]| {
            for (k, (cell, w)) in cells.iter().zip(&width).enumerate() {
                if k == 0 {
                    let _ = write!(out, "{cell:<w$}");
                } else {
                    let _ = write!(out, "  {cell:>w$}");
                }
            }
            out.push('\n');
        };
        line(&mut out, &head);
        let rule: Vec<String> = width.iter().map(|&w| "-".repeat(w)).collect();
        line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
        for (k, r) in rows.iter().enumerate() {
            if k + 1 == rows.len() {
                line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
            }
            line(&mut out, &r.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }
}

/// Times the oracle and the surrogate over the same forcings, one reach after another.
pub fn benchmark(cases: &[BenchCase<'_>], oracle: &OracleConfig) -> Result<BenchTable, BenchError> {
    let mut rows = Vec::with_capacity(cases.len());
    for c in cases {
        let id = c.reach.id.clone();
        let warm = c.warmup.hours();
        let horizon = c.forcings.len() - warm;

        let t = Instant::now();
        route_reach(c.reach, c.forcings, oracle).map_err(|source| BenchError::Oracle {
            reach: id.clone(),
            source,
        })?;
        let oracle_s = t.elapsed().as_secs_f64();

        let cfg = RolloutConfig::new(horizon, warm, id.clone());
        let t = Instant::now();
        rollout(c.model, c.reach, c.forcings, c.warmup, &cfg).map_err(|source| BenchError::Surrogate {
            reach: id.clone(),
            source,
        })?;
        let surrogate_s = t.elapsed().as_secs_f64();

        rows.push(BenchRow {
            reach_id: id,
            n_xs: c.reach.len(),
            hours: horizon,
            oracle_s,
            surrogate_s,
        });
    }
    Ok(BenchTable { rows })
}
