//! File formats, checkpoints, benchmarking and the command line for
//! `reach-surrogate-core`.

use std::time::Instant;

use reach_surrogate_core::train::Clock;

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod container;
pub mod dataset;
pub mod geometry_file;
pub mod reports;
pub mod series_csv;

/// Seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> Option<f64> {
        Some(self.0.elapsed().as_secs_f64())
    }
}
