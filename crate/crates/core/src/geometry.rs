//! Reach geometry, boundary forcings and the static per-cross-section features.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;
use crate::FT_TO_M;

/// Minimum forcing length: one 12-hour history window plus its target hour.
pub const MIN_SERIES_LEN: usize = 13;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("cross-section at chainage {chainage}: profile needs at least 2 points")]
    ShortProfile { chainage: f64 },
    #[error("cross-section at chainage {chainage}: profile stations must strictly increase")]
    NonMonotoneStations { chainage: f64 },
    #[error("cross-section at chainage {chainage}: bank stations {left}..{right} must satisfy left < right within the profile range")]
    BadBanks { chainage: f64, left: f64, right: f64 },
    #[error("cross-section at chainage {chainage}: Manning n {n} outside (0, 0.2]")]
    BadRoughness { chainage: f64, n: f64 },
    #[error("cross-section at chainage {chainage}: non-finite value")]
    NonFinite { chainage: f64 },
    #[error("reach needs at least 3 cross-sections, got {0}")]
    TooFewSections(usize),
    #[error("chainage must strictly increase downstream (section {index}: {prev} then {next})")]
    NonMonotoneChainage { index: usize, prev: f64, next: f64 },
    #[error("forcing series lengths differ: q_up has {q}, h_dn has {h}")]
    LengthMismatch { q: usize, h: usize },
    #[error("forcing series has {0} hours; at least {MIN_SERIES_LEN} are needed for one history window plus target")]
    SeriesTooShort(usize),
    #[error("negative upstream discharge {value} at hour {hour}")]
    NegativeDischarge { hour: usize, value: f64 },
    #[error("missing or non-finite forcing value at hour {0}")]
    MissingValue(usize),
}

#[inline]
pub fn ft_to_m(x: f64) -> f64 {
    x * FT_TO_M
}

#[inline]
pub fn m_to_ft(x: f64) -> f64 {
    x / FT_TO_M
}

/// One surveyed cross-section in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub chainage: f64,
    pub profile: Vec<(f64, f64)>,
    pub bank_left: f64,
    pub bank_right: f64,
    pub manning_n: f64,
    pub z_bed: f64,
    pub z_bank: f64,
}

impl CrossSection {
    /// Validates the raw survey and derives the thalweg and bank-top elevations.
    pub fn new(
        chainage: f64,
        profile: Vec<(f64, f64)>,
        bank_left: f64,
        bank_right: f64,
        manning_n: f64,
    ) -> Result<Self, GeometryError> {
        let finite = chainage.is_finite()
            && bank_left.is_finite()
            && bank_right.is_finite()
            && manning_n.is_finite()
            && profile.iter().all(|(s, z)| s.is_finite() && z.is_finite());
        if !finite {
            return Err(GeometryError::NonFinite { chainage });
        }
        if profile.len() < 2 {
            return Err(GeometryError::ShortProfile { chainage });
        }
        if profile.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(GeometryError::NonMonotoneStations { chainage });
        }
        let (lo, hi) = (profile[0].0, profile[profile.len() - 1].0);
        if !(bank_left < bank_right && bank_left >= lo && bank_right <= hi) {
            return Err(GeometryError::BadBanks {
                chainage,
                left: bank_left,
                right: bank_right,
            });
        }
        if !(manning_n > 0.0 && manning_n <= 0.2) {
            return Err(GeometryError::BadRoughness { chainage, n: manning_n });
        }
        let z_bed = profile.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let z_bank = elevation_at(&profile, bank_left).min(elevation_at(&profile, bank_right));
        Ok(Self {
            chainage,
            profile,
            bank_left,
            bank_right,
            manning_n,
            z_bed,
            z_bank,
        })
    }

    /// Bank-to-bank distance, used as the equivalent rectangular width.
    pub fn channel_width(&self) -> f64 {
        self.bank_right - self.bank_left
    }
}

/// Linear interpolation of the profile elevation at `station`.
fn elevation_at(profile: &[(f64, f64)], station: f64) -> f64 {
    for w in profile.windows(2) {
        let ((s0, z0), (s1, z1)) = (w[0], w[1]);
        if station >= s0 && station <= s1 {
            return z0 + (z1 - z0) * (station - s0) / (s1 - s0);
        }
    }
    // Callers validate the station range first.
    profile[profile.len() - 1].1
}

/// Contiguous channel segment, cross-section 0 upstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reach {
    pub id: String,
    pub cross_sections: Vec<CrossSection>,
    pub x_coord: Vec<f64>,
}

impl Reach {
    pub fn new(id: impl Into<String>, cross_sections: Vec<CrossSection>) -> Result<Self, GeometryError> {
        if cross_sections.len() < 3 {
            return Err(GeometryError::TooFewSections(cross_sections.len()));
        }
        for (i, w) in cross_sections.windows(2).enumerate() {
            if w[1].chainage <= w[0].chainage {
                return Err(GeometryError::NonMonotoneChainage {
                    index: i + 1,
                    prev: w[0].chainage,
                    next: w[1].chainage,
                });
            }
        }
        let x_coord = normalized_coordinate(cross_sections.iter().map(|x| x.chainage));
        Ok(Self {
            id: id.into(),
            cross_sections,
            x_coord,
        })
    }

    pub fn len(&self) -> usize {
        self.cross_sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cross_sections.is_empty()
    }

    pub fn length_m(&self) -> f64 {
        self.cross_sections[self.len() - 1].chainage - self.cross_sections[0].chainage
    }

    pub fn z_bed(&self) -> Vec<f64> {
        self.cross_sections.iter().map(|x| x.z_bed).collect()
    }

    pub fn z_bank(&self) -> Vec<f64> {
        self.cross_sections.iter().map(|x| x.z_bank).collect()
    }
}

/// Maps chainage linearly onto `[0, 1]` by total reach length.
pub fn normalized_coordinate(chainage: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let values: Vec<f64> = chainage.collect();
    let first = values[0];
    let span = values[values.len() - 1] - first;
    let last = values.len() - 1;
    values
        .iter()
        .enumerate()
        .map(|(i, c)| if i == last { 1.0 } else { (c - first) / span })
        .collect()
}

/// Hourly boundary conditions: upstream inflow and downstream stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSeries {
    /// Hour index of the first sample.
    pub t0: i64,
    pub q_up: Vec<f64>,
    pub h_dn: Vec<f64>,
}

impl ForcingSeries {
    pub fn new(t0: i64, q_up: Vec<f64>, h_dn: Vec<f64>) -> Result<Self, GeometryError> {
        if q_up.len() != h_dn.len() {
            return Err(GeometryError::LengthMismatch {
                q: q_up.len(),
                h: h_dn.len(),
            });
        }
        for (hour, (&q, &h)) in q_up.iter().zip(&h_dn).enumerate() {
            if !q.is_finite() || !h.is_finite() {
                return Err(GeometryError::MissingValue(hour));
            }
            if q < 0.0 {
                return Err(GeometryError::NegativeDischarge { hour, value: q });
            }
        }
        if q_up.len() < MIN_SERIES_LEN {
            return Err(GeometryError::SeriesTooShort(q_up.len()));
        }
        Ok(Self { t0, q_up, h_dn })
    }

    pub fn len(&self) -> usize {
        self.q_up.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_up.is_empty()
    }

    /// Hours `[start, start + len)`, re-based so `t0` tracks the slice.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self {
            t0: self.t0 + start as i64,
            q_up: self.q_up[start..start + len].to_vec(),
            h_dn: self.h_dn[start..start + len].to_vec(),
        }
    }
}

/// `[N, 4]` table with columns `(z_bed, z_bank, n_man, x_coord)`.
pub fn static_features(reach: &Reach) -> Tensor {
    let mut data = Vec::with_capacity(reach.len() * 4);
    for (xs, &x) in reach.cross_sections.iter().zip(&reach.x_coord) {
        data.extend_from_slice(&[xs.z_bed, xs.z_bank, xs.manning_n, x]);
    }
    Tensor::from_vec(&[reach.len(), 4], data).expect("4 columns per section")
}
