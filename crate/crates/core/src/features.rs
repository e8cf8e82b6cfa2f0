//! The eight input channels, window assembly and per-channel normalisation.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::ForcingSeries;
use crate::hydro::StateField;
use crate::tensor::Tensor;

pub const N_CHANNELS: usize = 8;

/// Floor applied to every channel standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("unknown channel name {0:?}")]
    UnknownChannel(String),
    #[error("dynamic channel {0} cannot be dropped")]
    DynamicChannel(Channel),
    #[error("window ending at hour {t_end} needs {seq_len} hours of history; {available} available")]
    InsufficientHistory {
        t_end: usize,
        seq_len: usize,
        available: usize,
    },
    #[error("inputs disagree: {0}")]
    Mismatch(String),
    #[error("normalisation statistics have not been fitted")]
    Unfitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    H,
    Q,
    ZBed,
    ZBank,
    NMan,
    XCoord,
    QUp,
    HDn,
}

impl Channel {
    pub const ALL: [Channel; N_CHANNELS] = [
        Channel::H,
        Channel::Q,
        Channel::ZBed,
        Channel::ZBank,
        Channel::NMan,
        Channel::XCoord,
        Channel::QUp,
        Channel::HDn,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::H => "H",
            Channel::Q => "Q",
            Channel::ZBed => "z_bed",
            Channel::ZBank => "z_bank",
            Channel::NMan => "n_man",
            Channel::XCoord => "x_coord",
            Channel::QUp => "Q_up",
            Channel::HDn => "H_dn",
        }
    }

    pub fn is_dynamic(self) -> bool {
        matches!(self, Channel::H | Channel::Q)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Channel::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| FeatureError::UnknownChannel(String::from(s)))
    }
}

/// Canonical channel order shared by every feature tensor.
pub fn channel_layout() -> [Channel; N_CHANNELS] {
    Channel::ALL
}

/// Subset of channels fed to the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelMask(u8);

impl Default for ChannelMask {
    fn default() -> Self {
        Self::all()
    }
}

impl ChannelMask {
    pub const fn all() -> Self {
        Self(0xff)
    }

    /// Drops static or forcing channels; the dynamic state is never droppable.
    pub fn without(drop: &[Channel]) -> Result<Self, FeatureError> {
        let mut bits = 0xffu8;
        for &c in drop {
            if c.is_dynamic() {
                return Err(FeatureError::DynamicChannel(c));
            }
            bits &= !(1 << c.index());
        }
        Ok(Self(bits))
    }

    /// Parses a comma-separated list of channels to drop (`"z_bank,n_man"`).
    pub fn parse_drop_list(list: &str) -> Result<Self, FeatureError> {
        let drop = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(Channel::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        Self::without(&drop)
    }

    pub fn contains(self, c: Channel) -> bool {
        self.0 & (1 << c.index()) != 0
    }

    /// Kept channels in canonical order.
    pub fn channels(self) -> Vec<Channel> {
        Channel::ALL.into_iter().filter(|&c| self.contains(c)).collect()
    }

    pub fn dropped(self) -> Vec<Channel> {
        Channel::ALL.into_iter().filter(|&c| !self.contains(c)).collect()
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn from_bits(bits: u8) -> Result<Self, FeatureError> {
        let mask = Self(bits);
        if !mask.contains(Channel::H) || !mask.contains(Channel::Q) {
            return Err(FeatureError::DynamicChannel(Channel::H));
        }
        Ok(mask)
    }
}

/// Assembles the `[L, N, 8]` history ending just before `t_end`.
///
/// Rows cover hours `t_end − L .. t_end − 1`; the state, static table and
/// forcings are all indexed from hour 0 of `state`.
pub fn build_window(
    state: &StateField,
    static4: &Tensor,
    forcings: &ForcingSeries,
    t_end: usize,
    seq_len: usize,
) -> Result<Tensor, FeatureError> {
    let n = state.n_xs;
    if static4.shape() != [n, 4] {
        return Err(FeatureError::Mismatch(alloc::format!(
            "static table shape {:?} for {n} sections",
            static4.shape()
        )));
    }
    let available = state.hours().min(forcings.len());
    if t_end < seq_len || t_end > available {
        return Err(FeatureError::InsufficientHistory {
            t_end,
            seq_len,
            available,
        });
    }
    let mut out = Tensor::zeros(&[seq_len, n, N_CHANNELS]);
    let data = out.data_mut();
    let st = static4.data();
    for (l, tau) in (t_end - seq_len..t_end).enumerate() {
        let (h, q) = (state.h_row(tau), state.q_row(tau));
        let (q_up, h_dn) = (forcings.q_up[tau], forcings.h_dn[tau]);
        for i in 0..n {
            let cell = &mut data[(l * n + i) * N_CHANNELS..(l * n + i + 1) * N_CHANNELS];
            cell[0] = h[i];
            cell[1] = q[i];
            cell[2..6].copy_from_slice(&st[i * 4..i * 4 + 4]);
            cell[6] = q_up;
            cell[7] = h_dn;
        }
    }
    Ok(out)
}

/// Per-channel mean and standard deviation in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; N_CHANNELS],
    pub std: [f64; N_CHANNELS],
    /// Values per channel the statistics were fitted on; 0 means unfitted.
    pub count: u64,
}

impl Default for NormStats {
    fn default() -> Self {
        Self {
            mean: [0.0; N_CHANNELS],
            std: [1.0; N_CHANNELS],
            count: 0,
        }
    }
}

impl NormStats {
    /// Two-pass population statistics over every cell of every window.
    pub fn fit<'a>(windows: impl Iterator<Item = &'a Tensor> + Clone) -> Result<Self, FeatureError> {
        let mut sum = [0.0; N_CHANNELS];
        let mut count = 0u64;
        for w in windows.clone() {
            for cell in w.data().chunks_exact(N_CHANNELS) {
                for (s, v) in sum.iter_mut().zip(cell) {
                    *s += v;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(FeatureError::Unfitted);
        }
        let mean = sum.map(|s| s / count as f64);
        let mut sq = [0.0; N_CHANNELS];
        for w in windows {
            for cell in w.data().chunks_exact(N_CHANNELS) {
                for c in 0..N_CHANNELS {
                    let d = cell[c] - mean[c];
                    sq[c] += d * d;
                }
            }
        }
        let std = sq.map(|s| libm::sqrt(s / count as f64).max(STD_FLOOR));
        Ok(Self { mean, std, count })
    }

    pub fn is_fitted(&self) -> bool {
        self.count > 0
    }

    fn check(&self) -> Result<(), FeatureError> {
        if self.is_fitted() {
            Ok(())
        } else {
            Err(FeatureError::Unfitted)
        }
    }

    /// In-place `(x − μ_c)/σ_c` over a tensor whose last axis is the 8 channels.
    pub fn normalize(&self, x: &mut Tensor) -> Result<(), FeatureError> {
        self.check()?;
        self.apply(x, 0, N_CHANNELS, |v, m, s| (v - m) / s)
    }

    pub fn denormalize(&self, x: &mut Tensor) -> Result<(), FeatureError> {
        self.check()?;
        self.apply(x, 0, N_CHANNELS, |v, m, s| v * s + m)
    }

    /// Normalises a `[…, 2]` `(H, Q)` tensor with the dynamic-channel statistics.
    pub fn normalize_state(&self, x: &mut Tensor) -> Result<(), FeatureError> {
        self.check()?;
        self.apply(x, 0, 2, |v, m, s| (v - m) / s)
    }

    pub fn denormalize_state(&self, x: &mut Tensor) -> Result<(), FeatureError> {
        self.check()?;
        self.apply(x, 0, 2, |v, m, s| v * s + m)
    }

    fn apply(&self, x: &mut Tensor, first: usize, width: usize, f: impl Fn(f64, f64, f64) -> f64) -> Result<(), FeatureError> {
        if x.shape().last() != Some(&width) {
            return Err(FeatureError::Mismatch(alloc::format!(
                "expected trailing axis of {width}, got shape {:?}",
                x.shape()
            )));
        }
        for cell in x.data_mut().chunks_exact_mut(width) {
            for (c, v) in cell.iter_mut().enumerate() {
                *v = f(*v, self.mean[first + c], self.std[first + c]);
            }
        }
        Ok(())
    }
}
