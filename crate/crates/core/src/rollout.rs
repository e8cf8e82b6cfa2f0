//! Closed-loop forecasting: each prediction re-enters the history window.

use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::features::{build_window, ChannelMask, FeatureError, N_CHANNELS};
use crate::geometry::{static_features, ForcingSeries, Reach};
use crate::hydro::{HydroError, StateField};
use crate::model::{self, ModelError};
use crate::train::TrainedModel;
use crate::tensor::{ShapeError, Tensor};

/// Stage more than this far above bank-top is treated as blow-up.
pub const MAX_ABOVE_BANK_M: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RolloutError {
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("warmup has {got} hours, model needs {need}")]
    Warmup { got: usize, need: usize },
    #[error("forcings cover {got} hours, rollout needs {need}")]
    ForcingsTooShort { got: usize, need: usize },
    #[error("model was trained with channel mask {model:#010b}, rollout requested {requested:#010b}")]
    MaskMismatch { model: u8, requested: u8 },
    #[error("reach has {reach} sections, warmup has {warmup}")]
    Sections { reach: usize, warmup: usize },
    #[error("unstable at step {step}, section {section}: {detail}")]
    Unstable { step: usize, section: usize, detail: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hydro(#[from] HydroError),
    #[error(transparent)]
    Tensor(#[from] ShapeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub warmup: usize,
    pub reach_id: String,
    /// Mask the caller expects the model to carry; checked when present.
    pub mask: Option<ChannelMask>,
}

impl RolloutConfig {
    pub fn new(horizon: usize, warmup: usize, reach_id: impl Into<String>) -> Self {
        Self {
            horizon,
            warmup,
            reach_id: reach_id.into(),
            mask: None,
        }
    }
}

/// Rolls `model` forward `cfg.horizon` hours from the warmup truth.
///
/// The result holds the warmup rows followed by the predicted rows.
pub fn rollout(
    model: &TrainedModel,
    reach: &Reach,
    forcings: &ForcingSeries,
    warmup: &StateField,
    cfg: &RolloutConfig,
) -> Result<StateField, RolloutError> {
    rollout_observed(model, reach, forcings, warmup, cfg, &mut |_, _| {})
}

/// As [`rollout`], handing each physical-unit input window to `observe`.
pub fn rollout_observed(
    model: &TrainedModel,
    reach: &Reach,
    forcings: &ForcingSeries,
    warmup: &StateField,
    cfg: &RolloutConfig,
    observe: &mut dyn FnMut(usize, &Tensor),
) -> Result<StateField, RolloutError> {
    let seq = model.config.seq_len;
    if cfg.horizon == 0 {
        return Err(RolloutError::ZeroHorizon);
    }
    if let Some(mask) = cfg.mask {
        if mask != model.config.mask {
            return Err(RolloutError::MaskMismatch {
                model: model.config.mask.bits(),
                requested: mask.bits(),
            });
        }
    }
    let warm = cfg.warmup.max(seq);
    if warmup.hours() < warm {
        return Err(RolloutError::Warmup {
            got: warmup.hours(),
            need: warm,
        });
    }
    let n = reach.len();
    if warmup.n_xs != n {
        return Err(RolloutError::Sections { reach: n, warmup: warmup.n_xs });
    }
    let need = warm + cfg.horizon;
    if forcings.len() < need {
        return Err(RolloutError::ForcingsTooShort {
            got: forcings.len(),
            need,
        });
    }

    let static4 = static_features(reach);
    let z_bank = reach.z_bank();
    let mut state = warmup.slice(0, warm);
    state.reach_id = cfg.reach_id.clone();
    let mut row_h = alloc::vec![0.0; n];
    let mut row_q = alloc::vec![0.0; n];
    for step in 0..cfg.horizon {
        let t = warm + step;
        let mut window = build_window(&state, &static4, forcings, t, seq)?;
        observe(step, &window);
        model.stats.normalize(&mut window)?;
        let batched = Tensor::from_vec(&[1, seq, n, N_CHANNELS], window.into_data())?;
        let out = model::forward(&model.config, &model.params, &batched, &reach.x_coord)?;
        let mut pred = Tensor::from_vec(&[n, 2], out.into_data())?;
        model.stats.denormalize_state(&mut pred)?;
        for i in 0..n {
            let (h, q) = (pred.get(&[i, 0]), pred.get(&[i, 1]));
            if !h.is_finite() || !q.is_finite() {
                return Err(RolloutError::Unstable {
                    step,
                    section: i,
                    detail: alloc::format!("non-finite prediction h={h}, q={q}"),
                });
            }
            if h > z_bank[i] + MAX_ABOVE_BANK_M {
                return Err(RolloutError::Unstable {
                    step,
                    section: i,
                    detail: alloc::format!("stage {h:.3} m exceeds bank-top {:.3} m by more than {MAX_ABOVE_BANK_M} m", z_bank[i]),
                });
            }
            row_h[i] = h;
            row_q[i] = q;
        }
        state.push_row(&row_h, &row_q);
    }
    Ok(state)
}
