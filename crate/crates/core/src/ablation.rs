//! Paired experiments: channel ablation and training-volume ablation.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::features::{Channel, ChannelMask, FeatureError};
use crate::geometry::{static_features, ForcingSeries, Reach};
use crate::hydro::StateField;
use crate::metrics::{evaluate_reach, peak_stage_error, MetricsError, MetricsReport};
use crate::model::ModelConfig;
use crate::rollout::{rollout, RolloutConfig, RolloutError};
use crate::train::{make_windows, train_reach, Clock, TrainConfig, TrainError, TrainedModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AblationError {
    #[error("no training series given")]
    NoData,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// One contiguous period of truth with its forcings.
#[derive(Debug, Clone, Copy)]
pub struct Series<'a> {
    pub truth: &'a StateField,
    pub forcings: &'a ForcingSeries,
}

/// Held-out rollout shared by every arm of an experiment.
#[derive(Debug, Clone)]
pub struct Evaluation<'a> {
    pub series: Series<'a>,
    /// First hour of the rollout window within `series`.
    pub start: usize,
    pub horizon: usize,
}

impl Evaluation<'_> {
    fn window(&self, warmup: usize) -> (StateField, ForcingSeries) {
        let len = warmup + self.horizon;
        (
            self.series.truth.slice(self.start, len),
            self.series.forcings.slice(self.start, len),
        )
    }
}

/// Trained model, its rollout and the rollout's scores.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub model: TrainedModel,
    pub prediction: StateField,
    pub truth: StateField,
    pub report: MetricsReport,
}

/// Trains on `data` and scores a closed-loop rollout over `eval`.
pub fn run_pipeline(
    reach: &Reach,
    data: &[Series<'_>],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    eval: &Evaluation<'_>,
    clock: &dyn Clock,
) -> Result<PipelineRun, AblationError> {
    if data.is_empty() {
        return Err(AblationError::NoData);
    }
    let st = static_features(reach);
    let mut samples = Vec::new();
    for s in data {
        samples.extend(make_windows(s.truth, &st, s.forcings, model_cfg.seq_len)?);
    }
    let model = train_reach(
        model_cfg.clone(),
        train_cfg.clone(),
        samples,
        reach.x_coord.clone(),
        clock,
        |_| {},
    )?;
    let warm = model_cfg.seq_len;
    let (truth, forcings) = eval.window(warm);
    let mut cfg = RolloutConfig::new(eval.horizon, warm, truth.reach_id.clone());
    cfg.mask = Some(model_cfg.mask);
    let prediction = rollout(&model, reach, &forcings, &truth.slice(0, warm), &cfg)?;
    let report = evaluate_reach(&prediction, &truth, warm)?;
    Ok(PipelineRun {
        model,
        prediction,
        truth,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAblation {
    pub dropped: Vec<Channel>,
    pub full: MetricsReport,
    pub ablated: MetricsReport,
}

impl FeatureAblation {
    /// Ablated stage RMSE over full-model stage RMSE.
    pub fn stage_rmse_ratio(&self) -> f64 {
        self.ablated.stage.rmse / self.full.stage.rmse
    }
}

/// Trains the full model and one without `drop`, same seed and data.
pub fn ablate_features(
    drop: &[Channel],
    reach: &Reach,
    data: &[Series<'_>],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    eval: &Evaluation<'_>,
    clock: &dyn Clock,
) -> Result<FeatureAblation, AblationError> {
    let mask = ChannelMask::without(drop)?;
    let full = run_pipeline(reach, data, &model_cfg.clone().with_mask(ChannelMask::all()), train_cfg, eval, clock)?;
    let ablated = if mask == ChannelMask::all() {
        full.report.clone()
    } else {
        run_pipeline(reach, data, &model_cfg.clone().with_mask(mask), train_cfg, eval, clock)?.report
    };
    Ok(FeatureAblation {
        dropped: mask.dropped(),
        full: full.report,
        ablated,
    })
}

/// A training-set definition for the data-volume experiment.
#[derive(Debug, Clone)]
pub struct Arm<'a> {
    pub name: String,
    pub data: Vec<Series<'a>>,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub name: String,
    pub report: MetricsReport,
    /// `|max(pred H) − max(true H)|` at the gauge section over the rollout.
    pub peak_stage_error: f64,
}

/// Trains each arm and scores all of them on the same rollout.
pub fn ablate_data_volume(
    arms: &[Arm<'_>],
    reach: &Reach,
    model_cfg: &ModelConfig,
    eval: &Evaluation<'_>,
    gauge: usize,
    clock: &dyn Clock,
) -> Result<Vec<ArmResult>, AblationError> {
    arms.iter()
        .map(|arm| {
            let run = run_pipeline(reach, &arm.data, model_cfg, &arm.train, eval, clock)?;
            let warm = model_cfg.seq_len;
            let end = run.truth.hours();
            Ok(ArmResult {
                name: arm.name.clone(),
                peak_stage_error: peak_stage_error(&run.prediction, &run.truth, gauge, warm, end),
                report: run.report,
            })
        })
        .collect()
}
