//! Self-describing model checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use reach_surrogate_core::features::{channel_layout, ChannelMask, NormStats, N_CHANNELS};
use reach_surrogate_core::model::{ModelConfig, ModelParams};
use reach_surrogate_core::train::{TrainConfig, TrainReport, TrainedModel};

use crate::container::{Container, ContainerError};

pub const KIND: &str = "checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("checkpoint metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("checkpoint describes an incompatible model: {0}")]
    Layout(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    reach_id: String,
    n_xs: usize,
    model: ModelConfig,
    /// Canonical channel names, then the subset the encoder sees.
    channel_layout: Vec<String>,
    input_channels: Vec<String>,
    norm_count: u64,
    seed: u64,
    train: TrainConfig,
    report: TrainReport,
    /// Parameters were rounded to single precision before saving.
    float32: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub reach_id: String,
    pub n_xs: usize,
    pub train: TrainConfig,
    pub model: TrainedModel,
    pub float32: bool,
}

impl Checkpoint {
    pub fn new(reach_id: impl Into<String>, n_xs: usize, train: TrainConfig, model: TrainedModel) -> Self {
        Self {
            reach_id: reach_id.into(),
            n_xs,
            train,
            model,
            float32: false,
        }
    }

    /// Rounds every parameter through `f32`; the file still stores `f64`.
    pub fn round_to_f32(&mut self) {
        for t in self.model.params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        self.float32 = true;
    }

    pub fn to_container(&self) -> Result<Container, CheckpointError> {
        let cfg = &self.model.config;
        let meta = Meta {
            reach_id: self.reach_id.clone(),
            n_xs: self.n_xs,
            model: cfg.clone(),
            channel_layout: channel_layout().iter().map(|c| c.name().to_string()).collect(),
            input_channels: cfg.mask.channels().iter().map(|c| c.name().to_string()).collect(),
            norm_count: self.model.stats.count,
            seed: self.train.seed,
            train: self.train.clone(),
            report: self.model.report.clone(),
            float32: self.float32,
        };
        let mut c = Container::new(KIND, VERSION, serde_json::to_value(&meta)?);
        c.push("norm.mean", &[N_CHANNELS], &self.model.stats.mean);
        c.push("norm.std", &[N_CHANNELS], &self.model.stats.std);
        let params = &self.model.params;
        for (name, t) in params.names().into_iter().zip(params.tensors()) {
            c.push(name, t.shape(), t.data());
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self, CheckpointError> {
        let meta: Meta = serde_json::from_value(c.header.meta.clone())?;
        let layout: Vec<String> = channel_layout().iter().map(|ch| ch.name().to_string()).collect();
        if meta.channel_layout != layout {
            return Err(CheckpointError::Layout(format!(
                "channel layout {:?} differs from this build's {:?}",
                meta.channel_layout, layout
            )));
        }
        let mask = ChannelMask::from_bits(meta.model.mask.bits())
            .map_err(|e| CheckpointError::Layout(e.to_string()))?;
        let kept: Vec<String> = mask.channels().iter().map(|ch| ch.name().to_string()).collect();
        if kept != meta.input_channels {
            return Err(CheckpointError::Layout(format!(
                "mask keeps {kept:?} but the header lists {:?}",
                meta.input_channels
            )));
        }
        meta.model
            .validate()
            .map_err(|e| CheckpointError::Layout(e.to_string()))?;

        let mut stats = NormStats {
            count: meta.norm_count,
            ..NormStats::default()
        };
        stats.mean.copy_from_slice(fixed(c, "norm.mean")?);
        stats.std.copy_from_slice(fixed(c, "norm.std")?);

        let mut params = ModelParams::zeros(&meta.model, meta.n_xs);
        let names = params.names();
        for (name, t) in names.iter().zip(params.tensors_mut()) {
            let (shape, data) = c.get(name)?;
            if shape != t.shape() {
                return Err(CheckpointError::Layout(format!(
                    "tensor {name} has shape {shape:?}, expected {:?}",
                    t.shape()
                )));
            }
            t.data_mut().copy_from_slice(data);
        }
        if c.header.tensors.len() != names.len() + 2 {
            return Err(CheckpointError::Layout(format!(
                "{} tensors stored, model has {}",
                c.header.tensors.len() - 2,
                names.len()
            )));
        }
        Ok(Self {
            reach_id: meta.reach_id,
            n_xs: meta.n_xs,
            train: meta.train,
            model: TrainedModel {
                config: meta.model,
                params,
                stats,
                report: meta.report,
            },
            float32: meta.float32,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        Ok(self.to_container()?.save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_container(&Container::load(path, KIND, VERSION)?)
    }
}

fn fixed<'a>(c: &'a Container, name: &str) -> Result<&'a [f64], CheckpointError> {
    let (shape, data) = c.get(name)?;
    if shape != [N_CHANNELS] {
        return Err(CheckpointError::Layout(format!("{name} has shape {shape:?}")));
    }
    Ok(data)
}
