//! One-step supervised training of a per-reach surrogate.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{build_window, FeatureError, NormStats, N_CHANNELS};
use crate::geometry::ForcingSeries;
use crate::hydro::StateField;
use crate::model::{self, ModelConfig, ModelError, ModelParams, OUT_CHANNELS};
use crate::optim::{adamw_step, AdamWConfig, AdamWState};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("series of {hours} hours is too short for a {seq_len}-hour window plus target")]
    SeriesTooShort { hours: usize, seq_len: usize },
    #[error("split leaves no training samples ({samples} samples, val_fraction {val_fraction})")]
    EmptySplit { samples: usize, val_fraction: f64 },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("loss became non-finite in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("prediction and target shapes differ: {0:?} vs {1:?}")]
    Shape(Vec<usize>, Vec<usize>),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Weight of the first-difference spatial smoothness penalty.
    pub smoothness_weight: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            lr: 2e-4,
            batch_size: 16,
            smoothness_weight: 0.0,
            val_fraction: 0.2,
            seed: 0,
            weight_decay: AdamWConfig::default().weight_decay,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::Config(String::from("epochs and batch_size must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(TrainError::Config(format!("val_fraction {} outside [0, 1)", self.val_fraction)));
        }
        if self.smoothness_weight.is_nan() || self.smoothness_weight < 0.0 || self.lr.is_nan() || self.lr <= 0.0 {
            return Err(TrainError::Config(String::from("lr must be positive and smoothness weight non-negative")));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// History window `[L, N, 8]` and next-hour target `[N, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub window: Tensor,
    pub target: Tensor,
    /// Hour of the target within its source series.
    pub t_end: usize,
}

/// All windows of one series: targets at hours `L ..= T − 1`.
pub fn make_windows(
    state: &StateField,
    static4: &Tensor,
    forcings: &ForcingSeries,
    seq_len: usize,
) -> Result<Vec<Sample>, TrainError> {
    let hours = state.hours().min(forcings.len());
    if hours < seq_len + 1 {
        return Err(TrainError::SeriesTooShort { hours, seq_len });
    }
    (seq_len..hours)
        .map(|t_end| {
            let window = build_window(state, static4, forcings, t_end, seq_len)?;
            let mut target = Vec::with_capacity(state.n_xs * 2);
            for (h, q) in state.h_row(t_end).iter().zip(state.q_row(t_end)) {
                target.extend_from_slice(&[*h, *q]);
            }
            Ok(Sample {
                window,
                target: Tensor::from_vec(&[state.n_xs, 2], target).expect("two targets per section"),
                t_end,
            })
        })
        .collect()
}

/// Temporal split: the final `val_fraction` of samples, in order, is validation.
pub fn split_train_val(mut samples: Vec<Sample>, val_fraction: f64) -> Result<(Vec<Sample>, Vec<Sample>), TrainError> {
    let n = samples.len();
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(TrainError::Config(format!("val_fraction {val_fraction} outside [0, 1)")));
    }
    let mut n_val = libm::round(n as f64 * val_fraction) as usize;
    if val_fraction > 0.0 && n_val == 0 {
        n_val = 1;
    }
    if n < 2 || n_val >= n {
        return Err(TrainError::EmptySplit { samples: n, val_fraction });
    }
    let val = samples.split_off(n - n_val);
    Ok((samples, val))
}

/// MSE plus `λ·mean_(b,c) Σ_n (pred[n+1] − pred[n])²`.
pub fn loss(pred: &Tensor, target: &Tensor, smoothness: f64) -> Result<f64, TrainError> {
    loss_and_grad(pred, target, smoothness, false).map(|(l, _)| l)
}

/// Loss and, when requested, its gradient with respect to `pred`.
pub fn loss_and_grad(
    pred: &Tensor,
    target: &Tensor,
    smoothness: f64,
    want_grad: bool,
) -> Result<(f64, Option<Tensor>), TrainError> {
    if pred.shape() != target.shape() || pred.shape().len() != 3 || pred.shape()[2] != OUT_CHANNELS {
        return Err(TrainError::Shape(pred.shape().into(), target.shape().into()));
    }
    let (batch, n) = (pred.shape()[0], pred.shape()[1]);
    let count = pred.len() as f64;
    let (p, t) = (pred.data(), target.data());
    let mut grad = want_grad.then(|| Tensor::zeros(pred.shape()));

    let mut mse = 0.0;
    for (i, (a, b)) in p.iter().zip(t).enumerate() {
        let d = a - b;
        mse += d * d;
        if let Some(g) = grad.as_mut() {
            g.data_mut()[i] = 2.0 * d / count;
        }
    }
    mse /= count;

    let mut smooth = 0.0;
    if smoothness > 0.0 && n > 1 {
        let groups = (batch * OUT_CHANNELS) as f64;
        for b in 0..batch {
            for c in 0..OUT_CHANNELS {
                for i in 0..n - 1 {
                    let (lo, hi) = ((b * n + i) * OUT_CHANNELS + c, (b * n + i + 1) * OUT_CHANNELS + c);
                    let d = p[hi] - p[lo];
                    smooth += d * d;
                    if let Some(g) = grad.as_mut() {
                        let gd = smoothness * 2.0 * d / groups;
                        g.data_mut()[hi] += gd;
                        g.data_mut()[lo] -= gd;
                    }
                }
            }
        }
        smooth /= groups;
    }
    Ok((mse + smoothness * smooth, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

/// Parameters, normalisation and training history of one reach model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub stats: NormStats,
    pub report: TrainReport,
}

/// Wall-clock source; the core crate has none of its own.
pub trait Clock {
    fn seconds(&self) -> Option<f64>;
}

pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> Option<f64> {
        None
    }
}

/// Normalises a sample in place with fitted statistics.
pub fn normalize_sample(sample: &mut Sample, stats: &NormStats) -> Result<(), TrainError> {
    stats.normalize(&mut sample.window)?;
    stats.normalize_state(&mut sample.target)?;
    Ok(())
}

fn stack(samples: &[&Sample]) -> (Tensor, Tensor) {
    let ws = samples[0].window.shape().to_vec();
    let ts = samples[0].target.shape().to_vec();
    let mut w = Vec::with_capacity(samples.len() * samples[0].window.len());
    let mut t = Vec::with_capacity(samples.len() * samples[0].target.len());
    for s in samples {
        w.extend_from_slice(s.window.data());
        t.extend_from_slice(s.target.data());
    }
    let mut wshape = alloc::vec![samples.len()];
    wshape.extend(ws);
    let mut tshape = alloc::vec![samples.len()];
    tshape.extend(ts);
    (
        Tensor::from_vec(&wshape, w).expect("stacked windows"),
        Tensor::from_vec(&tshape, t).expect("stacked targets"),
    )
}

/// Mean loss of `params` over normalised samples, evaluated in chunks.
pub fn evaluate_loss(
    cfg: &ModelConfig,
    params: &ModelParams,
    samples: &[Sample],
    x_coord: &[f64],
    smoothness: f64,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for chunk in samples.chunks(64) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (w, t) = stack(&refs);
        let pred = model::forward(cfg, params, &w, x_coord)?;
        total += loss(&pred, &t, smoothness)? * chunk.len() as f64;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// One-step MSE of predicting the last history state, on normalised samples.
pub fn persistence_loss(samples: &[Sample]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for s in samples {
        let shape = s.window.shape();
        let (seq, n) = (shape[0], shape[1]);
        let last = &s.window.data()[(seq - 1) * n * N_CHANNELS..];
        for i in 0..n {
            for c in 0..OUT_CHANNELS {
                let d = last[i * N_CHANNELS + c] - s.target.data()[i * OUT_CHANNELS + c];
                total += d * d;
                count += 1;
            }
        }
    }
    total / count.max(1) as f64
}

/// Epoch-by-epoch trainer over a fixed train/validation split.
pub struct Trainer {
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    x_coord: Vec<f64>,
    stats: NormStats,
    train: Vec<Sample>,
    val: Vec<Sample>,
    params: ModelParams,
    best: Option<(f64, usize, ModelParams)>,
    opt: AdamWState,
    shuffle_rng: ChaCha8Rng,
    report: TrainReport,
}

impl Trainer {
    /// Splits `samples` (physical units, temporal order), fits normalisation
    /// on the training part only and initialises parameters from the seed.
    pub fn new(
        model_cfg: ModelConfig,
        cfg: TrainConfig,
        samples: Vec<Sample>,
        x_coord: Vec<f64>,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        model_cfg.validate()?;
        let (mut train, mut val) = split_train_val(samples, cfg.val_fraction)?;
        let stats = NormStats::fit(train.iter().map(|s| &s.window))?;
        for s in train.iter_mut().chain(val.iter_mut()) {
            normalize_sample(s, &stats)?;
        }
        let n_xs = x_coord.len();
        let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let params = ModelParams::init(&model_cfg, n_xs, &mut init_rng)?;
        let opt = AdamWState::new(params.tensors());
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        shuffle_rng.set_stream(1);
        Ok(Self {
            model_cfg,
            cfg,
            x_coord,
            stats,
            train,
            val,
            params,
            best: None,
            opt,
            shuffle_rng,
            report: TrainReport::default(),
        })
    }

    pub fn stats(&self) -> &NormStats {
        &self.stats
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn train_samples(&self) -> &[Sample] {
        &self.train
    }

    pub fn val_samples(&self) -> &[Sample] {
        &self.val
    }

    pub fn epochs_done(&self) -> usize {
        self.report.epochs.len()
    }

    pub fn val_loss(&self, params: &ModelParams) -> Result<Option<f64>, TrainError> {
        if self.val.is_empty() {
            return Ok(None);
        }
        evaluate_loss(&self.model_cfg, params, &self.val, &self.x_coord, self.cfg.smoothness_weight).map(Some)
    }

    pub fn run_epoch(&mut self, clock: &dyn Clock) -> Result<EpochRecord, TrainError> {
        let start = clock.seconds();
        let epoch = self.epochs_done() + 1;
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let opt_cfg = self.cfg.optimizer();
        let mut total = 0.0;
        for batch in order.chunks(self.cfg.batch_size) {
            let refs: Vec<&Sample> = batch.iter().map(|&i| &self.train[i]).collect();
            let (w, t) = stack(&refs);
            let (pred, cache) = model::forward_cached(&self.model_cfg, &self.params, &w, &self.x_coord)?;
            let (l, grad) = loss_and_grad(&pred, &t, self.cfg.smoothness_weight, true)?;
            if !l.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            total += l * batch.len() as f64;
            let grads = model::backward(&self.model_cfg, &self.params, &cache, &grad.expect("gradient requested"))?;
            let mut params = self.params.tensors_mut();
            adamw_step(&mut params, &grads.tensors(), &mut self.opt, &opt_cfg);
        }
        let train_loss = total / self.train.len() as f64;
        let val_loss = self.val_loss(&self.params)?;
        if !train_loss.is_finite() || val_loss.is_some_and(|v| !v.is_finite()) || !self.params.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        if let Some(v) = val_loss {
            if self.best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                self.best = Some((v, epoch, self.params.clone()));
            }
        }
        let seconds = match (start, clock.seconds()) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds,
        };
        self.report.epochs.push(record.clone());
        Ok(record)
    }

    /// Best-validation parameters, or the final ones without a validation split.
    pub fn finish(mut self) -> TrainedModel {
        let params = match self.best.take() {
            Some((_, epoch, params)) => {
                self.report.best_epoch = epoch;
                params
            }
            None => {
                self.report.best_epoch = self.epochs_done();
                self.params
            }
        };
        TrainedModel {
            config: self.model_cfg,
            params,
            stats: self.stats,
            report: self.report,
        }
    }
}

/// Full training run: `cfg.epochs` epochs, then best-checkpoint selection.
pub fn train_reach(
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    samples: Vec<Sample>,
    x_coord: Vec<f64>,
    clock: &dyn Clock,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainedModel, TrainError> {
    let epochs = cfg.epochs;
    let mut trainer = Trainer::new(model_cfg, cfg, samples, x_coord)?;
    for _ in 0..epochs {
        let rec = trainer.run_epoch(clock)?;
        on_epoch(&rec);
    }
    Ok(trainer.finish())
}
