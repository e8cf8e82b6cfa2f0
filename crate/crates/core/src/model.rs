//! GRU + 1-D Fourier neural operator surrogate for one reach.
//!
//! Pipeline for a normalised window `[B, L, N, 8]`:
//!
//! 1. keep the masked channels and append the normalised coordinate of each
//!    cross-section as an extra input (`C + 1` features);
//! 2. lift every `(b, l, n)` cell to `hidden` with a linear encoder;
//! 3. run a GRU along `L` independently for every `(b, n)` and keep the last
//!    hidden state;
//! 4. apply `fno_blocks` blocks of `GELU(spectral_conv(v) + v·W + b)` along
//!    the cross-section axis;
//! 5. decode each cross-section to normalised `(H, Q)`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::{ChannelMask, N_CHANNELS};
use crate::layers::activation::{gelu, gelu_grad};
use crate::layers::gru::{GruCache, GruWeights};
use crate::layers::linear::{backward_rows, forward_rows};
use crate::layers::spectral::{SpectralBasis, SpectralCache, SpectralWeights};
use crate::tensor::{ShapeError, Tensor};

pub const OUT_CHANNELS: usize = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("reach has {0} cross-sections; at least 3 are required")]
    TooFewSections(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Tensor(#[from] ShapeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    pub max_modes: usize,
    pub seq_len: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub fno_blocks: usize,
    pub mask: ChannelMask,
    /// Decoder output is an increment on the last history state.
    #[serde(default)]
    pub residual: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 96,
            max_modes: 48,
            seq_len: 12,
            in_channels: N_CHANNELS,
            out_channels: OUT_CHANNELS,
            fno_blocks: 1,
            mask: ChannelMask::all(),
            residual: true,
        }
    }
}

impl ModelConfig {
    pub fn with_mask(mut self, mask: ChannelMask) -> Self {
        self.mask = mask;
        self.in_channels = mask.count();
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.hidden == 0 || self.max_modes == 0 || self.seq_len == 0 || self.fno_blocks == 0 {
            return bad(format!("hidden, max_modes, seq_len and fno_blocks must be positive: {self:?}"));
        }
        if self.in_channels != self.mask.count() {
            return bad(format!(
                "in_channels {} disagrees with mask of {} channels",
                self.in_channels,
                self.mask.count()
            ));
        }
        if self.out_channels != OUT_CHANNELS {
            return bad(format!("out_channels must be {OUT_CHANNELS}"));
        }
        Ok(())
    }

    /// Encoder input width: kept channels plus the appended coordinate.
    pub fn encoder_inputs(&self) -> usize {
        self.in_channels + 1
    }
}

/// Retained Fourier modes for a reach of `n_xs` sections.
pub fn mode_count(n_xs: usize, max_modes: usize) -> usize {
    max_modes.min(n_xs / 2 + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnoBlock {
    pub spectral: SpectralWeights,
    pub skip_w: Tensor,
    pub skip_b: Tensor,
}

/// Every learnable tensor of the surrogate. Also used as the gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub enc_w: Tensor,
    pub enc_b: Tensor,
    pub gru: GruWeights,
    pub fno: Vec<FnoBlock>,
    pub dec_w: Tensor,
    pub dec_b: Tensor,
}

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig, n_xs: usize) -> Self {
        let h = cfg.hidden;
        let modes = mode_count(n_xs, cfg.max_modes);
        Self {
            enc_w: Tensor::zeros(&[cfg.encoder_inputs(), h]),
            enc_b: Tensor::zeros(&[h]),
            gru: GruWeights::zeros(h, h),
            fno: (0..cfg.fno_blocks)
                .map(|_| FnoBlock {
                    spectral: SpectralWeights::zeros(modes, h, h),
                    skip_w: Tensor::zeros(&[h, h]),
                    skip_b: Tensor::zeros(&[h]),
                })
                .collect(),
            dec_w: Tensor::zeros(&[h, OUT_CHANNELS]),
            dec_b: Tensor::zeros(&[OUT_CHANNELS]),
        }
    }

    /// Uniform `±1/√fan_in` for linear and GRU weights, complex Gaussian
    /// scaled by `1/hidden` for spectral weights.
    pub fn init<R: Rng>(cfg: &ModelConfig, n_xs: usize, rng: &mut R) -> Result<Self, ModelError> {
        cfg.validate()?;
        if n_xs < 3 {
            return Err(ModelError::TooFewSections(n_xs));
        }
        let h = cfg.hidden;
        let modes = mode_count(n_xs, cfg.max_modes);
        let mut p = Self::zeros(cfg, n_xs);
        uniform_fill(&mut p.enc_w, cfg.encoder_inputs(), rng);
        uniform_fill(&mut p.enc_b, cfg.encoder_inputs(), rng);
        p.gru = GruWeights::init(h, h, rng);
        for block in &mut p.fno {
            block.spectral = SpectralWeights::init(modes, h, h, rng);
            uniform_fill(&mut block.skip_w, h, rng);
            uniform_fill(&mut block.skip_b, h, rng);
        }
        uniform_fill(&mut p.dec_w, h, rng);
        uniform_fill(&mut p.dec_b, h, rng);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    pub fn hidden(&self) -> usize {
        self.enc_b.len()
    }

    pub fn modes(&self) -> usize {
        self.fno.first().map_or(0, |b| b.spectral.modes())
    }

    /// Stable names in a fixed order, matching [`ModelParams::tensors`].
    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["encoder.w", "encoder.b", "gru.w_x", "gru.u_zr", "gru.u_h", "gru.b"]
            .iter()
            .map(|s| String::from(*s))
            .collect();
        for i in 0..self.fno.len() {
            for part in ["spectral_re", "spectral_im", "skip_w", "skip_b"] {
                names.push(format!("fno{i}.{part}"));
            }
        }
        names.push(String::from("decoder.w"));
        names.push(String::from("decoder.b"));
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.enc_w, &self.enc_b, &self.gru.w_x, &self.gru.u_zr, &self.gru.u_h, &self.gru.b];
        for b in &self.fno {
            v.extend([&b.spectral.re, &b.spectral.im, &b.skip_w, &b.skip_b]);
        }
        v.extend([&self.dec_w, &self.dec_b]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![
            &mut self.enc_w,
            &mut self.enc_b,
            &mut self.gru.w_x,
            &mut self.gru.u_zr,
            &mut self.gru.u_h,
            &mut self.gru.b,
        ];
        for b in &mut self.fno {
            v.extend([&mut b.spectral.re, &mut b.spectral.im, &mut b.skip_w, &mut b.skip_b]);
        }
        v.extend([&mut self.dec_w, &mut self.dec_b]);
        v
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.names().into_iter().zip(self.tensors()).collect()
    }

    /// Rebuilds parameters from named tensors, checking every name and shape
    /// against the layout implied by `cfg` and `n_xs`.
    pub fn from_named(cfg: &ModelConfig, n_xs: usize, named: Vec<(String, Tensor)>) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut p = Self::zeros(cfg, n_xs);
        let names = p.names();
        if names.len() != named.len() {
            return Err(ModelError::Shape(format!(
                "expected {} tensors, found {}",
                names.len(),
                named.len()
            )));
        }
        for ((want, slot), (name, t)) in names.iter().zip(p.tensors_mut()).zip(named) {
            if *want != name {
                return Err(ModelError::Shape(format!("expected tensor {want}, found {name}")));
            }
            t.expect_shape(slot.shape())?;
            *slot = t;
        }
        Ok(p)
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    fn check(&self, cfg: &ModelConfig, n_xs: usize) -> Result<(), ModelError> {
        let reference = Self::zeros(cfg, n_xs);
        for ((name, a), b) in self.named_tensors().into_iter().zip(reference.tensors()) {
            if a.shape() != b.shape() {
                return Err(ModelError::Shape(format!(
                    "{name}: shape {:?}, config implies {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        if self.fno.len() != cfg.fno_blocks {
            return Err(ModelError::Shape(format!(
                "{} FNO blocks, config has {}",
                self.fno.len(),
                cfg.fno_blocks
            )));
        }
        Ok(())
    }
}

fn uniform_fill<R: Rng>(t: &mut Tensor, fan_in: usize, rng: &mut R) {
    let bound = 1.0 / libm::sqrt(fan_in as f64);
    for v in t.data_mut() {
        *v = rng.random_range(-bound..bound);
    }
}

/// Activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    n_xs: usize,
    /// Encoder input, `[L, B·N, C+1]` time-major.
    enc_in: Vec<f64>,
    /// Encoder output (GRU input), `[L, B·N, H]`.
    enc_out: Vec<f64>,
    gru: GruCache,
    /// Input of each FNO block, `[B·N, H]`; the last entry is the decoder input.
    fno_in: Vec<Vec<f64>>,
    fno_pre: Vec<Vec<f64>>,
    spectral: Vec<SpectralCache>,
    basis: SpectralBasis,
}

impl ForwardCache {
    /// Final GRU state, `[B, N, H]`.
    pub fn gru_output(&self) -> &[f64] {
        &self.fno_in[0]
    }

    /// Output of the last FNO block, `[B, N, H]`.
    pub fn fno_output(&self) -> &[f64] {
        self.fno_in.last().expect("decoder input")
    }
}

/// Normalised prediction `[B, N, 2]` for a normalised window `[B, L, N, 8]`.
pub fn forward(cfg: &ModelConfig, params: &ModelParams, window: &Tensor, x_coord: &[f64]) -> Result<Tensor, ModelError> {
    Ok(forward_cached(cfg, params, window, x_coord)?.0)
}

pub fn forward_cached(
    cfg: &ModelConfig,
    params: &ModelParams,
    window: &Tensor,
    x_coord: &[f64],
) -> Result<(Tensor, ForwardCache), ModelError> {
    cfg.validate()?;
    let s = window.shape();
    if s.len() != 4 || s[1] != cfg.seq_len || s[3] != N_CHANNELS {
        return Err(ModelError::Shape(format!(
            "window shape {s:?}, expected [B, {}, N, {N_CHANNELS}]",
            cfg.seq_len
        )));
    }
    let (batch, seq, n) = (s[0], s[1], s[2]);
    if n < 3 {
        return Err(ModelError::TooFewSections(n));
    }
    if x_coord.len() != n {
        return Err(ModelError::Shape(format!("{} coordinates for {n} sections", x_coord.len())));
    }
    params.check(cfg, n)?;

    let h = cfg.hidden;
    let d_in = cfg.encoder_inputs();
    let rows = batch * n;
    let kept: Vec<usize> = cfg.mask.channels().iter().map(|c| c.index()).collect();

    let mut enc_in = Vec::with_capacity(seq * rows * d_in);
    let w = window.data();
    for l in 0..seq {
        for b in 0..batch {
            for (i, &x) in x_coord.iter().enumerate() {
                let cell = &w[((b * seq + l) * n + i) * N_CHANNELS..][..N_CHANNELS];
                enc_in.extend(kept.iter().map(|&c| cell[c]));
                enc_in.push(x);
            }
        }
    }
    let enc_out = forward_rows(&enc_in, seq * rows, d_in, h, params.enc_w.data(), params.enc_b.data());
    let (h_last, gru_cache) = params.gru.forward_slices(&enc_out, seq, rows);

    let basis = SpectralBasis::new(n, params.modes()).map_err(|e| ModelError::Shape(e.to_string()))?;
    let mut fno_in = vec![h_last];
    let mut fno_pre = Vec::with_capacity(cfg.fno_blocks);
    let mut spectral = Vec::with_capacity(cfg.fno_blocks);
    for block in &params.fno {
        let v = fno_in.last().expect("block input");
        let (mut pre, sc) = block.spectral.forward_slices(v, batch, n, &basis);
        let skip = forward_rows(v, rows, h, h, block.skip_w.data(), block.skip_b.data());
        for (p, k) in pre.iter_mut().zip(&skip) {
            *p += k;
        }
        let act = pre.iter().map(|&x| gelu(x)).collect();
        fno_pre.push(pre);
        spectral.push(sc);
        fno_in.push(act);
    }
    let mut out = forward_rows(
        fno_in.last().expect("decoder input"),
        rows,
        h,
        OUT_CHANNELS,
        params.dec_w.data(),
        params.dec_b.data(),
    );
    if cfg.residual {
        for b in 0..batch {
            let last = &w[(b * seq + seq - 1) * n * N_CHANNELS..][..n * N_CHANNELS];
            for i in 0..n {
                for c in 0..OUT_CHANNELS {
                    out[(b * n + i) * OUT_CHANNELS + c] += last[i * N_CHANNELS + c];
                }
            }
        }
    }
    let cache = ForwardCache {
        batch,
        n_xs: n,
        enc_in,
        enc_out,
        gru: gru_cache,
        fno_in,
        fno_pre,
        spectral,
        basis,
    };
    Ok((Tensor::from_vec(&[batch, n, OUT_CHANNELS], out)?, cache))
}

/// Gradients of all parameters for upstream `d_pred: [B, N, 2]`.
pub fn backward(
    cfg: &ModelConfig,
    params: &ModelParams,
    cache: &ForwardCache,
    d_pred: &Tensor,
) -> Result<ModelParams, ModelError> {
    let (batch, n) = (cache.batch, cache.n_xs);
    d_pred.expect_shape(&[batch, n, OUT_CHANNELS])?;
    let h = cfg.hidden;
    let rows = batch * n;
    let mut grads = params.zeros_like();

    let mut dv = vec![0.0; rows * h];
    backward_rows(
        cache.fno_output(),
        rows,
        h,
        OUT_CHANNELS,
        params.dec_w.data(),
        d_pred.data(),
        Some(&mut dv),
        grads.dec_w.data_mut(),
        grads.dec_b.data_mut(),
    );

    for (k, block) in params.fno.iter().enumerate().rev() {
        let dpre: Vec<f64> = dv.iter().zip(&cache.fno_pre[k]).map(|(g, &x)| g * gelu_grad(x)).collect();
        let gb = &mut grads.fno[k];
        let mut dv_in = block.spectral.backward_slices(&cache.spectral[k], &dpre, &cache.basis, &mut gb.spectral);
        let mut dv_skip = vec![0.0; rows * h];
        backward_rows(
            &cache.fno_in[k],
            rows,
            h,
            h,
            block.skip_w.data(),
            &dpre,
            Some(&mut dv_skip),
            gb.skip_w.data_mut(),
            gb.skip_b.data_mut(),
        );
        for (a, b) in dv_in.iter_mut().zip(&dv_skip) {
            *a += b;
        }
        dv = dv_in;
    }

    let d_enc = params.gru.backward_slices(&cache.enc_out, &cache.gru, &dv, &mut grads.gru);
    backward_rows(
        &cache.enc_in,
        cfg.seq_len * rows,
        cfg.encoder_inputs(),
        h,
        params.enc_w.data(),
        &d_enc,
        None,
        grads.enc_w.data_mut(),
        grads.enc_b.data_mut(),
    );
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            hidden: 6,
            max_modes: 4,
            seq_len: 3,
            ..ModelConfig::default()
        }
    }

    fn random_window(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
    }

    fn coords(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn mode_rule() {
        assert_eq!(mode_count(200, 48), 48);
        assert_eq!(mode_count(20, 48), 11);
        assert_eq!(mode_count(3, 48), 2);
    }

    #[test]
    fn output_shape() {
        let cfg = ModelConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ModelParams::init(&cfg, 40, &mut rng).unwrap();
        assert_eq!(p.modes(), 21);
        let w = random_window(&[2, 12, 40, 8], &mut rng);
        let y = forward(&cfg, &p, &w, &coords(40)).unwrap();
        assert_eq!(y.shape(), &[2, 40, 2]);
    }

    #[test]
    fn zero_parameters_emit_decoder_bias() {
        let cfg = ModelConfig {
            residual: false,
            ..small_cfg()
        };
        let mut p = ModelParams::zeros(&cfg, 7);
        p.dec_b = Tensor::from_vec(&[2], vec![0.25, -1.5]).unwrap();
        let w = Tensor::zeros(&[2, 3, 7, 8]);
        let y = forward(&cfg, &p, &w, &coords(7)).unwrap();
        for cell in y.data().chunks_exact(2) {
            assert_eq!(cell, &[0.25, -1.5]);
        }
    }

    #[test]
    fn residual_zero_parameters_reproduce_last_state() {
        let cfg = ModelConfig {
            residual: true,
            ..small_cfg()
        };
        let p = ModelParams::zeros(&cfg, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = random_window(&[2, 3, 5, 8], &mut rng);
        let y = forward(&cfg, &p, &w, &coords(5)).unwrap();
        for b in 0..2 {
            for i in 0..5 {
                assert_eq!(y.get(&[b, i, 0]), w.get(&[b, 2, i, 0]));
                assert_eq!(y.get(&[b, i, 1]), w.get(&[b, 2, i, 1]));
            }
        }
    }

    #[test]
    fn batch_entries_are_independent() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ModelParams::init(&cfg, 9, &mut rng).unwrap();
        let w = random_window(&[3, 3, 9, 8], &mut rng);
        let y = forward(&cfg, &p, &w, &coords(9)).unwrap();
        let per = 3 * 9 * 8;
        for b in 0..3 {
            let single = Tensor::from_vec(&[1, 3, 9, 8], w.data()[b * per..(b + 1) * per].to_vec()).unwrap();
            let ys = forward(&cfg, &p, &single, &coords(9)).unwrap();
            for (a, c) in ys.data().iter().zip(&y.data()[b * 18..(b + 1) * 18]) {
                assert!((a - c).abs() < 1e-12);
            }
        }
        // Permuting the batch permutes the outputs.
        let mut swapped = w.data()[per..2 * per].to_vec();
        swapped.extend_from_slice(&w.data()[..per]);
        swapped.extend_from_slice(&w.data()[2 * per..]);
        let ws = Tensor::from_vec(&[3, 3, 9, 8], swapped).unwrap();
        let ys = forward(&cfg, &p, &ws, &coords(9)).unwrap();
        assert_eq!(&ys.data()[..18], &y.data()[18..36]);
        assert_eq!(&ys.data()[18..36], &y.data()[..18]);
    }

    #[test]
    fn masked_model_has_narrower_encoder() {
        let mask = ChannelMask::parse_drop_list("x_coord").unwrap();
        let cfg = small_cfg().with_mask(mask);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ModelParams::init(&cfg, 5, &mut rng).unwrap();
        assert_eq!(p.enc_w.shape(), &[8, 6]);
        let w = random_window(&[1, 3, 5, 8], &mut rng);
        assert!(forward(&cfg, &p, &w, &coords(5)).is_ok());
        let full = small_cfg();
        assert!(forward(&full, &p, &w, &coords(5)).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ModelParams::init(&cfg, 5, &mut rng).unwrap();
        let w = random_window(&[1, 3, 5, 8], &mut rng);
        assert!(forward(&cfg, &p, &w, &coords(4)).is_err());
        let w2 = random_window(&[1, 4, 5, 8], &mut rng);
        assert!(forward(&cfg, &p, &w2, &coords(5)).is_err());
        assert!(matches!(ModelParams::init(&cfg, 2, &mut rng), Err(ModelError::TooFewSections(2))));
    }

    #[test]
    fn named_round_trip() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = ModelParams::init(&cfg, 8, &mut rng).unwrap();
        let named = p.named_tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
        let q = ModelParams::from_named(&cfg, 8, named).unwrap();
        assert_eq!(p, q);
    }
}
