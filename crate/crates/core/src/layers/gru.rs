//! Single-layer GRU with backpropagation through time.
//!
//! Gate convention:
//!
//! ```text
//! z  = σ(x·W_z + h·U_z + b_z)
//! r  = σ(x·W_r + h·U_r + b_r)
//! h̃  = tanh(x·W_h + (r ⊙ h)·U_h + b_h)
//! h' = (1 − z) ⊙ h̃ + z ⊙ h
//! ```
//!
//! `W_z | W_r | W_h` are stored side by side in `w_x` (shape `[d, 3H]`),
//! `U_z | U_r` in `u_zr` (`[H, 2H]`), and the three biases in `b` (`[3H]`).

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::activation::{sigmoid, tanh};
use crate::linalg;
use crate::tensor::{ShapeError, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights {
    pub w_x: Tensor,
    pub u_zr: Tensor,
    pub u_h: Tensor,
    pub b: Tensor,
}

/// Gradient buffers share the parameter layout.
pub type GruGrads = GruWeights;

/// Activations kept from the forward pass for BPTT.
#[derive(Debug, Clone)]
pub struct GruCache {
    rows: usize,
    steps: usize,
    /// Hidden states `h_0 ..= h_L`, each `[rows, H]`.
    h: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
}

impl GruWeights {
    pub fn zeros(d_in: usize, hidden: usize) -> Self {
        Self {
            w_x: Tensor::zeros(&[d_in, 3 * hidden]),
            u_zr: Tensor::zeros(&[hidden, 2 * hidden]),
            u_h: Tensor::zeros(&[hidden, hidden]),
            b: Tensor::zeros(&[3 * hidden]),
        }
    }

    /// Uniform `±1/√fan_in` initialisation.
    pub fn init<R: Rng>(d_in: usize, hidden: usize, rng: &mut R) -> Self {
        let mut w = Self::zeros(d_in, hidden);
        let bound_x = 1.0 / libm::sqrt(d_in as f64);
        let bound_h = 1.0 / libm::sqrt(hidden as f64);
        for v in w.w_x.data_mut() {
            *v = rng.random_range(-bound_x..bound_x);
        }
        for t in [&mut w.u_zr, &mut w.u_h, &mut w.b] {
            for v in t.data_mut() {
                *v = rng.random_range(-bound_h..bound_h);
            }
        }
        w
    }

    pub fn d_in(&self) -> usize {
        self.w_x.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.u_h.shape()[0]
    }

    fn validate(&self) -> Result<(), ShapeError> {
        let (d, h) = (self.d_in(), self.hidden());
        self.w_x.expect_shape(&[d, 3 * h])?;
        self.u_zr.expect_shape(&[h, 2 * h])?;
        self.u_h.expect_shape(&[h, h])?;
        self.b.expect_shape(&[3 * h])
    }

    /// One GRU step on `x_t: [M, d]`, `h_prev: [M, H]`.
    pub fn cell_forward(&self, x_t: &Tensor, h_prev: &Tensor) -> Result<Tensor, ShapeError> {
        self.validate()?;
        let (d, hid) = (self.d_in(), self.hidden());
        let rows = x_t.shape().first().copied().unwrap_or(0);
        x_t.expect_shape(&[rows, d])?;
        h_prev.expect_shape(&[rows, hid])?;
        let ax = super::linear::forward_rows(
            x_t.data(),
            rows,
            d,
            3 * hid,
            self.w_x.data(),
            self.b.data(),
        );
        let mut h = vec![0.0; rows * hid];
        let mut scratch = StepScratch::new(rows, hid);
        self.step(&ax, h_prev.data(), rows, &mut h, None, &mut scratch);
        Tensor::from_vec(&[rows, hid], h)
    }

    /// Runs `xs: [L, M, d]` from `h_0 = 0` and returns the final state `[M, H]`.
    pub fn sequence_forward(&self, xs: &Tensor) -> Result<Tensor, ShapeError> {
        let (h, _) = self.sequence_forward_cached(xs)?;
        Ok(h)
    }

    pub fn sequence_forward_cached(&self, xs: &Tensor) -> Result<(Tensor, GruCache), ShapeError> {
        self.validate()?;
        let s = xs.shape();
        if s.len() != 3 || s[2] != self.d_in() {
            return Err(ShapeError::Mismatch {
                expected: vec![s.first().copied().unwrap_or(0), 0, self.d_in()],
                actual: s.to_vec(),
            });
        }
        let (steps, rows) = (s[0], s[1]);
        let (h, cache) = self.forward_slices(xs.data(), steps, rows);
        Ok((Tensor::from_vec(&[rows, self.hidden()], h)?, cache))
    }

    /// BPTT. Returns `dL/dxs` (`[L, M, d]`) and accumulates into `grads`.
    pub fn sequence_backward(
        &self,
        xs: &Tensor,
        cache: &GruCache,
        dh_final: &Tensor,
        grads: &mut GruGrads,
    ) -> Result<Tensor, ShapeError> {
        self.validate()?;
        xs.expect_shape(&[cache.steps, cache.rows, self.d_in()])?;
        dh_final.expect_shape(&[cache.rows, self.hidden()])?;
        let dxs = self.backward_slices(xs.data(), cache, dh_final.data(), grads);
        Tensor::from_vec(xs.shape(), dxs)
    }

    pub(crate) fn forward_slices(&self, xs: &[f64], steps: usize, rows: usize) -> (Vec<f64>, GruCache) {
        let (d, hid) = (self.d_in(), self.hidden());
        let ax = super::linear::forward_rows(
            xs,
            steps * rows,
            d,
            3 * hid,
            self.w_x.data(),
            self.b.data(),
        );
        let sz = rows * hid;
        let mut cache = GruCache {
            rows,
            steps,
            h: vec![0.0; (steps + 1) * sz],
            z: vec![0.0; steps * sz],
            r: vec![0.0; steps * sz],
            cand: vec![0.0; steps * sz],
        };
        let mut scratch = StepScratch::new(rows, hid);
        for t in 0..steps {
            let (done, rest) = cache.h.split_at_mut((t + 1) * sz);
            let h_prev = &done[t * sz..];
            let h_next = &mut rest[..sz];
            let gates = Gates {
                z: &mut cache.z[t * sz..(t + 1) * sz],
                r: &mut cache.r[t * sz..(t + 1) * sz],
                cand: &mut cache.cand[t * sz..(t + 1) * sz],
            };
            self.step(
                &ax[t * rows * 3 * hid..(t + 1) * rows * 3 * hid],
                h_prev,
                rows,
                h_next,
                Some(gates),
                &mut scratch,
            );
        }
        let h_final = cache.h[steps * sz..].to_vec();
        (h_final, cache)
    }

    fn step(
        &self,
        ax: &[f64],
        h_prev: &[f64],
        rows: usize,
        h_next: &mut [f64],
        gates: Option<Gates<'_>>,
        s: &mut StepScratch,
    ) {
        let hid = self.hidden();
        linalg::gemm(rows, hid, 2 * hid, h_prev, self.u_zr.data(), 0.0, &mut s.hzr);
        for m in 0..rows {
            for j in 0..hid {
                let i = m * hid + j;
                let z = sigmoid(ax[m * 3 * hid + j] + s.hzr[m * 2 * hid + j]);
                let r = sigmoid(ax[m * 3 * hid + hid + j] + s.hzr[m * 2 * hid + hid + j]);
                s.z[i] = z;
                s.r[i] = r;
                s.hr[i] = r * h_prev[i];
            }
        }
        linalg::gemm(rows, hid, hid, &s.hr, self.u_h.data(), 0.0, &mut s.ahh);
        for m in 0..rows {
            for j in 0..hid {
                let i = m * hid + j;
                let c = tanh(ax[m * 3 * hid + 2 * hid + j] + s.ahh[i]);
                s.cand[i] = c;
                h_next[i] = (1.0 - s.z[i]) * c + s.z[i] * h_prev[i];
            }
        }
        if let Some(g) = gates {
            g.z.copy_from_slice(&s.z);
            g.r.copy_from_slice(&s.r);
            g.cand.copy_from_slice(&s.cand);
        }
    }

    pub(crate) fn backward_slices(
        &self,
        xs: &[f64],
        cache: &GruCache,
        dh_final: &[f64],
        grads: &mut GruGrads,
    ) -> Vec<f64> {
        let (d, hid) = (self.d_in(), self.hidden());
        let (rows, steps) = (cache.rows, cache.steps);
        let sz = rows * hid;
        let mut dax = vec![0.0; steps * rows * 3 * hid];
        let mut dh = dh_final.to_vec();
        let mut dh_prev = vec![0.0; sz];
        let mut hr = vec![0.0; sz];
        let mut dhr = vec![0.0; sz];
        let mut da_zr = vec![0.0; rows * 2 * hid];
        let mut da_h = vec![0.0; sz];

        for t in (0..steps).rev() {
            let h_prev = &cache.h[t * sz..(t + 1) * sz];
            let z = &cache.z[t * sz..(t + 1) * sz];
            let r = &cache.r[t * sz..(t + 1) * sz];
            let cand = &cache.cand[t * sz..(t + 1) * sz];
            for m in 0..rows {
                for j in 0..hid {
                    let i = m * hid + j;
                    let g = dh[i];
                    let d_cand = g * (1.0 - z[i]);
                    let dz = g * (h_prev[i] - cand[i]);
                    dh_prev[i] = g * z[i];
                    da_h[i] = d_cand * (1.0 - cand[i] * cand[i]);
                    da_zr[m * 2 * hid + j] = dz * z[i] * (1.0 - z[i]);
                    hr[i] = r[i] * h_prev[i];
                }
            }
            linalg::gemm_tn(hid, rows, hid, &hr, &da_h, 1.0, grads.u_h.data_mut());
            linalg::gemm_nt(rows, hid, hid, &da_h, self.u_h.data(), 0.0, &mut dhr);
            for m in 0..rows {
                for j in 0..hid {
                    let i = m * hid + j;
                    let dr = dhr[i] * h_prev[i];
                    dh_prev[i] += dhr[i] * r[i];
                    da_zr[m * 2 * hid + hid + j] = dr * r[i] * (1.0 - r[i]);
                }
            }
            linalg::gemm_tn(hid, rows, 2 * hid, h_prev, &da_zr, 1.0, grads.u_zr.data_mut());
            linalg::gemm_nt(rows, 2 * hid, hid, &da_zr, self.u_zr.data(), 1.0, &mut dh_prev);

            let dax_t = &mut dax[t * rows * 3 * hid..(t + 1) * rows * 3 * hid];
            for m in 0..rows {
                let row = &mut dax_t[m * 3 * hid..(m + 1) * 3 * hid];
                row[..2 * hid].copy_from_slice(&da_zr[m * 2 * hid..(m + 1) * 2 * hid]);
                row[2 * hid..].copy_from_slice(&da_h[m * hid..(m + 1) * hid]);
            }
            core::mem::swap(&mut dh, &mut dh_prev);
        }

        let mut dxs = vec![0.0; steps * rows * d];
        super::linear::backward_rows(
            xs,
            steps * rows,
            d,
            3 * hid,
            self.w_x.data(),
            &dax,
            Some(&mut dxs),
            grads.w_x.data_mut(),
            grads.b.data_mut(),
        );
        dxs
    }
}

struct Gates<'a> {
    z: &'a mut [f64],
    r: &'a mut [f64],
    cand: &'a mut [f64],
}

struct StepScratch {
    hzr: Vec<f64>,
    ahh: Vec<f64>,
    hr: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
}

impl StepScratch {
    fn new(rows: usize, hid: usize) -> Self {
        Self {
            hzr: vec![0.0; rows * 2 * hid],
            ahh: vec![0.0; rows * hid],
            hr: vec![0.0; rows * hid],
            z: vec![0.0; rows * hid],
            r: vec![0.0; rows * hid],
            cand: vec![0.0; rows * hid],
        }
    }
}
