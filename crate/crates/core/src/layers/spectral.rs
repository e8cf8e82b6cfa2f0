//! 1-D spectral convolution along the cross-section axis.
//!
//! Each channel column is transformed with a real-input DFT, the lowest
//! `modes` one-sided frequencies (DC included) are mixed across channels by a
//! complex weight matrix per mode, every other mode is zeroed, and the result
//! is brought back with a Hermitian-symmetric inverse so the output is real.
//!
//! The truncated transforms are applied as dense basis matrices: with only
//! the low modes kept this is cheaper than a full FFT per column and batches
//! into GEMMs. [`SpectralWeights::forward_fft`] is the FFT formulation.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use core::f64::consts::PI;

use crate::fft::{Complex64, FftPlan};
use crate::linalg::{gemm, gemm_nt, gemm_strided, gemm_tn};
use crate::tensor::{ShapeError, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("{modes} Fourier modes requested but a length-{n} axis supports at most {max}")]
    ModesOutOfRange { modes: usize, n: usize, max: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Largest one-sided mode count a real signal of length `n` carries.
pub fn max_modes_for(n: usize) -> usize {
    n / 2 + 1
}

/// Per-mode complex channel mixing weights, `[modes, H_in, H_out]` each for
/// the real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralWeights {
    pub re: Tensor,
    pub im: Tensor,
}

#[derive(Debug, Clone)]
pub struct SpectralCache {
    batch: usize,
    n: usize,
    /// Retained input spectrum, `[modes, batch, H_in]`.
    xre: Vec<f64>,
    xim: Vec<f64>,
}

impl SpectralWeights {
    pub fn zeros(modes: usize, h_in: usize, h_out: usize) -> Self {
        Self {
            re: Tensor::zeros(&[modes, h_in, h_out]),
            im: Tensor::zeros(&[modes, h_in, h_out]),
        }
    }

    /// Identity channel mixing on every retained mode.
    pub fn identity(modes: usize, channels: usize) -> Self {
        let mut w = Self::zeros(modes, channels, channels);
        for k in 0..modes {
            for c in 0..channels {
                w.re.set(&[k, c, c], 1.0);
            }
        }
        w
    }

    /// Complex Gaussian entries scaled by `1/H_in`.
    pub fn init<R: Rng>(modes: usize, h_in: usize, h_out: usize, rng: &mut R) -> Self {
        let mut w = Self::zeros(modes, h_in, h_out);
        let scale = 1.0 / h_in as f64;
        for t in [&mut w.re, &mut w.im] {
            for v in t.data_mut() {
                let g: f64 = StandardNormal.sample(rng);
                *v = g * scale;
            }
        }
        w
    }

    pub fn modes(&self) -> usize {
        self.re.shape()[0]
    }

    pub fn h_in(&self) -> usize {
        self.re.shape()[1]
    }

    pub fn h_out(&self) -> usize {
        self.re.shape()[2]
    }

    fn check(&self, v: &Tensor) -> Result<(usize, usize), SpectralError> {
        self.im.expect_shape(self.re.shape())?;
        let s = v.shape();
        if s.len() != 3 || s[2] != self.h_in() {
            return Err(ShapeError::Mismatch {
                expected: vec![s.first().copied().unwrap_or(0), s.get(1).copied().unwrap_or(0), self.h_in()],
                actual: s.to_vec(),
            }
            .into());
        }
        let n = s[1];
        if self.modes() == 0 || self.modes() > max_modes_for(n) {
            return Err(SpectralError::ModesOutOfRange {
                modes: self.modes(),
                n,
                max: max_modes_for(n),
            });
        }
        Ok((s[0], n))
    }

    /// `v: [M, N, H_in]` → `[M, N, H_out]`.
    pub fn forward(&self, v: &Tensor) -> Result<Tensor, SpectralError> {
        Ok(self.forward_cached(v)?.0)
    }

    pub fn forward_cached(&self, v: &Tensor) -> Result<(Tensor, SpectralCache), SpectralError> {
        let (batch, n) = self.check(v)?;
        let basis = SpectralBasis::new(n, self.modes())?;
        let (out, cache) = self.forward_slices(v.data(), batch, n, &basis);
        Ok((Tensor::from_vec(&[batch, n, self.h_out()], out)?, cache))
    }

    /// Returns `dL/dv` and accumulates weight gradients into `grads`.
    pub fn backward(
        &self,
        cache: &SpectralCache,
        dout: &Tensor,
        grads: &mut SpectralWeights,
    ) -> Result<Tensor, SpectralError> {
        dout.expect_shape(&[cache.batch, cache.n, self.h_out()])?;
        let basis = SpectralBasis::new(cache.n, self.modes())?;
        let dv = self.backward_slices(cache, dout.data(), &basis, grads);
        Ok(Tensor::from_vec(&[cache.batch, cache.n, self.h_in()], dv)?)
    }

    /// Reference path through the FFT; returns the output and the largest
    /// imaginary residue of the inverse transform before it is discarded.
    pub fn forward_fft(&self, v: &Tensor) -> Result<(Tensor, f64), SpectralError> {
        let (batch, n) = self.check(v)?;
        let plan = FftPlan::new(n);
        let (modes, h_in, h_out) = (self.modes(), self.h_in(), self.h_out());
        let v = v.data();
        let zero = Complex64::new(0.0, 0.0);
        let mut xhat = vec![zero; batch * modes * h_in];
        let mut col = vec![zero; n];
        for b in 0..batch {
            for c in 0..h_in {
                for (i, slot) in col.iter_mut().enumerate() {
                    *slot = Complex64::new(v[(b * n + i) * h_in + c], 0.0);
                }
                plan.forward(&mut col);
                for k in 0..modes {
                    xhat[(b * modes + k) * h_in + c] = col[k];
                }
            }
        }

        let (wr, wi) = (self.re.data(), self.im.data());
        let mut yhat = vec![zero; batch * modes * h_out];
        for b in 0..batch {
            for k in 0..modes {
                let x = &xhat[(b * modes + k) * h_in..(b * modes + k + 1) * h_in];
                let y = &mut yhat[(b * modes + k) * h_out..(b * modes + k + 1) * h_out];
                for (c, xc) in x.iter().enumerate() {
                    let base = (k * h_in + c) * h_out;
                    for o in 0..h_out {
                        y[o] += xc * Complex64::new(wr[base + o], wi[base + o]);
                    }
                }
            }
        }

        let mut out = vec![0.0; batch * n * h_out];
        let mut imag_residue: f64 = 0.0;
        for b in 0..batch {
            for o in 0..h_out {
                col.iter_mut().for_each(|x| *x = zero);
                for k in 0..modes {
                    let y = yhat[(b * modes + k) * h_out + o];
                    if k == 0 || 2 * k == n {
                        // Self-conjugate bins of a real signal carry no imaginary part.
                        col[k] = Complex64::new(y.re, 0.0);
                    } else {
                        col[k] = y;
                        col[n - k] = y.conj();
                    }
                }
                plan.inverse(&mut col);
                for (i, x) in col.iter().enumerate() {
                    imag_residue = imag_residue.max(x.im.abs());
                    out[(b * n + i) * h_out + o] = x.re;
                }
            }
        }
        Ok((Tensor::from_vec(&[batch, n, h_out], out)?, imag_residue))
    }

    pub(crate) fn forward_slices(&self, v: &[f64], batch: usize, n: usize, basis: &SpectralBasis) -> (Vec<f64>, SpectralCache) {
        let (modes, h_in, h_out) = (self.modes(), self.h_in(), self.h_out());
        debug_assert_eq!((basis.n, basis.modes), (n, modes));
        let (xs, ys) = (batch * h_in, batch * h_out);
        let mut xre = vec![0.0; modes * xs];
        let mut xim = vec![0.0; modes * xs];
        for b in 0..batch {
            let vb = &v[b * n * h_in..(b + 1) * n * h_in];
            let off = b * h_in;
            gemm_strided(modes, n, h_in, 1.0, &basis.fwd_re, (n, 1), vb, (h_in, 1), 0.0, &mut xre[off..], (xs, 1));
            gemm_strided(modes, n, h_in, 1.0, &basis.fwd_im, (n, 1), vb, (h_in, 1), 0.0, &mut xim[off..], (xs, 1));
        }

        let mut yre = vec![0.0; modes * ys];
        let mut yim = vec![0.0; modes * ys];
        let wsz = h_in * h_out;
        for k in 0..modes {
            let (xr, xi) = (&xre[k * xs..(k + 1) * xs], &xim[k * xs..(k + 1) * xs]);
            let (wr, wi) = (&self.re.data()[k * wsz..(k + 1) * wsz], &self.im.data()[k * wsz..(k + 1) * wsz]);
            let (yr, yi) = (&mut yre[k * ys..(k + 1) * ys], &mut yim[k * ys..(k + 1) * ys]);
            gemm(batch, h_in, h_out, xr, wr, 0.0, yr);
            gemm_strided(batch, h_in, h_out, -1.0, xi, (h_in, 1), wi, (h_out, 1), 1.0, yr, (h_out, 1));
            gemm(batch, h_in, h_out, xr, wi, 0.0, yi);
            gemm(batch, h_in, h_out, xi, wr, 1.0, yi);
        }

        let mut out = vec![0.0; batch * n * h_out];
        for b in 0..batch {
            let ob = &mut out[b * n * h_out..(b + 1) * n * h_out];
            let off = b * h_out;
            gemm_strided(n, modes, h_out, 1.0, &basis.inv_re, (modes, 1), &yre[off..], (ys, 1), 0.0, ob, (h_out, 1));
            gemm_strided(n, modes, h_out, 1.0, &basis.inv_im, (modes, 1), &yim[off..], (ys, 1), 1.0, ob, (h_out, 1));
        }
        (out, SpectralCache { batch, n, xre, xim })
    }

    pub(crate) fn backward_slices(
        &self,
        cache: &SpectralCache,
        dout: &[f64],
        basis: &SpectralBasis,
        grads: &mut SpectralWeights,
    ) -> Vec<f64> {
        let (modes, h_in, h_out) = (self.modes(), self.h_in(), self.h_out());
        let (batch, n) = (cache.batch, cache.n);
        let (xs, ys) = (batch * h_in, batch * h_out);

        let mut dyre = vec![0.0; modes * ys];
        let mut dyim = vec![0.0; modes * ys];
        for b in 0..batch {
            let gb = &dout[b * n * h_out..(b + 1) * n * h_out];
            let off = b * h_out;
            gemm_strided(modes, n, h_out, 1.0, &basis.inv_re, (1, modes), gb, (h_out, 1), 0.0, &mut dyre[off..], (ys, 1));
            gemm_strided(modes, n, h_out, 1.0, &basis.inv_im, (1, modes), gb, (h_out, 1), 0.0, &mut dyim[off..], (ys, 1));
        }

        let mut dxre = vec![0.0; modes * xs];
        let mut dxim = vec![0.0; modes * xs];
        let wsz = h_in * h_out;
        for k in 0..modes {
            let (xr, xi) = (&cache.xre[k * xs..(k + 1) * xs], &cache.xim[k * xs..(k + 1) * xs]);
            let (gr, gi) = (&dyre[k * ys..(k + 1) * ys], &dyim[k * ys..(k + 1) * ys]);
            let (wr, wi) = (&self.re.data()[k * wsz..(k + 1) * wsz], &self.im.data()[k * wsz..(k + 1) * wsz]);
            let dwr = &mut grads.re.data_mut()[k * wsz..(k + 1) * wsz];
            gemm_tn(h_in, batch, h_out, xr, gr, 1.0, dwr);
            gemm_tn(h_in, batch, h_out, xi, gi, 1.0, dwr);
            let dwi = &mut grads.im.data_mut()[k * wsz..(k + 1) * wsz];
            gemm_strided(h_in, batch, h_out, -1.0, xi, (1, h_in), gr, (h_out, 1), 1.0, dwi, (h_out, 1));
            gemm_tn(h_in, batch, h_out, xr, gi, 1.0, dwi);
            let (dr, di) = (&mut dxre[k * xs..(k + 1) * xs], &mut dxim[k * xs..(k + 1) * xs]);
            gemm_nt(batch, h_out, h_in, gr, wr, 0.0, dr);
            gemm_nt(batch, h_out, h_in, gi, wi, 1.0, dr);
            gemm_strided(batch, h_out, h_in, -1.0, gr, (h_out, 1), wi, (1, h_out), 0.0, di, (h_in, 1));
            gemm_nt(batch, h_out, h_in, gi, wr, 1.0, di);
        }

        let mut dv = vec![0.0; batch * n * h_in];
        for b in 0..batch {
            let db = &mut dv[b * n * h_in..(b + 1) * n * h_in];
            let off = b * h_in;
            gemm_strided(n, modes, h_in, 1.0, &basis.fwd_re, (1, n), &dxre[off..], (xs, 1), 0.0, db, (h_in, 1));
            gemm_strided(n, modes, h_in, 1.0, &basis.fwd_im, (1, n), &dxim[off..], (xs, 1), 1.0, db, (h_in, 1));
        }
        dv
    }
}

/// Truncated real DFT pair for a fixed length and mode count, as dense
/// matrices so batched transforms run as GEMMs.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    n: usize,
    modes: usize,
    /// `[modes, n]`: Re and Im of `exp(−2πi·kj/N)`.
    fwd_re: Vec<f64>,
    fwd_im: Vec<f64>,
    /// `[n, modes]`: Hermitian inverse including `1/N` and the mirror weights.
    inv_re: Vec<f64>,
    inv_im: Vec<f64>,
}

impl SpectralBasis {
    pub fn new(n: usize, modes: usize) -> Result<Self, SpectralError> {
        if modes == 0 || modes > max_modes_for(n) {
            return Err(SpectralError::ModesOutOfRange {
                modes,
                n,
                max: max_modes_for(n),
            });
        }
        let mut basis = Self {
            n,
            modes,
            fwd_re: vec![0.0; modes * n],
            fwd_im: vec![0.0; modes * n],
            inv_re: vec![0.0; n * modes],
            inv_im: vec![0.0; n * modes],
        };
        let nf = n as f64;
        for k in 0..modes {
            let self_conjugate = k == 0 || 2 * k == n;
            let alpha = if self_conjugate { 1.0 } else { 2.0 };
            for j in 0..n {
                let theta = 2.0 * PI * ((k * j) % n) as f64 / nf;
                let (sin, cos) = libm::sincos(theta);
                basis.fwd_re[k * n + j] = cos;
                basis.fwd_im[k * n + j] = -sin;
                basis.inv_re[j * modes + k] = alpha * cos / nf;
                // The imaginary part of a self-conjugate bin is dropped.
                basis.inv_im[j * modes + k] = if self_conjugate { 0.0 } else { -alpha * sin / nf };
            }
        }
        Ok(basis)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn modes(&self) -> usize {
        self.modes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn full_band_identity_reproduces_input() {
        for n in [7, 16, 40] {
            let v = random_tensor(&[2, n, 3], n as u64);
            let w = SpectralWeights::identity(max_modes_for(n), 3);
            let (out, _) = w.forward_cached(&v).unwrap();
            for (a, b) in out.data().iter().zip(v.data()) {
                assert!((a - b).abs() < 1e-9, "n={n}");
            }
        }
    }

    #[test]
    fn too_many_modes_rejected() {
        let v = Tensor::zeros(&[1, 10, 2]);
        let w = SpectralWeights::identity(7, 2);
        assert!(matches!(
            w.forward(&v),
            Err(SpectralError::ModesOutOfRange { modes: 7, n: 10, max: 6 })
        ));
    }

    #[test]
    fn basis_path_matches_fft_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = SpectralWeights::init(6, 4, 4, &mut rng);
        for (n, seed) in [(11, 2), (10, 3)] {
            let v = random_tensor(&[3, n, 4], seed);
            let (reference, residue) = w.forward_fft(&v).unwrap();
            assert!(residue < 1e-12);
            let fast = w.forward(&v).unwrap();
            for (a, b) in fast.data().iter().zip(reference.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
