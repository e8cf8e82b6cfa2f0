//! Arbitrary-length discrete Fourier transform.
//!
//! Power-of-two lengths use an iterative radix-2 Cooley–Tukey kernel; every
//! other length goes through Bluestein's chirp-z reformulation on a padded
//! power-of-two convolution, so any cross-section count is supported.
//!
//! Sign convention: `X[k] = Σ_j x[j]·exp(−2πi·jk/N)`; the inverse carries the
//! `1/N` factor.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

pub use num_complex::Complex64;

/// Precomputed transform for one length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    kind: PlanKind,
}

#[derive(Debug, Clone)]
enum PlanKind {
    Trivial,
    Radix2(Radix2),
    Bluestein(Bluestein),
}

#[derive(Debug, Clone)]
struct Radix2 {
    n: usize,
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Bluestein {
    inner: Radix2,
    /// `exp(iπ j²/N)` for `j < N`.
    chirp: Vec<Complex64>,
    /// Forward transform of the padded chirp kernel.
    kernel: Vec<Complex64>,
}

impl Radix2 {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two() && n >= 2);
        let twiddles = (0..n / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| i.reverse_bits() >> (usize::BITS - bits))
            .collect();
        Self {
            n,
            twiddles,
            bitrev,
        }
    }

    fn forward(&self, buf: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

impl Bluestein {
    fn new(n: usize) -> Self {
        let m = (2 * n - 1).next_power_of_two();
        let inner = Radix2::new(m);
        let two_n = 2 * n as u128;
        let chirp: Vec<Complex64> = (0..n)
            .map(|j| {
                // j² mod 2N keeps the phase argument small for large j.
                let jj = ((j as u128 * j as u128) % two_n) as f64;
                Complex64::from_polar(1.0, PI * jj / n as f64)
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); m];
        kernel[0] = chirp[0];
        for j in 1..n {
            kernel[j] = chirp[j];
            kernel[m - j] = chirp[j];
        }
        inner.forward(&mut kernel);
        Self {
            inner,
            chirp,
            kernel,
        }
    }

    fn forward(&self, buf: &mut [Complex64]) {
        let n = self.chirp.len();
        let m = self.kernel.len();
        let mut work = vec![Complex64::new(0.0, 0.0); m];
        for j in 0..n {
            work[j] = buf[j] * self.chirp[j].conj();
        }
        self.inner.forward(&mut work);
        for (w, k) in work.iter_mut().zip(&self.kernel) {
            // Conjugate so the next forward pass acts as an inverse.
            *w = (*w * k).conj();
        }
        self.inner.forward(&mut work);
        let scale = 1.0 / m as f64;
        for k in 0..n {
            buf[k] = work[k].conj() * scale * self.chirp[k].conj();
        }
    }
}

impl FftPlan {
    pub fn new(n: usize) -> Self {
        let kind = if n <= 1 {
            PlanKind::Trivial
        } else if n.is_power_of_two() {
            PlanKind::Radix2(Radix2::new(n))
        } else {
            PlanKind::Bluestein(Bluestein::new(n))
        };
        Self { n, kind }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn uses_bluestein(&self) -> bool {
        matches!(self.kind, PlanKind::Bluestein(_))
    }

    /// In-place forward transform. `buf.len()` must equal the plan length.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "fft buffer length");
        match &self.kind {
            PlanKind::Trivial => {}
            PlanKind::Radix2(r) => r.forward(buf),
            PlanKind::Bluestein(b) => b.forward(buf),
        }
    }

    /// In-place inverse transform including the `1/N` normalisation.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse_unnormalized(buf);
        let scale = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|x| *x *= scale);
    }

    /// `Σ_k X[k]·exp(+2πi·jk/N)` without the `1/N` factor.
    pub fn inverse_unnormalized(&self, buf: &mut [Complex64]) {
        buf.iter_mut().for_each(|x| *x = x.conj());
        self.forward(buf);
        buf.iter_mut().for_each(|x| *x = x.conj());
    }
}

pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    let mut out = x.to_vec();
    FftPlan::new(x.len()).forward(&mut out);
    out
}

pub fn idft(x: &[Complex64]) -> Vec<Complex64> {
    let mut out = x.to_vec();
    FftPlan::new(x.len()).inverse(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let ang = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
                        v * Complex64::from_polar(1.0, ang)
                    })
                    .sum()
            })
            .collect()
    }

    fn random(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn impulse_is_flat() {
        for n in [1, 5, 8, 12] {
            let mut x = vec![Complex64::new(0.0, 0.0); n];
            x[0] = Complex64::new(1.0, 0.0);
            for v in dft(&x) {
                assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_concentrates_in_dc() {
        let x = vec![Complex64::new(1.0, 0.0); 8];
        let big_x = dft(&x);
        assert!((big_x[0] - Complex64::new(8.0, 0.0)).norm() < 1e-12);
        for v in &big_x[1..] {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn bluestein_matches_direct_and_parseval() {
        let x = random(37, 1);
        let plan = FftPlan::new(37);
        assert!(plan.uses_bluestein());
        let fast = dft(&x);
        let slow = direct(&x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-9);
        }
        let back = idft(&fast);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).norm() < 1e-10);
        }
        let e_time: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let e_freq: f64 = fast.iter().map(|v| v.norm_sqr()).sum::<f64>() / 37.0;
        assert!((e_time - e_freq).abs() < 1e-10);
    }

    #[test]
    fn round_trip_all_small_lengths() {
        for n in (1..=64).chain([100, 127, 128]) {
            let x = random(n, n as u64);
            let back = idft(&dft(&x));
            let err = back
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "n={n} err={err}");
        }
    }
}
