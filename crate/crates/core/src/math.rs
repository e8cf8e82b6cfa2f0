//! Transcendentals used on hot paths: the platform library when `std` is
//! enabled, `libm` otherwise.

#[cfg(feature = "std")]
mod imp {
    #[inline]
    pub fn exp(x: f64) -> f64 {
        x.exp()
    }
    #[inline]
    pub fn tanh(x: f64) -> f64 {
        x.tanh()
    }
    #[inline]
    pub fn erf(x: f64) -> f64 {
        libm::erf(x)
    }
}

#[cfg(not(feature = "std"))]
mod imp {
    pub use libm::{erf, exp, tanh};
}

pub use imp::{erf, exp, tanh};
