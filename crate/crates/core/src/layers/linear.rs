//! Affine map `y = x·W + b` over the last axis.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg;
use crate::tensor::{ShapeError, Tensor};

/// Gradients of a linear layer for one upstream gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

fn check(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize), ShapeError> {
    let ws = w.shape();
    if ws.len() != 2 {
        return Err(ShapeError::Mismatch {
            expected: vec![0, 0],
            actual: ws.to_vec(),
        });
    }
    let (d_in, d_out) = (ws[0], ws[1]);
    b.expect_shape(&[d_out])?;
    let xs = x.shape();
    if xs.last() != Some(&d_in) {
        let mut expected = xs.to_vec();
        if let Some(last) = expected.last_mut() {
            *last = d_in;
        }
        return Err(ShapeError::Mismatch {
            expected,
            actual: xs.to_vec(),
        });
    }
    Ok((x.len() / d_in.max(1), d_in, d_out))
}

pub fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, ShapeError> {
    let (rows, d_in, d_out) = check(x, w, b)?;
    let y = forward_rows(x.data(), rows, d_in, d_out, w.data(), b.data());
    let mut shape = x.shape().to_vec();
    *shape.last_mut().expect("rank >= 1") = d_out;
    Tensor::from_vec(&shape, y)
}

pub fn linear_backward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    dy: &Tensor,
) -> Result<LinearGrads, ShapeError> {
    let (rows, d_in, d_out) = check(x, w, b)?;
    let mut y_shape = x.shape().to_vec();
    *y_shape.last_mut().expect("rank >= 1") = d_out;
    dy.expect_shape(&y_shape)?;
    let mut dx = vec![0.0; rows * d_in];
    let mut dw = vec![0.0; d_in * d_out];
    let mut db = vec![0.0; d_out];
    backward_rows(
        x.data(),
        rows,
        d_in,
        d_out,
        w.data(),
        dy.data(),
        Some(&mut dx),
        &mut dw,
        &mut db,
    );
    Ok(LinearGrads {
        dx: Tensor::from_vec(x.shape(), dx)?,
        dw: Tensor::from_vec(w.shape(), dw)?,
        db: Tensor::from_vec(b.shape(), db)?,
    })
}

pub(crate) fn forward_rows(
    x: &[f64],
    rows: usize,
    d_in: usize,
    d_out: usize,
    w: &[f64],
    b: &[f64],
) -> Vec<f64> {
    let mut y = Vec::with_capacity(rows * d_out);
    for _ in 0..rows {
        y.extend_from_slice(b);
    }
    linalg::gemm(rows, d_in, d_out, x, w, 1.0, &mut y);
    y
}

/// Accumulates `dw += xᵀ·dy`, `db += Σ_rows dy` and, when requested,
/// overwrites `dx = dy·Wᵀ`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_rows(
    x: &[f64],
    rows: usize,
    d_in: usize,
    d_out: usize,
    w: &[f64],
    dy: &[f64],
    dx: Option<&mut [f64]>,
    dw: &mut [f64],
    db: &mut [f64],
) {
    linalg::gemm_tn(d_in, rows, d_out, x, dy, 1.0, dw);
    for row in dy.chunks_exact(d_out) {
        for (acc, g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    if let Some(dx) = dx {
        linalg::gemm_nt(rows, d_out, d_in, dy, w, 0.0, dx);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_through() {
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.set(&[i, i], 1.0);
        }
        let b = Tensor::zeros(&[3]);
        let x = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.25, -4.0]).unwrap();
        assert_eq!(linear_forward(&x, &w, &b).unwrap(), x);
    }

    #[test]
    fn lifts_feature_axis_only() {
        let x = Tensor::zeros(&[2, 12, 40, 9]);
        let w = Tensor::zeros(&[9, 96]);
        let b = Tensor::zeros(&[96]);
        let y = linear_forward(&x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[2, 12, 40, 96]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let x = Tensor::zeros(&[4, 5]);
        let w = Tensor::zeros(&[4, 2]);
        let b = Tensor::zeros(&[2]);
        assert!(linear_forward(&x, &w, &b).is_err());
        let w = Tensor::zeros(&[5, 2]);
        let b = Tensor::zeros(&[3]);
        assert!(linear_forward(&x, &w, &b).is_err());
    }
}
