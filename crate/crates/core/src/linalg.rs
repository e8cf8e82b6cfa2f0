//! Thin GEMM wrappers over `matrixmultiply`.
//!
//! All matrices are dense row-major slices. The `_tn` / `_nt` variants read
//! one operand transposed through strides instead of copying it.

/// Row and column stride of a matrix view.
pub type Strides = (usize, usize);

/// `c = beta * c + a (m×k) · b (k×n)`.
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    gemm_strided(m, k, n, 1.0, a, (k, 1), b, (n, 1), beta, c, (n, 1));
}

/// `c = beta * c + aᵀ · b` where `a` is stored as (k×m).
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    gemm_strided(m, k, n, 1.0, a, (1, m), b, (n, 1), beta, c, (n, 1));
}

/// `c = beta * c + a · bᵀ` where `b` is stored as (n×k).
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    gemm_strided(m, k, n, 1.0, a, (k, 1), b, (1, k), beta, c, (n, 1));
}

fn span(rows: usize, cols: usize, (rs, cs): Strides) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

/// `c = beta * c + alpha * a · b` over arbitrary strided views.
#[allow(clippy::too_many_arguments)]
pub fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    sa: Strides,
    b: &[f64],
    sb: Strides,
    beta: f64,
    c: &mut [f64],
    sc: Strides,
) {
    assert!(a.len() >= span(m, k, sa) && b.len() >= span(k, n, sb) && c.len() >= span(m, n, sc));
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[i * sc.0 + j * sc.1] *= beta;
            }
        }
        return;
    }
    #[allow(unsafe_code)]
    // The asserted spans cover every element addressed by the strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            beta,
            c.as_mut_ptr(),
            sc.0 as isize,
            sc.1 as isize,
        );
    }
}
