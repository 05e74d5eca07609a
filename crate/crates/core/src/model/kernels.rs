//! Dense kernels shared by training and incremental decoding.

use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Floating-point type the model can run in (f32 for training and decoding,
/// f64 for gradient checks).
pub trait Scalar:
    Float + FromPrimitive + AddAssign + SubAssign + MulAssign + DivAssign + Debug + Send + Sync + Default + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
pub fn c<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("representable constant")
}

pub const LN_EPS: f64 = 1e-5;

/// `y += a * x`
#[inline]
pub fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with eight partial sums so the loop vectorizes.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for i in 0..chunks {
        let (x, y) = (&a[i * 8..i * 8 + 8], &b[i * 8..i * 8 + 8]);
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    let mut s = T::zero();
    for i in chunks * 8..n {
        s += a[i] * b[i];
    }
    let pairs = (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]);
    pairs + s
}

/// `out[r] = inp[r] · W + bias` for `rows` rows; W is `k × n` row-major.
pub fn matmul<T: Scalar>(out: &mut [T], inp: &[T], w: &[T], bias: Option<&[T]>, rows: usize, k: usize, n: usize) {
    for r in 0..rows {
        let o = &mut out[r * n..(r + 1) * n];
        match bias {
            Some(b) => o.copy_from_slice(b),
            None => o.fill(T::zero()),
        }
        let x = &inp[r * k..(r + 1) * k];
        for (kk, &a) in x.iter().enumerate() {
            axpy(o, a, &w[kk * n..(kk + 1) * n]);
        }
    }
}

/// Backward of [`matmul`]: accumulates into `dinp`, `dw` and `dbias`.
#[allow(clippy::too_many_arguments)]
pub fn matmul_backward<T: Scalar>(
    dinp: &mut [T],
    dw: &mut [T],
    dbias: Option<&mut [T]>,
    dout: &[T],
    inp: &[T],
    w: &[T],
    rows: usize,
    k: usize,
    n: usize,
) {
    if let Some(db) = dbias {
        for r in 0..rows {
            axpy(db, T::one(), &dout[r * n..(r + 1) * n]);
        }
    }
    for r in 0..rows {
        let dor = &dout[r * n..(r + 1) * n];
        let x = &inp[r * k..(r + 1) * k];
        let dx = &mut dinp[r * k..(r + 1) * k];
        for kk in 0..k {
            let wrow = &w[kk * n..(kk + 1) * n];
            dx[kk] += dot(dor, wrow);
            axpy(&mut dw[kk * n..(kk + 1) * n], x[kk], dor);
        }
    }
}

/// Layer norm of each row; returns per-row (mean, rstd) for the backward pass.
pub fn layernorm<T: Scalar>(out: &mut [T], stats: &mut [(T, T)], inp: &[T], g: &[T], b: &[T], rows: usize, d: usize) {
    let inv_d = c::<T>(1.0 / d as f64);
    for r in 0..rows {
        let x = &inp[r * d..(r + 1) * d];
        let mean = x.iter().fold(T::zero(), |a, &v| a + v) * inv_d;
        let var = x.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) * inv_d;
        let rstd = T::one() / (var + c(LN_EPS)).sqrt();
        let o = &mut out[r * d..(r + 1) * d];
        for i in 0..d {
            o[i] = (x[i] - mean) * rstd * g[i] + b[i];
        }
        stats[r] = (mean, rstd);
    }
}

#[allow(clippy::too_many_arguments)]
pub fn layernorm_backward<T: Scalar>(
    dinp: &mut [T],
    dg: &mut [T],
    db: &mut [T],
    dout: &[T],
    inp: &[T],
    stats: &[(T, T)],
    g: &[T],
    rows: usize,
    d: usize,
) {
    let inv_d = c::<T>(1.0 / d as f64);
    for r in 0..rows {
        let (mean, rstd) = stats[r];
        let x = &inp[r * d..(r + 1) * d];
        let dy = &dout[r * d..(r + 1) * d];
        let mut sum_dxhat = T::zero();
        let mut sum_dxhat_xhat = T::zero();
        for i in 0..d {
            let xhat = (x[i] - mean) * rstd;
            let dxhat = dy[i] * g[i];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            dg[i] += dy[i] * xhat;
            db[i] += dy[i];
        }
        let dx = &mut dinp[r * d..(r + 1) * d];
        for i in 0..d {
            let xhat = (x[i] - mean) * rstd;
            let dxhat = dy[i] * g[i];
            dx[i] += rstd * (dxhat - sum_dxhat * inv_d - xhat * sum_dxhat_xhat * inv_d);
        }
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

pub fn gelu<T: Scalar>(out: &mut [T], inp: &[T]) {
    let (k, cc, half) = (c::<T>(GELU_K), c::<T>(GELU_C), c::<T>(0.5));
    for (o, &x) in out.iter_mut().zip(inp) {
        *o = half * x * (T::one() + (k * (x + cc * x * x * x)).tanh());
    }
}

pub fn gelu_backward<T: Scalar>(dinp: &mut [T], dout: &[T], inp: &[T]) {
    let (k, cc, half, three) = (c::<T>(GELU_K), c::<T>(GELU_C), c::<T>(0.5), c::<T>(3.0));
    for i in 0..inp.len() {
        let x = inp[i];
        let th = (k * (x + cc * x * x * x)).tanh();
        let grad = half * (T::one() + th) + half * x * (T::one() - th * th) * k * (T::one() + three * cc * x * x);
        dinp[i] += grad * dout[i];
    }
}

/// In-place softmax; returns log of the normalizer so log-probabilities are
/// `logit - lse`.
pub fn softmax_in_place<T: Scalar>(x: &mut [T]) -> T {
    let max = x.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
    let mut sum = T::zero();
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = T::one() / sum;
    for v in x.iter_mut() {
        *v *= inv;
    }
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..37).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn matmul_small() {
        // [1 2; 3 4] · [1 0 1; 0 1 1] + [1 1 1]
        let mut out = vec![0.0f64; 6];
        matmul(&mut out, &[1.0, 2.0, 3.0, 4.0], &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0], Some(&[1.0; 3]), 2, 2, 3);
        assert_eq!(out, vec![2.0, 3.0, 4.0, 4.0, 5.0, 8.0]);
    }

    #[test]
    fn gelu_derivative_by_differences() {
        let xs = [-3.0, -0.7, 0.0, 0.4, 2.5];
        for &x in &xs {
            let h = 1e-6;
            let (mut a, mut b) = ([0.0f64], [0.0f64]);
            gelu(&mut a, &[x + h]);
            gelu(&mut b, &[x - h]);
            let mut d = [0.0];
            gelu_backward(&mut d, &[1.0], &[x]);
            assert!((d[0] - (a[0] - b[0]) / (2.0 * h)).abs() < 1e-8);
        }
    }
}
