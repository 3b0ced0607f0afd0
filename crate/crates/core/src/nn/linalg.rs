//! Row-major matrix products on flat slices.

use crate::scalar::Real;

fn beta<T: Real>(accumulate: bool) -> T {
    if accumulate {
        T::one()
    } else {
        T::zero()
    }
}

/// `c (m x n) [+]= a (m x k) * b (k x n)`
pub fn mm_nn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    T::gemm(m, k, n, T::one(), a, k as isize, 1, b, n as isize, 1, beta(accumulate), c, n as isize, 1);
}

/// `c (m x n) [+]= a (m x k) * b^T` where `b` is stored `n x k`.
pub fn mm_nt<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    T::gemm(m, k, n, T::one(), a, k as isize, 1, b, 1, k as isize, beta(accumulate), c, n as isize, 1);
}

/// `c (m x n) [+]= a^T * b` where `a` is stored `k x m` and `b` is `k x n`.
pub fn mm_tn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    T::gemm(m, k, n, T::one(), a, 1, m as isize, b, n as isize, 1, beta(accumulate), c, n as isize, 1);
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
