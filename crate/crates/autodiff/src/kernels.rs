//! Inner loops shared by forward and backward rules.

use crate::scalar::Scalar;

/// `out += s * x`
#[inline]
pub(crate) fn axpy<T: Scalar>(out: &mut [T], s: T, x: &[T]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += s * v;
    }
}

/// Dot product with eight independent partial sums so the loop vectorizes.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    let pairs = [
        acc[0] + acc[4],
        acc[1] + acc[5],
        acc[2] + acc[6],
        acc[3] + acc[7],
    ];
    (pairs[0] + pairs[2]) + (pairs[1] + pairs[3]) + tail
}

/// `out[m×n] = a[m×k] · b[k×n]`, `out` pre-zeroed.
pub(crate) fn matmul<T: Scalar>(out: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &s) in arow.iter().enumerate() {
            if s != T::zero() {
                axpy(orow, s, &b[p * n..(p + 1) * n]);
            }
        }
    }
}

/// `da += g · bᵀ`
pub(crate) fn matmul_grad_left<T: Scalar>(
    da: &mut [T],
    g: &[T],
    b: &[T],
    m: usize,
    k: usize,
    n: usize,
) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        let darow = &mut da[i * k..(i + 1) * k];
        for (p, d) in darow.iter_mut().enumerate() {
            *d += dot(grow, &b[p * n..(p + 1) * n]);
        }
    }
}

/// `db += aᵀ · g`
pub(crate) fn matmul_grad_right<T: Scalar>(
    db: &mut [T],
    a: &[T],
    g: &[T],
    m: usize,
    k: usize,
    n: usize,
) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &s) in arow.iter().enumerate() {
            if s != T::zero() {
                axpy(&mut db[p * n..(p + 1) * n], s, grow);
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln Σ exp(row)` split as `(max, ln(1 + Σ_{k≠argmax} exp(row_k − max)))`
/// so that near-deterministic rows keep their small tail exactly.
pub(crate) fn log_sum_exp_parts<T: Scalar>(row: &[T]) -> (T, T) {
    let (arg, max) = row
        .iter()
        .copied()
        .enumerate()
        .fold((0, T::neg_infinity()), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let rest: T = row
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, &v)| (v - max).exp())
        .sum();
    (max, rest.ln_1p())
}

pub(crate) fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let (max, tail) = log_sum_exp_parts(row);
    max + tail
}
