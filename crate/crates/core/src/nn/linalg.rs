//! Row-major dense kernels over `matrixmultiply`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of network parameters.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    const DTYPE: &'static str;

    /// `C ← alpha·A·B + beta·C` with explicit strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    /// `exp(x)`, branch-free so activation loops vectorize.
    fn exp_fast(x: Self) -> Self;

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("representable")
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: isize, cs: isize, what: &str) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) as isize * rs + (cols - 1) as isize * cs;
    assert!(
        rs >= 0 && cs >= 0 && (last as usize) < len,
        "{what}: {rows}x{cols} view (strides {rs},{cs}) exceeds buffer of {len}"
    );
}

macro_rules! impl_real {
    ($t:ty, $name:literal, $kernel:path, $exp:ident) => {
        impl Real for $t {
            const DTYPE: &'static str = $name;

            #[inline(always)]
            fn exp_fast(x: Self) -> Self {
                $exp(x)
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                check_extent(a.len(), m, k, rsa, csa, "lhs");
                check_extent(b.len(), k, n, rsb, csb, "rhs");
                check_extent(c.len(), m, n, rsc, csc, "out");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every view was bounds-checked above and `c` is a
                // unique borrow disjoint from `a` and `b`.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_real!(f64, "f64", matrixmultiply::dgemm, exp_f64);
impl_real!(f32, "f32", matrixmultiply::sgemm, exp_f32);

/// Range reduction `x = k·ln2 + r` with |r| ≤ ln2/2, then a degree-13
/// Taylor polynomial; relative error below 1e-15 on the clamped range.
#[inline(always)]
fn exp_f64(x: f64) -> f64 {
    const ROUND: f64 = 6755399441055744.0; // 1.5·2^52
    const LN2_HI: f64 = 0.693_147_180_559_945_3;
    const LN2_LO: f64 = 2.319_046_813_846_299_6e-17;
    let x = x.max(-700.0).min(700.0);
    let kf = x * std::f64::consts::LOG2_E + ROUND;
    let k_bits = kf.to_bits();
    let k = kf - ROUND;
    let r = x - k * LN2_HI - k * LN2_LO;
    let mut p = 1.0 / 6_227_020_800.0;
    p = p * r + 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    // low bits of k_bits hold k as a two's complement integer
    p * f64::from_bits(k_bits.wrapping_add(1023) << 52)
}

#[inline(always)]
fn exp_f32(x: f32) -> f32 {
    const ROUND: f32 = 12582912.0; // 1.5·2^23
    const LN2_HI: f32 = 0.693_145_75;
    const LN2_LO: f32 = 1.428_606_8e-6;
    let x = x.max(-87.0).min(87.0);
    let kf = x * std::f32::consts::LOG2_E + ROUND;
    let k_bits = kf.to_bits();
    let k = kf - ROUND;
    let r = x - k * LN2_HI - k * LN2_LO;
    let mut p = 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    p * f32::from_bits(k_bits.wrapping_add(127) << 23)
}

/// `C(m×n) ← A(m×k)·B(n×k)ᵀ + beta·C`
pub fn mul_nt<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    T::gemm(m, k, n, T::one(), a, k as isize, 1, b, 1, k as isize, beta, c, n as isize, 1);
}

/// `C(m×n) ← A(m×k)·B(k×n) + beta·C`
pub fn mul_nn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    T::gemm(m, k, n, T::one(), a, k as isize, 1, b, n as isize, 1, beta, c, n as isize, 1);
}

/// `C(m×n) ← A(k×m)ᵀ·B(k×n) + beta·C`
pub fn mul_tn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    T::gemm(m, k, n, T::one(), a, 1, m as isize, b, n as isize, 1, beta, c, n as isize, 1);
}

#[inline(always)]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + T::exp_fast(-x))
}

#[inline(always)]
pub fn tanh<T: Real>(x: T) -> T {
    let two = T::one() + T::one();
    T::one() - two / (T::exp_fast(two * x) + T::one())
}

pub fn sigmoid_in_place<T: Real>(xs: &mut [T]) {
    for v in xs {
        *v = sigmoid(*v);
    }
}

pub fn tanh_in_place<T: Real>(xs: &mut [T]) {
    for v in xs {
        *v = tanh(*v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_exp_is_accurate() {
        let mut worst64 = 0.0_f64;
        let mut worst32 = 0.0_f64;
        for k in -20_000..=20_000 {
            let x = k as f64 * 0.0017;
            worst64 = worst64.max(((f64::exp_fast(x) - x.exp()) / x.exp()).abs());
            let xf = x as f32;
            let e = (xf as f64).exp();
            worst32 = worst32.max(((f32::exp_fast(xf) as f64 - e) / e).abs());
        }
        assert!(worst64 < 5e-15, "f64 {worst64:e}");
        assert!(worst32 < 5e-7, "f32 {worst32:e}");
        assert_eq!(f64::exp_fast(-1e6), f64::exp_fast(-700.0));
        assert!(f64::exp_fast(1e6).is_finite());
    }

    #[test]
    fn activations_match_std() {
        for k in -400..=400 {
            let x = k as f64 * 0.05;
            assert!((tanh(x) - x.tanh()).abs() < 1e-15);
            assert!((sigmoid(x) - 1.0 / (1.0 + (-x).exp())).abs() < 1e-15);
        }
        assert_eq!(tanh(50.0_f64), 1.0);
        assert_eq!(tanh(-50.0_f64), -1.0);
    }

    #[test]
    fn products_match_naive() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5 - 1.0).collect(); // 4x3
        let mut c = vec![1.0; 8];
        mul_nt(2, 3, 4, &a, &b, 1.0, &mut c);
        for i in 0..2 {
            for j in 0..4 {
                let dot: f64 = (0..3).map(|p| a[i * 3 + p] * b[j * 3 + p]).sum();
                assert_eq!(c[i * 4 + j], 1.0 + dot);
            }
        }
        // A(3x2)ᵀ·B(3x4)
        let bt: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let mut d = vec![0.0; 8];
        mul_tn(2, 3, 4, &a, &bt, 0.0, &mut d);
        for i in 0..2 {
            for j in 0..4 {
                let dot: f64 = (0..3).map(|p| a[p * 2 + i] * bt[p * 4 + j]).sum();
                assert_eq!(d[i * 4 + j], dot);
            }
        }
        let mut e = vec![0.0; 8];
        mul_nn(2, 3, 4, &a, &bt, 0.0, &mut e);
        for i in 0..2 {
            for j in 0..4 {
                let dot: f64 = (0..3).map(|p| a[i * 3 + p] * bt[p * 4 + j]).sum();
                assert_eq!(e[i * 4 + j], dot);
            }
        }
    }
}
