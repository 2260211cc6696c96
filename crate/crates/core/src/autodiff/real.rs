use core::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

/// Floating-point width of a model's parameters and activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn byte_width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

/// Scalar type the engine computes in.
pub trait Real:
    Float + FromPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    const PRECISION: Precision;

    fn of(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Logit written into disallowed attention positions: the most negative
    /// finite value, so that after row-max subtraction `exp` underflows to
    /// exactly zero without ever producing a NaN.
    fn mask_sentinel() -> Self {
        Self::min_value()
    }

    /// `c = beta * c + op(a) * op(b)` for an `m x k` by `k x n` product,
    /// with `c` row-major `m x n` and the operands described by strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        beta: Self,
        c: &mut [Self],
    );
}

fn check_extent(len: usize, outer: usize, inner: usize, strides: (usize, usize)) {
    if outer > 0 && inner > 0 {
        let last = (outer - 1) * strides.0 + (inner - 1) * strides.1;
        assert!(last < len, "gemm operand out of bounds");
    }
}

macro_rules! impl_real {
    ($t:ty, $precision:expr, $kernel:path) => {
        impl Real for $t {
            const PRECISION: Precision = $precision;

            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_strides: (usize, usize),
                b: &[Self],
                b_strides: (usize, usize),
                beta: Self,
                c: &mut [Self],
            ) {
                assert_eq!(c.len(), m * n, "gemm output has wrong length");
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    c.iter_mut().for_each(|v| *v *= beta);
                    return;
                }
                check_extent(a.len(), m, k, a_strides);
                check_extent(b.len(), k, n, b_strides);
                // SAFETY: every index the kernel touches was bounds-checked
                // above and `c` is exclusively borrowed.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_strides.0 as isize,
                        a_strides.1 as isize,
                        b.as_ptr(),
                        b_strides.0 as isize,
                        b_strides.1 as isize,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, Precision::F32, matrixmultiply::sgemm);
impl_real!(f64, Precision::F64, matrixmultiply::dgemm);
