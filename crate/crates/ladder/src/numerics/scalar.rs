//! Floating-point abstraction over `f32` and `f64`.
//!
//! Training runs in `f32` for speed; gradient checking runs in `f64` so
//! central differences resolve to ~1e-10. The [`Scalar`] trait is the only
//! place the two widths differ, including which BLAS kernel backs `gemm`.

use num_traits::{Float, NumAssignOps};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::sync::Once;

#[allow(non_camel_case_types)]
type blasint = i32;

// Row-major layout and transpose flags for the CBLAS interface.
const CBLAS_ROW_MAJOR: blasint = 101;
const CBLAS_NO_TRANS: blasint = 111;
const CBLAS_TRANS: blasint = 112;

#[link(name = "openblas")]
extern "C" {
    fn cblas_sgemm(
        layout: blasint,
        trans_a: blasint,
        trans_b: blasint,
        m: blasint,
        n: blasint,
        k: blasint,
        alpha: f32,
        a: *const f32,
        lda: blasint,
        b: *const f32,
        ldb: blasint,
        beta: f32,
        c: *mut f32,
        ldc: blasint,
    );
    fn cblas_dgemm(
        layout: blasint,
        trans_a: blasint,
        trans_b: blasint,
        m: blasint,
        n: blasint,
        k: blasint,
        alpha: f64,
        a: *const f64,
        lda: blasint,
        b: *const f64,
        ldb: blasint,
        beta: f64,
        c: *mut f64,
        ldc: blasint,
    );
    fn openblas_set_num_threads(n: blasint);
}

static BLAS_INIT: Once = Once::new();

/// Pin the BLAS backend to one thread.
///
/// Multi-threaded GEMM changes reduction order between runs, which would break
/// the bit-for-bit reproducibility the trainer promises. Called lazily before
/// the first multiply; callable explicitly by binaries that want it up front.
pub fn init_blas_single_threaded() {
    BLAS_INIT.call_once(|| unsafe {
        openblas_set_num_threads(1);
    });
}

fn dims_fit(m: usize, n: usize, k: usize) -> bool {
    let lim = blasint::MAX as usize;
    m <= lim && n <= lim && k <= lim
}

/// Floating-point element type for tensors and the tape.
pub trait Scalar:
    Float
    + NumAssignOps
    + Serialize
    + DeserializeOwned
    + Default
    + Send
    + Sync
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + 'static
{
    /// Human-readable precision label ("f32" or "f64").
    const LABEL: &'static str;

    /// Lossy conversion from `f64`.
    fn from_f64(v: f64) -> Self;

    /// Widening conversion to `f64`.
    fn as_f64(self) -> f64;

    /// `c = alpha * op(a) * op(b) + beta * c` on row-major slices.
    ///
    /// `op(a)` is `m x k` (stored `k x m` when `trans_a`), `op(b)` is `k x n`
    /// (stored `n x k` when `trans_b`), `c` is `m x n`. Panics on slice-length
    /// mismatch; shape validation belongs to the caller.
    fn gemm(
        trans_a: bool,
        trans_b: bool,
        m: usize,
        n: usize,
        k: usize,
        alpha: Self,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    );
}

macro_rules! impl_scalar {
    ($t:ty, $label:expr, $gemm:ident) => {
        impl Scalar for $t {
            const LABEL: &'static str = $label;

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                trans_a: bool,
                trans_b: bool,
                m: usize,
                n: usize,
                k: usize,
                alpha: Self,
                a: &[Self],
                b: &[Self],
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(dims_fit(m, n, k), "gemm dimensions exceed BLAS index range");
                assert_eq!(a.len(), m * k, "gemm: slice a has wrong length");
                assert_eq!(b.len(), k * n, "gemm: slice b has wrong length");
                assert_eq!(c.len(), m * n, "gemm: slice c has wrong length");
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    // BLAS treats the product as the zero matrix; apply beta only.
                    for v in c.iter_mut() {
                        *v *= beta;
                    }
                    return;
                }
                init_blas_single_threaded();
                let (ta, lda) = if trans_a {
                    (CBLAS_TRANS, m as blasint)
                } else {
                    (CBLAS_NO_TRANS, k as blasint)
                };
                let (tb, ldb) = if trans_b {
                    (CBLAS_TRANS, k as blasint)
                } else {
                    (CBLAS_NO_TRANS, n as blasint)
                };
                unsafe {
                    $gemm(
                        CBLAS_ROW_MAJOR,
                        ta,
                        tb,
                        m as blasint,
                        n as blasint,
                        k as blasint,
                        alpha,
                        a.as_ptr(),
                        lda,
                        b.as_ptr(),
                        ldb,
                        beta,
                        c.as_mut_ptr(),
                        n as blasint,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, "f32", cblas_sgemm);
impl_scalar!(f64, "f64", cblas_dgemm);

/// Reference matrix multiply, kept as an independent oracle for the BLAS path.
///
/// Plain three-loop accumulation in `f64`; slow but obviously correct.
pub fn reference_matmul<S: Scalar>(
    a: &[S],
    b: &[S],
    m: usize,
    k: usize,
    n: usize,
) -> Vec<S> {
    assert_eq!(a.len(), m * k, "reference_matmul: slice a has wrong length");
    assert_eq!(b.len(), k * n, "reference_matmul: slice b has wrong length");
    let mut c = vec![S::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f64;
            for p in 0..k {
                acc += a[i * k + p].as_f64() * b[p * n + j].as_f64();
            }
            c[i * n + j] = S::from_f64(acc);
        }
    }
    c
}
