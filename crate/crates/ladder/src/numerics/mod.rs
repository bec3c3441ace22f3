//! Numeric foundation: tensors, seeded RNG streams, and the autodiff tape.
//!
//! 64-bit mode exists for gradient verification; training uses 32-bit.
//! All matrix products route through one BLAS-backed `gemm`, pinned to a
//! single thread for reproducibility, with a naive reference multiply kept
//! around as a correctness oracle.

pub mod gradcheck;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_H, DEFAULT_TOL};
pub use rng::RngStream;
pub use scalar::{init_blas_single_threaded, reference_matmul, Scalar};
pub use tape::{Tape, ValueId, PROB_CLAMP};
pub use tensor::{batch_stats, Tensor};

/// Numerical floor for standard deviations before division.
pub const STD_EPS: f64 = 1e-8;
