//! Dense in-memory kernels on one to four tiles. These are the bodies of the
//! algorithm-by-blocks tasks: Householder QR of full and triangular-on-dense
//! panels and the application of their compact-WY factors, the small SVD of a
//! diagonal block, the RZ-style nullification used to clear T12, and a
//! handful of matrix-product forms.
//!
//! Reflector sign convention: every factorization here leaves a nonnegative
//! diagonal in R (resp. C11).

mod blas;
mod householder;
mod random;
mod rz;
mod svd;

pub use blas::{dot, gemm_aab, gemm_aabt, gemm_abta, gemm_nn, gemm_nt, gemm_tn, keep_upper, trsm_upper, zero_tile};
pub use householder::{
    apply_q_dense, apply_q_td, explicit_q_dense, explicit_q_td, house, qr_dense, qr_triangular_dense,
};
pub use random::{gauss_tile, normal_stream};
pub use rz::{apply_rz_right, explicit_z, rz_nullify};
pub use svd::{svd_dense, SmallSvd};

/// How an orthogonal factor `Q = I - W·Tf·Wᵀ` is applied to a target `C`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `C := Qᵀ·C`
    LeftTrans,
    /// `C := Q·C`
    Left,
    /// `C := C·Q`
    Right,
    /// `C := C·Qᵀ`
    RightTrans,
}
