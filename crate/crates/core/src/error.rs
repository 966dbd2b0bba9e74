use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: &'static str },
    #[error("singular triangular block: zero diagonal entry at {index}")]
    SingularBlock { index: usize },
    #[error("small SVD did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("task expects {expected} operands, got {got}")]
    Operands { expected: usize, got: usize },
}

pub(crate) fn shape(op: &'static str, detail: &'static str) -> KernelError {
    KernelError::Shape { op, detail }
}
