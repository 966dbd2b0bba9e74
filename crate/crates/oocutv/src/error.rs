use oocutv_core::KernelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad tile-store file: {0}")]
    Format(String),
    #[error("tile ({i},{j}) outside a {rows}×{cols} tile grid")]
    OutOfRange { i: usize, j: usize, rows: usize, cols: usize },
    #[error("store is read-only")]
    ReadOnly,
    #[error("tile ({i},{j}) must be {expected:?}, got {got:?}")]
    Extent { i: usize, j: usize, expected: (usize, usize), got: (usize, usize) },
    #[error("cache capacity of {capacity} bytes cannot hold the operands of one task ({needed} bytes needed)")]
    Capacity { needed: usize, capacity: usize },
    #[error("block {0} released more often than acquired")]
    DoubleRelease(String),
    #[error("unknown block {0}")]
    UnknownBlock(String),
    #[error("task {task} failed: {source}")]
    Kernel { task: usize, source: KernelError },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("execution aborted")]
    Aborted,
}

pub type Result<T> = std::result::Result<T, Error>;
