//! Out-of-core least-squares solver for dense, possibly rank-deficient
//! systems, built on a randomized UTV factorization over tiled disk stores.

pub mod cache;
pub mod error;
pub mod matgen;
pub mod mtx;
pub mod oracle;
pub mod scheduler;
pub mod solver;
pub mod store;

pub use cache::{BlockCache, CacheConfig, CacheStats, Handle, StoreSet};
pub use error::{Error, Result};
pub use oocutv_core::policy::Policy;
pub use scheduler::{execute, execute_overlapped, execute_sequential, ExecutionReport, Executor, Format};
pub use solver::{estimate_rank, factor, lstsq, residual, CodFactorization, SolveResult, SolverOptions};
pub use store::{Mode, TileStore};
