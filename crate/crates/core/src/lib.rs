//! Allocation-only core of the out-of-core randomized UTV solver.
//!
//! Everything in this crate is pure computation: dense tile kernels, the
//! algorithm-by-blocks task lists for the factorization, the T12
//! nullification and the final solve, the eviction-policy logic used by the
//! block cache, and the deterministic generators behind the synthetic test
//! problems. Storage, threads and the command line live in the `oocutv`
//! crate.
#![no_std]

extern crate alloc;

pub mod cod;
pub mod error;
pub mod kernels;
pub mod layout;
pub mod mat;
pub mod matgen;
pub mod policy;
pub mod randutv;
pub mod task;

pub use error::KernelError;
pub use layout::{BlockId, Dims, Layout, StoreRole};
pub use mat::Mat;
pub use task::{Access, DenseStores, Kernel, Task, TaskKind, TaskList, View};
