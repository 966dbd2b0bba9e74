//! The least-squares pipeline: factor, rank decision, clearing of the
//! top-right block of `T`, and the solve.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use oocutv_core::cod::{nullify_task_list, rank_from_diagonal, solve_task_list};
use oocutv_core::policy::Policy;
use oocutv_core::randutv::{build_task_list, FactorOptions};
use oocutv_core::{Dims, Mat, StoreRole, TaskList};
use tempfile::TempDir;

use crate::cache::{BlockCache, CacheConfig, StoreSet};
use crate::error::{Error, Result};
use crate::scheduler::{execute, ExecutionReport, Executor};
use crate::store::{Mode, TileStore};

pub const DEFAULT_NB: usize = 64;
pub const DEFAULT_TAU: f64 = 1e-10;
pub const DEFAULT_CACHE_TILES: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub q: usize,
    pub nb: usize,
    pub tau: f64,
    /// Clear `T(1:r, r+1:n)` before solving, giving the minimum-norm
    /// solution. Without it the solve ignores that block.
    pub nullify: bool,
    pub build_u: bool,
    pub seed: u64,
    pub full_last_step: bool,
    /// Defaults to [`DEFAULT_CACHE_TILES`] tiles of `nb×nb`.
    pub cache_bytes: Option<usize>,
    pub policy: Policy,
    pub executor: Executor,
    /// Factor `A` in its own file instead of a scratch copy. Requires a
    /// writable store already tiled with `nb`; no residual is reported.
    pub in_place: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            q: 0,
            nb: DEFAULT_NB,
            tau: DEFAULT_TAU,
            nullify: true,
            build_u: false,
            seed: 0,
            full_last_step: false,
            cache_bytes: None,
            policy: Policy::LfuFuture,
            executor: Executor::Sequential,
            in_place: false,
        }
    }
}

impl SolverOptions {
    pub fn cache_config(&self) -> CacheConfig {
        let bytes = self.cache_bytes.unwrap_or(DEFAULT_CACHE_TILES * self.nb * self.nb * 8);
        CacheConfig { capacity_bytes: bytes, policy: self.policy }
    }
}

/// Scratch directory under `OOC_TMPDIR`, or the system temp directory.
pub fn scratch_dir() -> Result<TempDir> {
    let base = std::env::var_os("OOC_TMPDIR").map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&base)?;
    Ok(tempfile::Builder::new().prefix("oocutv-").tempdir_in(base)?)
}

/// Number of diagonal entries of `t` above `tau` times the largest one.
pub fn estimate_rank(t: &TileStore, tau: f64) -> Result<usize> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Invalid(format!("tau must lie in (0, 1), got {tau}")));
    }
    Ok(rank_from_diagonal(&t.diagonal()?, tau))
}

/// `A·V = U·T` held in tile stores, with `Uᵀ·B` in place of `B`.
pub struct CodFactorization {
    dims: Dims,
    opts: SolverOptions,
    cache: BlockCache,
    scratch: Arc<TempDir>,
    rank: Option<usize>,
    nullified: bool,
    solved: bool,
    has_rhs: bool,
    report: ExecutionReport,
}

impl std::fmt::Debug for CodFactorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CodFactorization").field("dims", &self.dims).field("rank", &self.rank).finish_non_exhaustive()
    }
}

/// Factors `a` (and applies the left transforms to `b`) out of core.
pub fn factor(a: &TileStore, b: Option<&TileStore>, opts: &SolverOptions) -> Result<CodFactorization> {
    let (m, n, nb) = (a.rows(), a.cols(), opts.nb);
    if nb == 0 {
        return Err(Error::Invalid("tile size must be positive".into()));
    }
    if let Some(b) = b {
        if b.rows() != m {
            return Err(Error::Invalid(format!("A has {m} rows but B has {}", b.rows())));
        }
    }
    let k = b.map_or(0, |b| b.cols());
    let dims = Dims::new(m, n, k, nb);
    let scratch = scratch_dir()?;
    let dir = scratch.path();
    let mut set = StoreSet::new();
    let t = if opts.in_place {
        if a.nb() != nb {
            return Err(Error::Invalid(format!("in-place factoring needs A tiled with nb={nb}, found {}", a.nb())));
        }
        TileStore::open(a.path(), Mode::ReadWrite)?
    } else {
        TileStore::copy_retiled(a, nb, dir.join("T.ooct"))?
    };
    set.insert(StoreRole::A, t);
    let v = TileStore::create(dir.join("V.ooct"), n, n, nb)?;
    v.fill_identity()?;
    set.insert(StoreRole::V, v);
    if opts.build_u {
        let u = TileStore::create(dir.join("U.ooct"), m, m, nb)?;
        u.fill_identity()?;
        set.insert(StoreRole::U, u);
    }
    if let Some(b) = b {
        set.insert(StoreRole::B, TileStore::copy_retiled(b, nb, dir.join("B.ooct"))?);
        set.insert(StoreRole::X, TileStore::create(dir.join("X.ooct"), n, k, nb)?);
    }
    for role in [StoreRole::G, StoreRole::Y, StoreRole::TfY, StoreRole::TfA, StoreRole::Svd, StoreRole::TfRz] {
        let l = dims.layout(role);
        set.insert(role, TileStore::create(dir.join(format!("{}.ooct", role.name())), l.rows, l.cols, nb)?);
    }
    let cache = BlockCache::new(Arc::new(set), opts.cache_config(), nb);
    let mut fac = CodFactorization {
        dims,
        opts: *opts,
        cache,
        scratch: Arc::new(scratch),
        rank: None,
        nullified: false,
        solved: false,
        has_rhs: b.is_some(),
        report: ExecutionReport::default(),
    };
    let fo = FactorOptions {
        q: opts.q,
        build_u: opts.build_u,
        rhs: b.is_some(),
        seed: opts.seed,
        full_last_step: opts.full_last_step,
    };
    fac.run(&build_task_list(dims, &fo))?;
    Ok(fac)
}

impl CodFactorization {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn q(&self) -> usize {
        self.opts.q
    }

    pub fn rank(&self) -> Option<usize> {
        self.rank
    }

    /// Accumulated report of every task list run so far.
    pub fn report(&self) -> &ExecutionReport {
        &self.report
    }

    pub fn cache(&self) -> &BlockCache {
        &self.cache
    }

    fn store(&self, role: StoreRole) -> Result<&TileStore> {
        self.cache.stores().get(role)
    }

    pub fn t(&self) -> Result<&TileStore> {
        self.store(StoreRole::A)
    }

    pub fn v(&self) -> Result<&TileStore> {
        self.store(StoreRole::V)
    }

    pub fn u(&self) -> Result<&TileStore> {
        self.store(StoreRole::U)
    }

    pub fn bt(&self) -> Result<&TileStore> {
        self.store(StoreRole::B)
    }

    /// Copies the store for `role` to `path`.
    pub fn export(&self, role: StoreRole, path: impl AsRef<Path>) -> Result<TileStore> {
        let s = self.store(role)?;
        TileStore::copy_retiled(s, s.nb(), path)
    }

    fn run(&mut self, tl: &TaskList) -> Result<ExecutionReport> {
        let r = execute(tl, &self.cache, self.opts.executor)?;
        self.report.merge(&r);
        Ok(r)
    }

    pub fn estimate_rank(&mut self, tau: f64) -> Result<usize> {
        let r = estimate_rank(self.t()?, tau)?;
        self.rank = Some(r);
        Ok(r)
    }

    pub fn set_rank(&mut self, r: usize) -> Result<()> {
        if r > self.dims.m.min(self.dims.n) {
            return Err(Error::Invalid(format!("rank {r} exceeds min(m, n) = {}", self.dims.m.min(self.dims.n))));
        }
        self.rank = Some(r);
        Ok(())
    }

    fn need_rank(&self) -> Result<usize> {
        self.rank.ok_or_else(|| Error::Invalid("rank not set; call estimate_rank first".into()))
    }

    /// Right orthogonal sweep zeroing `T(1:r, r+1:n)`, accumulated into `V`.
    pub fn nullify_t12(&mut self) -> Result<()> {
        let r = self.need_rank()?;
        if self.solved {
            return Err(Error::Invalid("factorization already consumed by a solve".into()));
        }
        if !self.nullified {
            self.run(&nullify_task_list(self.dims, r))?;
            self.nullified = true;
        }
        Ok(())
    }

    /// `X = V(:,1:r)·T(1:r,1:r)⁻¹·(UᵀB)(1:r,:)` after nullification.
    pub fn solve_cod(&mut self) -> Result<SolveResult> {
        let r = self.need_rank()?;
        if !self.nullified && r != 0 && r != self.dims.n {
            return Err(Error::Invalid("nullify_t12 must run before solve_cod when the rank is deficient".into()));
        }
        self.solve(r)
    }

    /// Same formula ignoring `T(1:r, r+1:n)`: a least-squares solution that
    /// is not in general of minimum norm.
    pub fn solve_truncated(&mut self) -> Result<SolveResult> {
        let r = self.need_rank()?;
        self.solve(r)
    }

    fn solve(&mut self, r: usize) -> Result<SolveResult> {
        if !self.has_rhs {
            return Err(Error::Invalid("factorization has no right-hand side".into()));
        }
        if self.solved {
            // the solve overwrites UᵀB
            return Err(Error::Invalid("factorization already consumed by a solve".into()));
        }
        let report = self.run(&solve_task_list(self.dims, r))?;
        self.solved = true;
        let x = TileStore::open(self.store(StoreRole::X)?.path(), Mode::ReadOnly)?;
        let xnorm_fro = x.fro_norm()?;
        Ok(SolveResult { x, rank: r, residual_fro: None, xnorm_fro, report, _scratch: Arc::clone(&self.scratch) })
    }
}

#[derive(Debug)]
pub struct SolveResult {
    /// `n×k`, in the factorization's scratch directory.
    pub x: TileStore,
    pub rank: usize,
    pub residual_fro: Option<f64>,
    pub xnorm_fro: f64,
    /// Tasks behind `x`: the solve step, or the whole pipeline when
    /// returned by [`lstsq`].
    pub report: ExecutionReport,
    _scratch: Arc<TempDir>,
}

impl SolveResult {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<TileStore> {
        TileStore::copy_retiled(&self.x, self.x.nb(), path)
    }

    pub fn line(&self) -> String {
        let res = self.residual_fro.map_or_else(|| "nan".to_string(), |r| format!("{r:.6e}"));
        format!("rank={} residual_fro={} xnorm_fro={:.6e}", self.rank, res, self.xnorm_fro)
    }
}

/// `‖A·X − B‖_F`, streamed in the tiling of `a`.
pub fn residual(a: &TileStore, b: &TileStore, x: &TileStore) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != x.rows() || b.cols() != x.cols() {
        return Err(Error::Invalid("residual operands do not conform".into()));
    }
    let (nb, al) = (a.nb(), a.layout());
    let mut total = 0.0f64;
    let k = b.cols();
    for c0 in (0..k).step_by(nb) {
        let cols = c0..(c0 + nb).min(k);
        let xs: Vec<Mat> = (0..al.block_cols())
            .map(|j| x.read_region(j * nb..j * nb + al.tile_cols(j), cols.clone()))
            .collect::<Result<_>>()?;
        for i in 0..al.block_rows() {
            let rows = i * nb..i * nb + al.tile_rows(i);
            let mut r = b.read_region(rows, cols.clone())?;
            for (j, xj) in xs.iter().enumerate() {
                oocutv_core::kernels::gemm_nn(-1.0, &a.read_mat(i, j)?, xj, 1.0, &mut r)
                    .map_err(|e| Error::Invalid(e.to_string()))?;
            }
            total = total.hypot(r.fro_norm());
        }
    }
    Ok(total)
}

/// Factor, decide the rank, optionally nullify, solve, and report the
/// residual against the original `a` and `b`.
pub fn lstsq(a: &TileStore, b: &TileStore, opts: &SolverOptions) -> Result<SolveResult> {
    let mut fac = factor(a, Some(b), opts)?;
    fac.estimate_rank(opts.tau)?;
    let mut res = if opts.nullify {
        fac.nullify_t12()?;
        fac.solve_cod()?
    } else {
        fac.solve_truncated()?
    };
    res.report = fac.report().clone();
    if !opts.in_place {
        res.residual_fro = Some(residual(a, b, &res.x)?);
    }
    Ok(res)
}
