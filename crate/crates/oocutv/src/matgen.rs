//! Test problems written straight to tile stores.

use std::path::Path;

use oocutv_core::matgen::{perturb_positions, x_true_block, RankDeficient};
use oocutv_core::Mat;

use crate::error::{Error, Result};
use crate::store::TileStore;

/// Streams the synthetic rank-`r` matrix to `path` one tile at a time.
pub fn gen_rank_deficient(
    m: usize,
    n: usize,
    r: usize,
    seed: u64,
    nb: usize,
    path: impl AsRef<Path>,
) -> Result<TileStore> {
    let g = RankDeficient::new(m, n, r, seed)
        .ok_or_else(|| Error::Invalid(format!("rank {r} outside 1..={} for a {m}×{n} matrix", m.min(n))))?;
    let s = TileStore::create(path, m, n, nb)?;
    let l = s.layout();
    for i in 0..l.block_rows() {
        for j in 0..l.block_cols() {
            let (rr, cc) = l.tile_shape(i, j);
            s.write_mat(i, j, &g.block(i * nb..i * nb + rr, j * nb..j * nb + cc))?;
        }
    }
    Ok(s)
}

/// Right-hand-side constructions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// A given `b`.
    Provided,
    /// All ones.
    Ones,
    /// `b = A·x` for a random `x`.
    Consistent,
    /// As `Consistent`, then a fraction of the entries rescaled.
    Perturbed,
}

impl Scenario {
    pub fn from_number(k: u8) -> Option<Scenario> {
        match k {
            1 => Some(Scenario::Provided),
            2 => Some(Scenario::Ones),
            3 => Some(Scenario::Consistent),
            4 => Some(Scenario::Perturbed),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Scenario::Provided => 1,
            Scenario::Ones => 2,
            Scenario::Consistent => 3,
            Scenario::Perturbed => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhsOptions {
    pub k: usize,
    pub seed: u64,
    pub perturb_frac: f64,
    pub perturb_scale: f64,
}

impl Default for RhsOptions {
    fn default() -> Self {
        RhsOptions { k: 1, seed: 0, perturb_frac: 0.10, perturb_scale: 0.999 }
    }
}

/// Builds `B` at `b_path` (tiled like `a`). For the consistent scenarios the
/// generating `x` is also written, to `x_path`.
pub fn make_rhs(
    scenario: Scenario,
    a: &TileStore,
    opts: RhsOptions,
    provided: Option<&TileStore>,
    b_path: impl AsRef<Path>,
    x_path: impl AsRef<Path>,
) -> Result<(TileStore, Option<TileStore>)> {
    let (m, n, nb) = (a.rows(), a.cols(), a.nb());
    match scenario {
        Scenario::Provided => {
            let p = provided.ok_or_else(|| Error::Invalid("scenario 1 needs a provided right-hand side".into()))?;
            if p.rows() != m {
                return Err(Error::Invalid(format!("right-hand side has {} rows, A has {m}", p.rows())));
            }
            Ok((TileStore::copy_retiled(p, nb, b_path)?, None))
        }
        Scenario::Ones => {
            let b = TileStore::create(b_path, m, opts.k, nb)?;
            b.fill_with(|_, _| 1.0)?;
            Ok((b, None))
        }
        Scenario::Consistent | Scenario::Perturbed => {
            let x = TileStore::create(x_path, n, opts.k, nb)?;
            let xl = x.layout();
            for i in 0..xl.block_rows() {
                for j in 0..xl.block_cols() {
                    let (r, c) = xl.tile_shape(i, j);
                    x.write_mat(i, j, &x_true_block(opts.seed, i * nb..i * nb + r, j * nb..j * nb + c))?;
                }
            }
            let b = multiply(a, &x, b_path)?;
            if scenario == Scenario::Perturbed {
                perturb(&b, opts)?;
            }
            Ok((b, Some(x)))
        }
    }
}

/// `C = A·X` with the tiling of `a`.
pub fn multiply(a: &TileStore, x: &TileStore, path: impl AsRef<Path>) -> Result<TileStore> {
    if a.cols() != x.rows() {
        return Err(Error::Invalid(format!("cannot multiply {}×{} by {}×{}", a.rows(), a.cols(), x.rows(), x.cols())));
    }
    let nb = a.nb();
    let c = TileStore::create(path, a.rows(), x.cols(), nb)?;
    let cl = c.layout();
    for jc in 0..cl.block_cols() {
        let cols = jc * nb..jc * nb + cl.tile_cols(jc);
        let xs: Vec<Mat> = (0..a.block_cols())
            .map(|j| x.read_region(j * nb..j * nb + a.layout().tile_cols(j), cols.clone()))
            .collect::<Result<_>>()?;
        for i in 0..cl.block_rows() {
            let mut acc = Mat::zeros(cl.tile_rows(i), cols.len());
            for (j, xj) in xs.iter().enumerate() {
                oocutv_core::kernels::gemm_nn(1.0, &a.read_mat(i, j)?, xj, 1.0, &mut acc)
                    .map_err(|e| Error::Invalid(e.to_string()))?;
            }
            c.write_mat(i, jc, &acc)?;
        }
    }
    Ok(c)
}

/// Multiplies `round(frac·m·k)` seeded positions of `b` by `scale`.
fn perturb(b: &TileStore, opts: RhsOptions) -> Result<usize> {
    let m = b.rows();
    let pos = perturb_positions(m * b.cols(), opts.perturb_frac, opts.seed);
    let nb = b.nb();
    let mut by_tile: std::collections::BTreeMap<(usize, usize), Vec<(usize, usize)>> = Default::default();
    for p in &pos {
        let (i, j) = (p % m, p / m);
        by_tile.entry((i / nb, j / nb)).or_default().push((i % nb, j % nb));
    }
    for ((ti, tj), cells) in by_tile {
        let mut t = b.read_mat(ti, tj)?;
        for (r, c) in cells {
            t[(r, c)] *= opts.perturb_scale;
        }
        b.write_mat(ti, tj, &t)?;
    }
    Ok(pos.len())
}
