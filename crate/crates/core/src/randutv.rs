//! Task list of the randomized UTV factorization `A·V = U·T`.
//!
//! Step `i` works on the trailing block `A(off.., off..)`, `off = i·nb`:
//! sample `Y = (AᵀA)^q·Aᵀ·G` with a Gaussian `G`, QR-factor `Y` and apply its
//! `Q` to all columns of the block column from the right (and to `V`), then
//! QR-factor the leading panel and apply its `Qᵀ` to the trailing columns
//! from the left (and to `B`, or to `U` from the right), and finally
//! diagonalize the leading `b×b` block with a small SVD, folding `U_s` and
//! `V_s` into the neighbours.

use alloc::vec;
use core::ops::Range;

use crate::kernels::{normal_stream, Side};
use crate::layout::{BlockId, Dims, Layout, StoreRole};
use crate::task::{Access, Kernel, Task, TaskList, View};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FactorOptions {
    /// Power-iteration count.
    pub q: usize,
    /// Accumulate `U` explicitly.
    pub build_u: bool,
    /// Apply left transforms to `B` (`m×k`) as they are produced.
    pub rhs: bool,
    /// Seed of the Gaussian sampling tiles.
    pub seed: u64,
    /// Sample and QR-factor in the final step as well, even when the
    /// remaining block is a single `b`-wide panel and the SVD alone
    /// diagonalises it.
    pub full_last_step: bool,
}

impl Default for FactorOptions {
    fn default() -> Self {
        FactorOptions { q: 0, build_u: false, rhs: true, seed: 0, full_last_step: false }
    }
}

struct Builder {
    dims: Dims,
    a: Layout,
    v: Layout,
    u: Layout,
    b: Layout,
    g: Layout,
    y: Layout,
    tl: TaskList,
}

impl Builder {
    fn id(role: StoreRole, i: usize, j: usize) -> BlockId {
        BlockId::new(role, i, j)
    }

    fn layout(&self, role: StoreRole) -> Layout {
        match role {
            StoreRole::A => self.a,
            StoreRole::V => self.v,
            StoreRole::U => self.u,
            StoreRole::B => self.b,
            StoreRole::G => self.g,
            StoreRole::Y => self.y,
            other => self.dims.layout(other),
        }
    }

    fn full(&self, role: StoreRole, i: usize, j: usize, acc: Access) -> View {
        View::full(&self.layout(role), Self::id(role, i, j), acc)
    }

    fn part(&self, role: StoreRole, i: usize, j: usize, rows: Range<usize>, cols: Range<usize>, acc: Access) -> View {
        View::new(Self::id(role, i, j), rows, cols, acc)
    }

    /// Leading `nr` rows and `nc` columns of a tile.
    fn lead(&self, role: StoreRole, i: usize, j: usize, nr: usize, nc: usize, acc: Access) -> View {
        self.part(role, i, j, 0..nr, 0..nc, acc)
    }

    fn out(&self, role: StoreRole, i: usize, j: usize, rows: Range<usize>, cols: Range<usize>) -> View {
        View::output(&self.layout(role), Self::id(role, i, j), rows, cols)
    }

    fn push(&mut self, kernel: Kernel, views: alloc::vec::Vec<View>, step: usize) {
        self.tl.push(Task::new(kernel, views, step));
    }
}

/// Builds the factorization task list for an `m×n` matrix (`dims.k` right-
/// hand sides when `opts.rhs`).
pub fn build_task_list(dims: Dims, opts: &FactorOptions) -> TaskList {
    let mut bd = Builder {
        dims,
        a: dims.layout(StoreRole::A),
        v: dims.layout(StoreRole::V),
        u: dims.layout(StoreRole::U),
        b: dims.layout(StoreRole::B),
        g: dims.layout(StoreRole::G),
        y: dims.layout(StoreRole::Y),
        tl: TaskList::new(),
    };
    let Dims { m, n, nb, .. } = dims;
    let (mt, nt, kt) = (dims.mt(), dims.nt(), dims.kt());
    let rhs = opts.rhs && dims.k > 0;
    let kmin = m.min(n);
    let steps = kmin.div_ceil(nb);
    use StoreRole::*;

    for i in 0..steps {
        let off = i * nb;
        let b = nb.min(kmin - off);
        let ri = bd.a.tile_rows(i);
        let ci = bd.a.tile_cols(i);
        let sample = n - off > b || opts.full_last_step;
        let left_qr = m - off > b || opts.full_last_step;

        if sample {
            for l in i..mt {
                let rl = bd.a.tile_rows(l);
                let g = bd.out(G, l, 0, 0..rl, 0..b);
                bd.push(Kernel::Normal { seed: opts.seed, stream: normal_stream(i, l) }, vec![g], i);
            }
            sample_y(&mut bd, i, b);
            for _ in 0..opts.q {
                for l in i..mt {
                    let rl = bd.a.tile_rows(l);
                    for kk in i..nt {
                        let ck = bd.a.tile_cols(kk);
                        let beta = if kk == i { 0.0 } else { 1.0 };
                        let gv = if kk == i {
                            bd.out(G, l, 0, 0..rl, 0..b)
                        } else {
                            bd.lead(G, l, 0, rl, b, Access::ReadWrite)
                        };
                        let views = vec![bd.full(A, l, kk, Access::Read), bd.lead(Y, kk, 0, ck, b, Access::Read), gv];
                        bd.push(Kernel::GemmNn { alpha: 1.0, beta }, views, i);
                    }
                }
                sample_y(&mut bd, i, b);
            }

            // QR of the sample; its Q multiplies block column i.. from the right
            let views = vec![bd.lead(Y, i, 0, ci, b, Access::ReadWrite), bd.out(TfY, i, 0, 0..b, 0..b)];
            bd.push(Kernel::CompDe, views, i);
            let right = Kernel::ApplDe { side: Side::Right };
            for l in 0..mt {
                let views = vec![
                    bd.lead(Y, i, 0, ci, b, Access::Read),
                    bd.lead(TfY, i, 0, b, b, Access::Read),
                    bd.full(A, l, i, Access::ReadWrite),
                ];
                bd.push(right, views, i);
            }
            for l in 0..nt {
                let views = vec![
                    bd.lead(Y, i, 0, ci, b, Access::Read),
                    bd.lead(TfY, i, 0, b, b, Access::Read),
                    bd.full(V, l, i, Access::ReadWrite),
                ];
                bd.push(right, views, i);
            }
            for kk in i + 1..nt {
                let ck = bd.a.tile_cols(kk);
                let views = vec![
                    bd.lead(Y, i, 0, b, b, Access::ReadWrite),
                    bd.lead(Y, kk, 0, ck, b, Access::ReadWrite),
                    bd.out(TfY, kk, 0, 0..b, 0..b),
                ];
                bd.push(Kernel::CompTd, views, i);
                let right = Kernel::ApplTd { side: Side::Right };
                for (role, rows) in [(A, mt), (V, nt)] {
                    for l in 0..rows {
                        let rl = bd.layout(role).tile_rows(l);
                        let views = vec![
                            bd.lead(Y, kk, 0, ck, b, Access::Read),
                            bd.lead(TfY, kk, 0, b, b, Access::Read),
                            bd.lead(role, l, i, rl, b, Access::ReadWrite),
                            bd.full(role, l, kk, Access::ReadWrite),
                        ];
                        bd.push(right, views, i);
                    }
                }
            }
        }

        if left_qr {
            let views = vec![bd.lead(A, i, i, ri, b, Access::ReadWrite), bd.out(TfA, i, 0, 0..b, 0..b)];
            bd.push(Kernel::CompDe, views, i);
            let lt = Kernel::ApplDe { side: Side::LeftTrans };
            for target in trailing_row_views(&bd, i, i, 0..ri, b) {
                let views = vec![bd.lead(A, i, i, ri, b, Access::Read), bd.lead(TfA, i, 0, b, b, Access::Read), target];
                bd.push(lt, views, i);
            }
            if rhs {
                for c in 0..kt {
                    let views = vec![
                        bd.lead(A, i, i, ri, b, Access::Read),
                        bd.lead(TfA, i, 0, b, b, Access::Read),
                        bd.full(B, i, c, Access::ReadWrite),
                    ];
                    bd.push(lt, views, i);
                }
            }
            if opts.build_u {
                for l in 0..mt {
                    let views = vec![
                        bd.lead(A, i, i, ri, b, Access::Read),
                        bd.lead(TfA, i, 0, b, b, Access::Read),
                        bd.full(U, l, i, Access::ReadWrite),
                    ];
                    bd.push(Kernel::ApplDe { side: Side::Right }, views, i);
                }
            }
            for kk in i + 1..mt {
                let rk = bd.a.tile_rows(kk);
                let views = vec![
                    bd.lead(A, i, i, b, b, Access::ReadWrite),
                    bd.lead(A, kk, i, rk, b, Access::ReadWrite),
                    bd.out(TfA, kk, 0, 0..b, 0..b),
                ];
                bd.push(Kernel::CompTd, views, i);
                let lt = Kernel::ApplTd { side: Side::LeftTrans };
                let tops = trailing_row_views(&bd, i, i, 0..b, b);
                let bots = trailing_row_views(&bd, i, kk, 0..rk, b);
                for (top, bot) in tops.into_iter().zip(bots) {
                    let views =
                        vec![bd.lead(A, kk, i, rk, b, Access::Read), bd.lead(TfA, kk, 0, b, b, Access::Read), top, bot];
                    bd.push(lt, views, i);
                }
                if rhs {
                    for c in 0..kt {
                        let kc = bd.b.tile_cols(c);
                        let views = vec![
                            bd.lead(A, kk, i, rk, b, Access::Read),
                            bd.lead(TfA, kk, 0, b, b, Access::Read),
                            bd.lead(B, i, c, b, kc, Access::ReadWrite),
                            bd.full(B, kk, c, Access::ReadWrite),
                        ];
                        bd.push(lt, views, i);
                    }
                }
                if opts.build_u {
                    for l in 0..mt {
                        let ul = bd.u.tile_rows(l);
                        let views = vec![
                            bd.lead(A, kk, i, rk, b, Access::Read),
                            bd.lead(TfA, kk, 0, b, b, Access::Read),
                            bd.lead(U, l, i, ul, b, Access::ReadWrite),
                            bd.full(U, l, kk, Access::ReadWrite),
                        ];
                        bd.push(Kernel::ApplTd { side: Side::Right }, views, i);
                    }
                }
            }
            bd.push(Kernel::KeepUpp, vec![bd.lead(A, i, i, ri, b, Access::ReadWrite)], i);
        }

        // small SVD of the diagonal block
        let views = vec![
            bd.lead(A, i, i, b, b, Access::ReadWrite),
            bd.out(Svd, 0, 0, 0..b, 0..b),
            bd.out(Svd, 0, 1, 0..b, 0..b),
        ];
        bd.push(Kernel::Svd, views, i);
        let vt = bd.lead(Svd, 0, 1, b, b, Access::Read);
        let us = bd.lead(Svd, 0, 0, b, b, Access::Read);
        for l in 0..i {
            let rl = bd.a.tile_rows(l);
            bd.push(Kernel::GemmAabt, vec![vt.clone(), bd.lead(A, l, i, rl, b, Access::ReadWrite)], i);
        }
        for target in trailing_row_views(&bd, i, i, 0..b, b) {
            bd.push(Kernel::GemmAbta, vec![us.clone(), target], i);
        }
        for l in 0..nt {
            let vl = bd.v.tile_rows(l);
            bd.push(Kernel::GemmAabt, vec![vt.clone(), bd.lead(V, l, i, vl, b, Access::ReadWrite)], i);
        }
        if rhs {
            for c in 0..kt {
                let kc = bd.b.tile_cols(c);
                bd.push(Kernel::GemmAbta, vec![us.clone(), bd.lead(B, i, c, b, kc, Access::ReadWrite)], i);
            }
        }
        if opts.build_u {
            for l in 0..mt {
                let ul = bd.u.tile_rows(l);
                bd.push(Kernel::GemmAab, vec![us.clone(), bd.lead(U, l, i, ul, b, Access::ReadWrite)], i);
            }
        }

        if left_qr {
            for kk in i + 1..mt {
                let rk = bd.a.tile_rows(kk);
                bd.push(Kernel::Zero, vec![bd.out(A, kk, i, 0..rk, 0..b)], i);
            }
        }
    }
    bd.tl
}

/// `Y(kk) := Σ_l A(l,kk)ᵀ·G(l)` over the trailing block of step `i`.
fn sample_y(bd: &mut Builder, i: usize, b: usize) {
    use StoreRole::*;
    let (mt, nt) = (bd.dims.mt(), bd.dims.nt());
    for kk in i..nt {
        let ck = bd.a.tile_cols(kk);
        for l in i..mt {
            let rl = bd.a.tile_rows(l);
            let beta = if l == i { 0.0 } else { 1.0 };
            let yv = if l == i { bd.out(Y, kk, 0, 0..ck, 0..b) } else { bd.lead(Y, kk, 0, ck, b, Access::ReadWrite) };
            let views = vec![bd.full(A, l, kk, Access::Read), bd.lead(G, l, 0, rl, b, Access::Read), yv];
            bd.push(Kernel::GemmTn { alpha: 1.0, beta }, views, i);
        }
    }
}

/// Views of tile row `row` to the right of the leading `b` columns of step
/// `i`: the rest of the diagonal tile column (if any) and every later tile
/// column, restricted to `rows`.
fn trailing_row_views(bd: &Builder, i: usize, row: usize, rows: Range<usize>, b: usize) -> alloc::vec::Vec<View> {
    let mut out = alloc::vec::Vec::new();
    let ci = bd.a.tile_cols(i);
    if b < ci {
        out.push(bd.part(StoreRole::A, row, i, rows.clone(), b..ci, Access::ReadWrite));
    }
    for j in i + 1..bd.dims.nt() {
        let cj = bd.a.tile_cols(j);
        out.push(bd.part(StoreRole::A, row, j, rows.clone(), 0..cj, Access::ReadWrite));
    }
    out
}
