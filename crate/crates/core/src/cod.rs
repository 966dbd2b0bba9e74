//! After the factorization: rank decision, clearing the top-right part of
//! `T`, and the triangular solve with back-transformation by `V`.

use alloc::vec;
use core::ops::Range;

use crate::layout::{BlockId, Dims, StoreRole};
use crate::task::{Access, Kernel, Task, TaskList, View};

/// Number of entries with `|d_i| > tau·max_j |d_j|`. Every entry is
/// examined; no ordering of the diagonal is assumed.
pub fn rank_from_diagonal(diag: &[f64], tau: f64) -> usize {
    let max = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if max == 0.0 {
        return 0;
    }
    diag.iter().filter(|d| d.abs() > tau * max).count()
}

fn view(role: StoreRole, i: usize, j: usize, rows: Range<usize>, cols: Range<usize>, acc: Access) -> View {
    View::new(BlockId::new(role, i, j), rows, cols, acc)
}

/// The pieces of `T(rows of block j, r..n)`: one per tile column, as
/// `(tile column, column range within the tile)`.
fn d_pieces(dims: &Dims, r: usize) -> alloc::vec::Vec<(usize, Range<usize>)> {
    let a = dims.layout(StoreRole::A);
    (r / dims.nb..dims.nt())
        .map(|p| {
            let start = r.saturating_sub(p * dims.nb);
            (p, start..a.tile_cols(p))
        })
        .filter(|(_, c)| !c.is_empty())
        .collect()
}

/// Tasks that zero `T(0..r, r..n)` by orthogonal transforms from the right,
/// accumulated into `V`. Diagonal blocks of `T(0..r, 0..r)` are processed
/// bottom-up; within a block the trailing pieces are cleared one tile
/// column at a time. Empty when `r = 0` or `r = n`.
pub fn nullify_task_list(dims: Dims, r: usize) -> TaskList {
    let mut tl = TaskList::new();
    if r == 0 || r >= dims.n {
        return tl;
    }
    use StoreRole::*;
    let a = dims.layout(A);
    let vl = dims.layout(V);
    let pieces = d_pieces(&dims, r);
    for j in (0..r.div_ceil(dims.nb)).rev() {
        let cj = dims.nb.min(r - j * dims.nb);
        for (p, cols) in &pieces {
            let zv = |acc| view(A, j, *p, 0..cj, cols.clone(), acc);
            tl.push(Task::new(
                Kernel::CompRz,
                vec![
                    view(A, j, j, 0..cj, 0..cj, Access::ReadWrite),
                    zv(Access::ReadWrite),
                    View::output(&dims.layout(TfRz), BlockId::new(TfRz, *p, 0), 0..cj, 0..cj),
                ],
                j,
            ));
            let apply = Kernel::ApplRRz { transpose: false };
            for k in 0..j {
                let rk = a.tile_rows(k);
                tl.push(Task::new(
                    apply,
                    vec![
                        zv(Access::Read),
                        view(TfRz, *p, 0, 0..cj, 0..cj, Access::Read),
                        view(A, k, j, 0..rk, 0..cj, Access::ReadWrite),
                        view(A, k, *p, 0..rk, cols.clone(), Access::ReadWrite),
                    ],
                    j,
                ));
            }
            for l in 0..dims.nt() {
                let rl = vl.tile_rows(l);
                tl.push(Task::new(
                    apply,
                    vec![
                        zv(Access::Read),
                        view(TfRz, *p, 0, 0..cj, 0..cj, Access::Read),
                        view(V, l, j, 0..rl, 0..cj, Access::ReadWrite),
                        view(V, l, *p, 0..rl, cols.clone(), Access::ReadWrite),
                    ],
                    j,
                ));
            }
            tl.push(Task::new(Kernel::Zero, vec![View::output(&a, BlockId::new(A, j, *p), 0..cj, cols.clone())], j));
        }
    }
    tl
}

/// Tasks computing `X = V(:,0..r)·T(0..r,0..r)⁻¹·B(0..r,:)`, where `B`
/// already holds `Uᵀ·B`. The leading rows of `B` are overwritten by the
/// triangular solve. When `T(0..r, r..n)` has not been cleared this is
/// the truncated solution.
pub fn solve_task_list(dims: Dims, r: usize) -> TaskList {
    let mut tl = TaskList::new();
    use StoreRole::*;
    let a = dims.layout(A);
    let bl = dims.layout(B);
    let vl = dims.layout(V);
    let xl = dims.layout(X);
    if r == 0 {
        for l in 0..xl.block_rows() {
            for c in 0..xl.block_cols() {
                tl.push(Task::new(Kernel::Zero, vec![View::full(&xl, BlockId::new(X, l, c), Access::WriteOnly)], 0));
            }
        }
        return tl;
    }
    let rb = r.div_ceil(dims.nb);
    let width = |j: usize| dims.nb.min(r - j * dims.nb);
    for j in (0..rb).rev() {
        let cj = width(j);
        for c in 0..dims.kt() {
            let kc = bl.tile_cols(c);
            tl.push(Task::new(
                Kernel::Trsm,
                vec![view(A, j, j, 0..cj, 0..cj, Access::Read), view(B, j, c, 0..cj, 0..kc, Access::ReadWrite)],
                j,
            ));
            for l in 0..j {
                let rl = a.tile_rows(l);
                tl.push(Task::new(
                    Kernel::GemmNn { alpha: -1.0, beta: 1.0 },
                    vec![
                        view(A, l, j, 0..rl, 0..cj, Access::Read),
                        view(B, j, c, 0..cj, 0..kc, Access::Read),
                        view(B, l, c, 0..bl.tile_rows(l), 0..kc, Access::ReadWrite),
                    ],
                    j,
                ));
            }
        }
    }
    for l in 0..dims.nt() {
        let nl = vl.tile_rows(l);
        for c in 0..dims.kt() {
            let kc = bl.tile_cols(c);
            for j in 0..rb {
                let cj = width(j);
                let (beta, acc) = if j == 0 { (0.0, Access::WriteOnly) } else { (1.0, Access::ReadWrite) };
                tl.push(Task::new(
                    Kernel::GemmNn { alpha: 1.0, beta },
                    vec![
                        view(V, l, j, 0..nl, 0..cj, Access::Read),
                        view(B, j, c, 0..cj, 0..kc, Access::Read),
                        view(X, l, c, 0..nl, 0..kc, acc),
                    ],
                    rb,
                ));
            }
        }
    }
    tl
}
