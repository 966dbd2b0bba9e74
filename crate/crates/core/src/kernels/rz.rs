use alloc::vec::Vec;

use super::blas::{dot, gemm_nn, gemm_nt};
use super::householder::{house, sub_assign};
use crate::error::{shape, KernelError};
use crate::mat::Mat;

/// Annihilates `D` in `[C11 D]` from the right, with `C11` upper triangular:
/// `[C11 D]·Q = [C11' 0]`. Rows are processed last to first; reflector `jj`
/// acts on column `jj` of `C11` and all columns of `D`, and its tail is left
/// in row `jj` of `D`.
///
/// The returned `Tf` is indexed by reflector row (so it is lower
/// triangular) and satisfies `Q = I - Vn·Tf·Vnᵀ` with `Vn = [I; Zᵀ]`.
pub fn rz_nullify(c: &mut Mat, d: &mut Mat) -> Result<Mat, KernelError> {
    let cj = c.rows();
    if c.cols() != cj || d.rows() != cj {
        return Err(shape("rz_nullify", "C11 must be square with D of the same row count"));
    }
    let w = d.cols();
    let mut tf = Mat::zeros(cj, cj);
    let mut z = Vec::with_capacity(w);
    let mut s = Vec::with_capacity(cj);
    for jj in (0..cj).rev() {
        z.clear();
        z.extend((0..w).map(|l| d[(jj, l)]));
        let (tau, beta) = house(c[(jj, jj)], &mut z);
        c[(jj, jj)] = beta;
        for (l, &zl) in z.iter().enumerate() {
            d[(jj, l)] = zl;
        }

        // rows above jj: s = C(0..jj, jj) + D(0..jj, :)·z
        s.clear();
        s.extend_from_slice(&c.col(jj)[..jj]);
        for (l, &zl) in z.iter().enumerate() {
            if zl != 0.0 {
                for (si, di) in s.iter_mut().zip(&d.col(l)[..jj]) {
                    *si += di * zl;
                }
            }
        }
        for (cv, si) in c.col_mut(jj)[..jj].iter_mut().zip(&s) {
            *cv -= tau * si;
        }
        for (l, &zl) in z.iter().enumerate() {
            let f = tau * zl;
            if f != 0.0 {
                for (dv, si) in d.col_mut(l)[..jj].iter_mut().zip(&s) {
                    *dv -= f * si;
                }
            }
        }

        // Tf(a, jj) = -tau · Σ_{jj<b<=a} Tf(a, b)·(z_b·z_jj)
        let y: Vec<f64> = (jj + 1..cj)
            .map(|b| {
                let zb: Vec<f64> = (0..w).map(|l| d[(b, l)]).collect();
                dot(&zb, &z)
            })
            .collect();
        for a in jj + 1..cj {
            let mut acc = 0.0;
            for b in jj + 1..=a {
                acc += tf[(a, b)] * y[b - jj - 1];
            }
            tf[(a, jj)] = -tau * acc;
        }
        tf[(jj, jj)] = tau;
    }
    Ok(tf)
}

/// `[E F] := [E F]·Q` (or `·Qᵀ` when `transpose`), with `Q` from
/// [`rz_nullify`]; `zd` is the factored `D` and `tf` its triangular factor.
pub fn apply_rz_right(zd: &Mat, tf: &Mat, e: &mut Mat, f: &mut Mat, transpose: bool) -> Result<(), KernelError> {
    let cj = tf.rows();
    if tf.cols() != cj || zd.rows() != cj || e.cols() != cj || f.cols() != zd.cols() || e.rows() != f.rows() {
        return Err(shape("apply_rz_right", "target must be [r×cj, r×w] for a cj×w reflector block"));
    }
    let mut wk = e.clone();
    gemm_nt(1.0, f, zd, 1.0, &mut wk)?;
    let mut wk2 = Mat::zeros(wk.rows(), cj);
    if transpose {
        gemm_nt(1.0, &wk, tf, 0.0, &mut wk2)?;
    } else {
        gemm_nn(1.0, &wk, tf, 0.0, &mut wk2)?;
    }
    sub_assign(e, &wk2);
    gemm_nn(-1.0, &wk2, zd, 1.0, f)
}

/// Forms the square `Q` of [`rz_nullify`] explicitly.
pub fn explicit_z(zd: &Mat, tf: &Mat) -> Result<Mat, KernelError> {
    let cj = tf.rows();
    let n = cj + zd.cols();
    let eye = Mat::identity(n);
    let mut e = eye.sub(0..n, 0..cj);
    let mut f = eye.sub(0..n, cj..n);
    apply_rz_right(zd, tf, &mut e, &mut f, false)?;
    let mut q = Mat::zeros(n, n);
    q.set_sub(0, 0, &e);
    q.set_sub(0, cj, &f);
    Ok(q)
}
