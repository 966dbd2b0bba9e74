use super::blas::{dot, gemm_nn, gemm_nt, gemm_tn};
use super::Side;
use crate::error::{shape, KernelError};
use crate::mat::Mat;

/// Computes a reflector `H = I - tau·v·vᵀ` with `v = [1; x']` such that
/// `H·[alpha; x] = [beta; 0]` and `beta >= 0`. On return `x` holds `x'`.
pub fn house(alpha: f64, x: &mut [f64]) -> (f64, f64) {
    let sigma = dot(x, x);
    if sigma == 0.0 {
        return if alpha >= 0.0 { (0.0, alpha) } else { (2.0, -alpha) };
    }
    let mu = libm::hypot(alpha, libm::sqrt(sigma));
    let v1 = if alpha <= 0.0 { alpha - mu } else { -sigma / (alpha + mu) };
    let tau = 2.0 * v1 * v1 / (sigma + v1 * v1);
    let inv = 1.0 / v1;
    x.iter_mut().for_each(|xi| *xi *= inv);
    (tau, mu)
}

/// `y := T·y` for the leading `n×n` upper triangle of `t`.
fn upper_mul_vec(t: &Mat, n: usize, y: &mut [f64]) {
    for a in 0..n {
        let mut s = 0.0;
        for b in a..n {
            s += t[(a, b)] * y[b];
        }
        y[a] = s;
    }
}

/// Householder QR of a full tile, in place. `R` is left in the upper
/// triangle and the reflector tails below it. Returns the `k×k` upper
/// triangular `Tf` of the compact-WY form, `k = min(rows, cols)`.
pub fn qr_dense(p: &mut Mat) -> Result<Mat, KernelError> {
    let (r, c) = p.shape();
    let k = r.min(c);
    let mut tf = Mat::zeros(k, k);
    for j in 0..k {
        let alpha = p[(j, j)];
        let (tau, beta) = house(alpha, &mut p.col_mut(j)[j + 1..]);
        p[(j, j)] = beta;
        for l in j + 1..c {
            let (vj, cl) = p.two_cols_mut(j, l);
            let s = cl[j] + dot(&vj[j + 1..], &cl[j + 1..]);
            let ts = tau * s;
            cl[j] -= ts;
            for (ci, vi) in cl[j + 1..].iter_mut().zip(&vj[j + 1..]) {
                *ci -= ts * vi;
            }
        }
        let mut t: alloc::vec::Vec<f64> =
            (0..j).map(|q| p[(j, q)] + dot(&p.col(q)[j + 1..], &p.col(j)[j + 1..])).collect();
        upper_mul_vec(&tf, j, &mut t);
        for (q, tq) in t.into_iter().enumerate() {
            tf[(q, j)] = -tau * tq;
        }
        tf[(j, j)] = tau;
    }
    Ok(tf)
}

/// QR of a triangle stacked on a dense block: `[R; D] = Q·[R'; 0]` with
/// `Q = I - V·Tf·Vᵀ`, `V = [I; D']`. `R` must be square with the same
/// column count as `D`; only its upper triangle is read or written. `D` is
/// overwritten with `D'`.
pub fn qr_triangular_dense(rt: &mut Mat, d: &mut Mat) -> Result<Mat, KernelError> {
    let b = rt.cols();
    if rt.rows() != b || d.cols() != b {
        return Err(shape("qr_triangular_dense", "R must be b×b over D of b columns"));
    }
    let mut tf = Mat::zeros(b, b);
    for j in 0..b {
        let (tau, beta) = house(rt[(j, j)], d.col_mut(j));
        rt[(j, j)] = beta;
        for l in j + 1..b {
            let (dj, dl) = d.two_cols_mut(j, l);
            let s = rt[(j, l)] + dot(dj, dl);
            let ts = tau * s;
            rt[(j, l)] -= ts;
            for (ci, vi) in dl.iter_mut().zip(dj.iter()) {
                *ci -= ts * vi;
            }
        }
        let mut t: alloc::vec::Vec<f64> = (0..j).map(|q| dot(d.col(q), d.col(j))).collect();
        upper_mul_vec(&tf, j, &mut t);
        for (q, tq) in t.into_iter().enumerate() {
            tf[(q, j)] = -tau * tq;
        }
        tf[(j, j)] = tau;
    }
    Ok(tf)
}

/// Unit lower trapezoidal `W` from the first `k` columns of a factored panel.
fn unit_lower(w: &Mat, k: usize) -> Mat {
    Mat::from_fn(w.rows(), k, |i, j| match i.cmp(&j) {
        core::cmp::Ordering::Less => 0.0,
        core::cmp::Ordering::Equal => 1.0,
        core::cmp::Ordering::Greater => w[(i, j)],
    })
}

/// Applies `Q = I - W·Tf·Wᵀ` from a factored full panel to `c`.
pub fn apply_q_dense(w: &Mat, tf: &Mat, side: Side, c: &mut Mat) -> Result<(), KernelError> {
    let k = tf.rows();
    if tf.cols() != k || w.cols() < k || w.rows() < k {
        return Err(shape("apply_q_dense", "Tf must be k×k over a panel of at least k columns"));
    }
    let wl = unit_lower(w, k);
    let r = w.rows();
    match side {
        Side::Left | Side::LeftTrans => {
            if c.rows() != r {
                return Err(shape("apply_q_dense", "target rows must match reflector length"));
            }
            let mut wk = Mat::zeros(k, c.cols());
            gemm_tn(1.0, &wl, c, 0.0, &mut wk)?;
            let mut wk2 = Mat::zeros(k, c.cols());
            if side == Side::LeftTrans {
                gemm_tn(1.0, tf, &wk, 0.0, &mut wk2)?;
            } else {
                gemm_nn(1.0, tf, &wk, 0.0, &mut wk2)?;
            }
            gemm_nn(-1.0, &wl, &wk2, 1.0, c)
        }
        Side::Right | Side::RightTrans => {
            if c.cols() != r {
                return Err(shape("apply_q_dense", "target columns must match reflector length"));
            }
            let mut wk = Mat::zeros(c.rows(), k);
            gemm_nn(1.0, c, &wl, 0.0, &mut wk)?;
            let mut wk2 = Mat::zeros(c.rows(), k);
            if side == Side::Right {
                gemm_nn(1.0, &wk, tf, 0.0, &mut wk2)?;
            } else {
                gemm_nt(1.0, &wk, tf, 0.0, &mut wk2)?;
            }
            gemm_nt(-1.0, &wk2, &wl, 1.0, c)
        }
    }
}

/// Applies the factor of [`qr_triangular_dense`] to a split target. For
/// left sides the target is `[top; bot]` (`top` has `b` rows); for right
/// sides it is `[top bot]` (`top` has `b` columns).
pub fn apply_q_td(dw: &Mat, tf: &Mat, side: Side, top: &mut Mat, bot: &mut Mat) -> Result<(), KernelError> {
    let b = tf.rows();
    let d = dw.rows();
    if tf.cols() != b || dw.cols() != b {
        return Err(shape("apply_q_td", "Tf must be b×b and D d×b"));
    }
    match side {
        Side::Left | Side::LeftTrans => {
            if top.rows() != b || bot.rows() != d || top.cols() != bot.cols() {
                return Err(shape("apply_q_td", "left target must be [b×w; d×w]"));
            }
            let mut wk = top.clone();
            gemm_tn(1.0, dw, bot, 1.0, &mut wk)?;
            let mut wk2 = Mat::zeros(b, wk.cols());
            if side == Side::LeftTrans {
                gemm_tn(1.0, tf, &wk, 0.0, &mut wk2)?;
            } else {
                gemm_nn(1.0, tf, &wk, 0.0, &mut wk2)?;
            }
            sub_assign(top, &wk2);
            gemm_nn(-1.0, dw, &wk2, 1.0, bot)
        }
        Side::Right | Side::RightTrans => {
            if top.cols() != b || bot.cols() != d || top.rows() != bot.rows() {
                return Err(shape("apply_q_td", "right target must be [r×b, r×d]"));
            }
            let mut wk = top.clone();
            gemm_nn(1.0, bot, dw, 1.0, &mut wk)?;
            let mut wk2 = Mat::zeros(wk.rows(), b);
            if side == Side::Right {
                gemm_nn(1.0, &wk, tf, 0.0, &mut wk2)?;
            } else {
                gemm_nt(1.0, &wk, tf, 0.0, &mut wk2)?;
            }
            sub_assign(top, &wk2);
            gemm_nt(-1.0, &wk2, dw, 1.0, bot)
        }
    }
}

pub(super) fn sub_assign(a: &mut Mat, b: &Mat) {
    for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *x -= y;
    }
}

/// Forms `Q` explicitly from a factored full panel.
pub fn explicit_q_dense(w: &Mat, tf: &Mat) -> Result<Mat, KernelError> {
    let mut q = Mat::identity(w.rows());
    apply_q_dense(w, tf, Side::Left, &mut q)?;
    Ok(q)
}

/// Forms the `(b+d)×(b+d)` `Q` of a triangular-on-dense factorization.
pub fn explicit_q_td(dw: &Mat, tf: &Mat) -> Result<Mat, KernelError> {
    let b = tf.rows();
    let n = b + dw.rows();
    let eye = Mat::identity(n);
    let mut top = eye.sub(0..b, 0..n);
    let mut bot = eye.sub(b..n, 0..n);
    apply_q_td(dw, tf, Side::Left, &mut top, &mut bot)?;
    let mut q = Mat::zeros(n, n);
    q.set_sub(0, 0, &top);
    q.set_sub(b, 0, &bot);
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::keep_upper;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    }

    fn rand_mat(r: usize, c: usize, seed: &mut u64) -> Mat {
        Mat::from_fn(r, c, |_, _| lcg(seed))
    }

    fn orth_err(q: &Mat) -> f64 {
        q.transpose().matmul(q).minus(&Mat::identity(q.cols())).fro_norm()
    }

    #[test]
    fn house_zeroes_tail_with_nonnegative_beta() {
        for alpha in [3.0, -3.0, 0.0] {
            let x0 = [4.0, 0.0];
            let mut x = x0;
            let (tau, beta) = house(alpha, &mut x);
            let norm = libm::hypot(alpha, 4.0);
            assert!((beta - norm).abs() < 1e-14, "beta {beta} for alpha {alpha}");
            // H applied to the original vector
            let v = [1.0, x[0], x[1]];
            let a = [alpha, x0[0], x0[1]];
            let s: f64 = v.iter().zip(&a).map(|(p, q)| p * q).sum();
            let ha: alloc::vec::Vec<f64> = a.iter().zip(&v).map(|(ai, vi)| ai - tau * s * vi).collect();
            assert!((ha[0] - norm).abs() < 1e-14 && ha[1].abs() < 1e-14 && ha[2].abs() < 1e-14);
        }
        let mut z = [0.0; 3];
        assert_eq!(house(2.0, &mut z), (0.0, 2.0));
        assert_eq!(house(-2.0, &mut z), (2.0, 2.0));
    }

    #[test]
    fn qr_dense_reconstructs() {
        let mut s = 11;
        for (r, c) in [(8, 8), (10, 6), (5, 7), (1, 1)] {
            let a = rand_mat(r, c, &mut s);
            let mut p = a.clone();
            let tf = qr_dense(&mut p).unwrap();
            let q = explicit_q_dense(&p, &tf).unwrap();
            let mut rr = p.clone();
            keep_upper(&mut rr);
            let rec = q.matmul(&rr).minus(&a).fro_norm() / a.fro_norm();
            assert!(rec < 1e-14 * 20.0, "({r},{c}) rec {rec}");
            assert!(orth_err(&q) < 1e-13);
            for i in 0..r.min(c) {
                assert!(rr[(i, i)] >= 0.0);
            }
        }
    }

    #[test]
    fn all_sides_agree_with_explicit_q() {
        let mut s = 5;
        let mut p = rand_mat(7, 4, &mut s);
        let tf = qr_dense(&mut p).unwrap();
        let q = explicit_q_dense(&p, &tf).unwrap();
        let c = rand_mat(7, 3, &mut s);
        let ct = c.transpose();
        let cases: [(Side, Mat, Mat); 4] = [
            (Side::LeftTrans, c.clone(), q.transpose().matmul(&c)),
            (Side::Left, c.clone(), q.matmul(&c)),
            (Side::Right, ct.clone(), ct.matmul(&q)),
            (Side::RightTrans, ct.clone(), ct.matmul(&q.transpose())),
        ];
        for (side, mut target, expect) in cases {
            apply_q_dense(&p, &tf, side, &mut target).unwrap();
            assert!(target.minus(&expect).fro_norm() < 1e-13, "{side:?}");
        }
    }

    #[test]
    fn triangular_dense_reconstructs() {
        let mut s = 9;
        let b = 5;
        let mut rt = rand_mat(b, b, &mut s);
        keep_upper(&mut rt);
        let d0 = rand_mat(8, b, &mut s);
        let mut stacked = Mat::zeros(b + 8, b);
        stacked.set_sub(0, 0, &rt);
        stacked.set_sub(b, 0, &d0);

        let mut r1 = rt.clone();
        let mut d = d0.clone();
        let tf = qr_triangular_dense(&mut r1, &mut d).unwrap();
        let q = explicit_q_td(&d, &tf).unwrap();
        assert!(orth_err(&q) < 1e-13);
        let mut rfac = Mat::zeros(b + 8, b);
        rfac.set_sub(0, 0, &r1);
        let rec = q.matmul(&rfac).minus(&stacked).fro_norm() / stacked.fro_norm();
        assert!(rec < 1e-14 * 20.0, "rec {rec}");
        for i in 0..b {
            assert!(r1[(i, i)] >= 0.0);
        }

        // left-transposed apply reproduces [R'; 0] from the original stack
        let mut top = rt.clone();
        let mut bot = d0.clone();
        apply_q_td(&d, &tf, Side::LeftTrans, &mut top, &mut bot).unwrap();
        let mut r1u = r1.clone();
        keep_upper(&mut r1u);
        assert!(top.minus(&r1u).fro_norm() < 1e-13);
        assert!(bot.fro_norm() < 1e-13);

        // right apply agrees with explicit Q
        let c = rand_mat(3, b + 8, &mut s);
        let expect = c.matmul(&q);
        let mut cl = c.sub(0..3, 0..b);
        let mut cr = c.sub(0..3, b..b + 8);
        apply_q_td(&d, &tf, Side::Right, &mut cl, &mut cr).unwrap();
        assert!(cl.minus(&expect.sub(0..3, 0..b)).fro_norm() < 1e-13);
        assert!(cr.minus(&expect.sub(0..3, b..b + 8)).fro_norm() < 1e-13);
    }
}
