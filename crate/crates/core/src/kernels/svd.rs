use alloc::vec::Vec;

use super::blas::dot;
use crate::error::{shape, KernelError};
use crate::mat::Mat;

pub const MAX_SWEEPS: usize = 60;

/// `A = U·diag(sigma)·Vᵀ` of a small square block, singular values in
/// descending order.
#[derive(Clone, Debug)]
pub struct SmallSvd {
    pub u: Mat,
    pub sigma: Vec<f64>,
    pub v: Mat,
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let (a, b) = (*xi, *yi);
        *xi = c * a - s * b;
        *yi = s * a + c * b;
    }
}

/// One-sided Jacobi SVD. Columns are orthogonalized pairwise until every
/// pair satisfies `|u_pᵀu_q| <= eps·‖u_p‖‖u_q‖`.
pub fn svd_dense(a: &Mat) -> Result<SmallSvd, KernelError> {
    let n = a.cols();
    if a.rows() != n {
        return Err(shape("svd_dense", "block must be square"));
    }
    let mut u = a.clone();
    let mut v = Mat::identity(n);
    let eps = f64::EPSILON;
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(u.col(p), u.col(p));
                let beta = dot(u.col(q), u.col(q));
                let gamma = dot(u.col(p), u.col(q));
                if gamma == 0.0 || gamma.abs() <= eps * libm::sqrt(alpha) * libm::sqrt(beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta.abs() > 1e150 {
                    0.5 / zeta
                } else {
                    let sgn = if zeta >= 0.0 { 1.0 } else { -1.0 };
                    sgn / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                let (up, uq) = u.two_cols_mut(p, q);
                rotate(up, uq, c, s);
                let (vp, vq) = v.two_cols_mut(p, q);
                rotate(vp, vq, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(KernelError::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let norms: Vec<f64> = (0..n).map(|j| libm::sqrt(dot(u.col(j), u.col(j)))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap_or(core::cmp::Ordering::Equal));

    let mut us = Mat::zeros(n, n);
    let mut vs = Mat::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let nrm = norms[src];
        sigma.push(nrm);
        vs.col_mut(dst).copy_from_slice(v.col(src));
        if nrm > f64::MIN_POSITIVE {
            for (o, x) in us.col_mut(dst).iter_mut().zip(u.col(src)) {
                *o = x / nrm;
            }
        } else {
            missing.push(dst);
        }
    }
    complete_basis(&mut us, &missing);
    Ok(SmallSvd { u: us, sigma, v: vs })
}

/// Fills the listed columns with unit vectors orthogonal to all others, by
/// Gram-Schmidt over the coordinate axes.
fn complete_basis(u: &mut Mat, missing: &[usize]) {
    let n = u.rows();
    let mut filled: Vec<bool> = (0..u.cols()).map(|j| !missing.contains(&j)).collect();
    let mut axis = 0;
    for &j in missing {
        while axis < n {
            let mut w: Vec<f64> = (0..n).map(|i| if i == axis { 1.0 } else { 0.0 }).collect();
            axis += 1;
            for _ in 0..2 {
                for k in (0..u.cols()).filter(|&k| filled[k]) {
                    let h = dot(u.col(k), &w);
                    for (wi, ui) in w.iter_mut().zip(u.col(k)) {
                        *wi -= h * ui;
                    }
                }
            }
            let nrm = libm::sqrt(dot(&w, &w));
            if nrm > 0.5 {
                for (o, wi) in u.col_mut(j).iter_mut().zip(&w) {
                    *o = wi / nrm;
                }
                filled[j] = true;
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    }

    fn check(a: &Mat, f: &SmallSvd) {
        let n = a.rows();
        let tol = 100.0 * f64::EPSILON * n as f64 * a.fro_norm().max(1.0);
        let rec = f.u.matmul(&Mat::diag(&f.sigma)).matmul(&f.v.transpose());
        assert!(rec.minus(a).fro_norm() <= tol, "reconstruction");
        let id = Mat::identity(n);
        assert!(f.u.transpose().matmul(&f.u).minus(&id).fro_norm() <= 100.0 * f64::EPSILON * n as f64);
        assert!(f.v.transpose().matmul(&f.v).minus(&id).fro_norm() <= 100.0 * f64::EPSILON * n as f64);
        for w in f.sigma.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(f.sigma.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn random_block() {
        let mut s = 17;
        let a = Mat::from_fn(8, 8, |_, _| lcg(&mut s));
        check(&a, &svd_dense(&a).unwrap());
    }

    #[test]
    fn diagonal_sorted() {
        let a = Mat::diag(&[1.0, 3.0, 2.0]);
        let f = svd_dense(&a).unwrap();
        assert_eq!(f.sigma, [3.0, 2.0, 1.0]);
        check(&a, &f);
    }

    #[test]
    fn zero_and_rank_one_blocks_get_orthonormal_u() {
        let z = Mat::zeros(4, 4);
        let f = svd_dense(&z).unwrap();
        assert!(f.sigma.iter().all(|&x| x == 0.0));
        check(&z, &f);

        let r1 = Mat::from_fn(5, 5, |i, j| (i + 1) as f64 * (j as f64 - 2.0));
        let f = svd_dense(&r1).unwrap();
        check(&r1, &f);
        assert!(f.sigma[1] <= 1e-12 * f.sigma[0]);
    }

    #[test]
    fn rejects_rectangular() {
        assert!(svd_dense(&Mat::zeros(3, 2)).is_err());
    }
}
