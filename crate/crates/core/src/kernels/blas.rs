use crate::error::{shape, KernelError};
use crate::mat::Mat;

/// Dot product with four independent accumulators. The summation order is
/// fixed, so results are reproducible bit for bit.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let k = c * 4;
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for k in chunks * 4..n {
        s += a[k] * b[k];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn scale_or_clear(c: &mut Mat, beta: f64) {
    if beta == 0.0 {
        c.fill(0.0);
    } else if beta != 1.0 {
        c.as_mut_slice().iter_mut().for_each(|v| *v *= beta);
    }
}

/// `C := beta·C + alpha·A·B`.
pub fn gemm_nn(alpha: f64, a: &Mat, b: &Mat, beta: f64, c: &mut Mat) -> Result<(), KernelError> {
    if a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols() {
        return Err(shape("gemm_nn", "C(m×n) = A(m×k)·B(k×n)"));
    }
    scale_or_clear(c, beta);
    for j in 0..b.cols() {
        let bj = b.col(j);
        let cj = c.col_mut(j);
        for (p, &bpj) in bj.iter().enumerate() {
            if bpj != 0.0 {
                axpy(alpha * bpj, a.col(p), cj);
            }
        }
    }
    Ok(())
}

/// `C := beta·C + alpha·Aᵀ·B`.
pub fn gemm_tn(alpha: f64, a: &Mat, b: &Mat, beta: f64, c: &mut Mat) -> Result<(), KernelError> {
    if a.rows() != b.rows() || c.rows() != a.cols() || c.cols() != b.cols() {
        return Err(shape("gemm_tn", "C(m×n) = Aᵀ(m×k)·B(k×n)"));
    }
    for j in 0..b.cols() {
        for i in 0..a.cols() {
            let s = dot(a.col(i), b.col(j));
            let v = &mut c[(i, j)];
            *v = if beta == 0.0 { alpha * s } else { beta * *v + alpha * s };
        }
    }
    Ok(())
}

/// `C := beta·C + alpha·A·Bᵀ`.
pub fn gemm_nt(alpha: f64, a: &Mat, b: &Mat, beta: f64, c: &mut Mat) -> Result<(), KernelError> {
    if a.cols() != b.cols() || c.rows() != a.rows() || c.cols() != b.rows() {
        return Err(shape("gemm_nt", "C(m×n) = A(m×k)·Bᵀ(k×n)"));
    }
    scale_or_clear(c, beta);
    for p in 0..a.cols() {
        let ap = a.col(p);
        for j in 0..b.rows() {
            let s = b[(j, p)];
            if s != 0.0 {
                axpy(alpha * s, ap, c.col_mut(j));
            }
        }
    }
    Ok(())
}

/// `C := C·Bᵀ` (the `Gemm_aabt` task form).
pub fn gemm_aabt(c: &mut Mat, b: &Mat) -> Result<(), KernelError> {
    let mut out = Mat::zeros(c.rows(), b.rows());
    gemm_nt(1.0, c, b, 0.0, &mut out).map_err(|_| shape("gemm_aabt", "C := C·Bᵀ"))?;
    *c = out;
    Ok(())
}

/// `C := Bᵀ·C` (the `Gemm_abta` task form).
pub fn gemm_abta(c: &mut Mat, b: &Mat) -> Result<(), KernelError> {
    let mut out = Mat::zeros(b.cols(), c.cols());
    gemm_tn(1.0, b, c, 0.0, &mut out).map_err(|_| shape("gemm_abta", "C := Bᵀ·C"))?;
    *c = out;
    Ok(())
}

/// `C := C·B` (the `Gemm_aab` task form).
pub fn gemm_aab(c: &mut Mat, b: &Mat) -> Result<(), KernelError> {
    let mut out = Mat::zeros(c.rows(), b.cols());
    gemm_nn(1.0, c, b, 0.0, &mut out).map_err(|_| shape("gemm_aab", "C := C·B"))?;
    *c = out;
    Ok(())
}

/// `B := T⁻¹·B` for upper-triangular `T` (back substitution, column by
/// column of `B`).
pub fn trsm_upper(t: &Mat, b: &mut Mat) -> Result<(), KernelError> {
    let n = t.rows();
    if t.cols() != n || b.rows() != n {
        return Err(shape("trsm_upper", "T must be n×n and B n×k"));
    }
    if let Some(index) = (0..n).find(|&i| t[(i, i)] == 0.0) {
        return Err(KernelError::SingularBlock { index });
    }
    for j in 0..b.cols() {
        let bj = b.col_mut(j);
        for i in (0..n).rev() {
            let xi = bj[i] / t[(i, i)];
            bj[i] = xi;
            if xi != 0.0 {
                let ti = &t.col(i)[..i];
                for (bk, tk) in bj[..i].iter_mut().zip(ti) {
                    *bk -= tk * xi;
                }
            }
        }
    }
    Ok(())
}

/// Zeroes everything strictly below the main diagonal.
pub fn keep_upper(a: &mut Mat) {
    for j in 0..a.cols() {
        let col = a.col_mut(j);
        let start = (j + 1).min(col.len());
        col[start..].iter_mut().for_each(|v| *v = 0.0);
    }
}

pub fn zero_tile(rows: usize, cols: usize) -> Mat {
    Mat::zeros(rows, cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    }

    fn rand_mat(r: usize, c: usize, seed: &mut u64) -> Mat {
        Mat::from_fn(r, c, |_, _| lcg(seed))
    }

    fn naive(a: &Mat, b: &Mat) -> Mat {
        Mat::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|p| a[(i, p)] * b[(p, j)]).sum())
    }

    #[test]
    fn identity_b_copies_a() {
        let mut s = 1;
        let a = rand_mat(4, 3, &mut s);
        let mut c = Mat::zeros(4, 3);
        gemm_nn(1.0, &a, &Mat::identity(3), 0.0, &mut c).unwrap();
        assert_eq!(c, a);
        gemm_nn(1.0, &a, &Mat::identity(3), 1.0, &mut c).unwrap();
        assert_eq!(c[(2, 1)], 2.0 * a[(2, 1)]);
    }

    #[test]
    fn two_by_two_integers() {
        let a = Mat::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Mat::from_rows(&[&[5.0, 6.0], &[7.0, 8.0]]);
        let mut c = Mat::zeros(2, 2);
        gemm_nn(1.0, &a, &b, 0.0, &mut c).unwrap();
        assert_eq!(c, Mat::from_rows(&[&[19.0, 22.0], &[43.0, 50.0]]));
    }

    #[test]
    fn modes_match_triple_loop() {
        let mut s = 7;
        let (m, k, n) = (9, 13, 6);
        let a = rand_mat(m, k, &mut s);
        let b = rand_mat(k, n, &mut s);
        let tol = 10.0 * f64::EPSILON * k as f64 * a.fro_norm() * b.fro_norm();
        let reference = naive(&a, &b);

        let mut c = Mat::zeros(m, n);
        gemm_nn(1.0, &a, &b, 0.0, &mut c).unwrap();
        assert!(c.minus(&reference).fro_norm() <= tol);

        let mut c = Mat::zeros(m, n);
        gemm_tn(1.0, &a.transpose(), &b, 0.0, &mut c).unwrap();
        assert!(c.minus(&reference).fro_norm() <= tol);

        let mut c = Mat::zeros(m, n);
        gemm_nt(1.0, &a, &b.transpose(), 0.0, &mut c).unwrap();
        assert!(c.minus(&reference).fro_norm() <= tol);

        let mut c = a.clone();
        gemm_aab(&mut c, &b).unwrap();
        assert!(c.minus(&reference).fro_norm() <= tol);

        let mut c = a.clone();
        gemm_aabt(&mut c, &b.transpose()).unwrap();
        assert!(c.minus(&reference).fro_norm() <= tol);

        let mut c = b.clone();
        gemm_abta(&mut c, &a.transpose()).unwrap();
        assert!(c.minus(&reference).fro_norm() <= tol);
    }

    #[test]
    fn shape_errors() {
        let mut c = Mat::zeros(2, 2);
        assert!(gemm_nn(1.0, &Mat::zeros(2, 3), &Mat::zeros(2, 2), 0.0, &mut c).is_err());
        assert!(trsm_upper(&Mat::zeros(2, 3), &mut c).is_err());
    }

    #[test]
    fn trsm_cases() {
        let mut b = Mat::from_rows(&[&[2.0], &[4.0]]);
        trsm_upper(&Mat::identity(2), &mut b).unwrap();
        assert_eq!(b, Mat::from_rows(&[&[2.0], &[4.0]]));
        trsm_upper(&Mat::diag(&[2.0, 4.0]), &mut b).unwrap();
        assert_eq!(b, Mat::from_rows(&[&[1.0], &[1.0]]));

        let mut s = 3;
        let mut t = rand_mat(8, 8, &mut s);
        keep_upper(&mut t);
        for i in 0..8 {
            t[(i, i)] += 4.0;
        }
        let b0 = rand_mat(8, 3, &mut s);
        let mut x = b0.clone();
        trsm_upper(&t, &mut x).unwrap();
        let res = naive(&t, &x).minus(&b0).fro_norm() / b0.fro_norm();
        assert!(res <= 1e-12, "residual {res}");

        let mut bad = Mat::identity(3);
        bad[(1, 1)] = 0.0;
        assert_eq!(trsm_upper(&bad, &mut Mat::zeros(3, 1)), Err(KernelError::SingularBlock { index: 1 }));
    }

    #[test]
    fn keep_upper_and_zero() {
        let mut i3 = Mat::identity(3);
        keep_upper(&mut i3);
        assert_eq!(i3, Mat::identity(3));
        let mut ones = Mat::from_fn(3, 3, |_, _| 1.0);
        keep_upper(&mut ones);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(ones[(i, j)], if i <= j { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(zero_tile(2, 3), Mat::from_rows(&[&[0.0; 3], &[0.0; 3]]));
    }
}
