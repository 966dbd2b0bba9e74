//! In-core reference implementations for differential testing.
//!
//! [`svd_lstsq_dense`] goes through faer's SVD and shares no code with the
//! solver. [`randutv_dense_reference`] runs the blocked factorization on a
//! dense matrix with plain loops over tile ranges; it calls the same tile
//! kernels in the same order as the out-of-core path, so the two must agree
//! to the last bit.

use oocutv_core::kernels::{
    apply_q_dense, apply_q_td, gauss_tile, gemm_aab, gemm_aabt, gemm_abta, gemm_nn, gemm_tn, keep_upper, normal_stream,
    qr_dense, qr_triangular_dense, svd_dense, Side,
};
use oocutv_core::{KernelError, Mat};

use crate::error::{Error, Result};

fn to_faer(a: &Mat) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)])
}

fn svd_err(e: faer::linalg::solvers::SvdError) -> Error {
    Error::Invalid(format!("oracle SVD failed: {e:?}"))
}

/// Singular values in descending order.
pub fn singular_values(a: &Mat) -> Result<Vec<f64>> {
    to_faer(a).singular_values().map_err(svd_err)
}

/// Minimum-norm least-squares solution through a full SVD, keeping singular
/// values above `tau·σ₁`. Returns the solution and the numerical rank.
pub fn svd_lstsq_dense(a: &Mat, b: &Mat, tau: f64) -> Result<(Mat, usize)> {
    if a.rows() != b.rows() {
        return Err(Error::Invalid(format!("A has {} rows but B has {}", a.rows(), b.rows())));
    }
    let svd = to_faer(a).thin_svd().map_err(svd_err)?;
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let rank = if smax == 0.0 { 0 } else { s.iter().filter(|&&v| v > tau * smax).count() };
    // singular values come sorted, so the kept ones lead
    let (u, v) = (svd.U().subcols(0, rank), svd.V().subcols(0, rank));
    let mut coef = u.transpose() * to_faer(b);
    for (p, &sp) in s.iter().take(rank).enumerate() {
        for j in 0..coef.ncols() {
            coef[(p, j)] /= sp;
        }
    }
    let x = v * coef;
    Ok((Mat::from_fn(a.cols(), b.cols(), |i, j| x[(i, j)]), rank))
}

pub fn residual_dense(a: &Mat, x: &Mat, b: &Mat) -> f64 {
    a.matmul(x).minus(b).fro_norm()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseUtv {
    pub t: Mat,
    pub v: Mat,
    pub u: Option<Mat>,
    /// `Uᵀ·B` when a right-hand side was given.
    pub bt: Option<Mat>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReferenceOptions {
    pub q: usize,
    pub nb: usize,
    pub seed: u64,
    pub build_u: bool,
    pub full_last_step: bool,
}

/// Tile storage of a dense matrix with the solver's `nb` partitioning.
struct Grid {
    m: Mat,
    nb: usize,
}

impl Grid {
    fn new(m: Mat, nb: usize) -> Self {
        Grid { m, nb }
    }

    fn bt(&self) -> usize {
        self.m.rows().div_ceil(self.nb)
    }

    fn bc(&self) -> usize {
        self.m.cols().div_ceil(self.nb)
    }

    fn th(&self, i: usize) -> usize {
        self.nb.min(self.m.rows() - i * self.nb)
    }

    fn tw(&self, j: usize) -> usize {
        self.nb.min(self.m.cols() - j * self.nb)
    }

    /// Rows `r0..r0+nr` and columns `c0..c0+nc` of tile `(i, j)`.
    fn get(&self, i: usize, j: usize, r0: usize, nr: usize, c0: usize, nc: usize) -> Mat {
        let (ro, co) = (i * self.nb + r0, j * self.nb + c0);
        self.m.sub(ro..ro + nr, co..co + nc)
    }

    fn tile(&self, i: usize, j: usize) -> Mat {
        self.get(i, j, 0, self.th(i), 0, self.tw(j))
    }

    fn put(&mut self, i: usize, j: usize, r0: usize, c0: usize, v: &Mat) {
        self.m.set_sub(i * self.nb + r0, j * self.nb + c0, v);
    }
}

/// In-core blocked factorization `A·V = U·T`, optionally applying `Uᵀ` to `b`.
pub fn randutv_dense_reference(
    a: &Mat,
    b: Option<&Mat>,
    opts: ReferenceOptions,
) -> std::result::Result<DenseUtv, KernelError> {
    let (m, n, nb) = (a.rows(), a.cols(), opts.nb);
    let mut t = Grid::new(a.clone(), nb);
    let mut v = Grid::new(Mat::identity(n), nb);
    let mut u = opts.build_u.then(|| Grid::new(Mat::identity(m), nb));
    let mut bb = b.map(|b| Grid::new(b.clone(), nb));
    let (mt, nt) = (t.bt(), t.bc());
    let kmin = m.min(n);

    for i in 0..kmin.div_ceil(nb) {
        let off = i * nb;
        let w = nb.min(kmin - off);
        let ri = t.th(i);

        if n - off > w || opts.full_last_step {
            // sample: G Gaussian, Y = (AᵀA)^q Aᵀ G over the trailing block
            let mut g: Vec<Mat> = (i..mt).map(|l| gauss_tile(t.th(l), w, opts.seed, normal_stream(i, l))).collect();
            let mut y = sample(&t, &g, i, w);
            for _ in 0..opts.q {
                for l in i..mt {
                    let gl = &mut g[l - i];
                    for kk in i..nt {
                        gemm_nn(1.0, &t.tile(l, kk), &y[kk - i], if kk == i { 0.0 } else { 1.0 }, gl)?;
                    }
                }
                y = sample(&t, &g, i, w);
            }

            let tf = qr_dense(&mut y[0])?;
            for l in 0..mt {
                let mut c = t.tile(l, i);
                apply_q_dense(&y[0], &tf, Side::Right, &mut c)?;
                t.put(l, i, 0, 0, &c);
            }
            for l in 0..nt {
                let mut c = v.tile(l, i);
                apply_q_dense(&y[0], &tf, Side::Right, &mut c)?;
                v.put(l, i, 0, 0, &c);
            }
            for kk in i + 1..nt {
                let mut r = y[0].sub(0..w, 0..w);
                let tf = qr_triangular_dense(&mut r, &mut y[kk - i])?;
                y[0].set_sub(0, 0, &r);
                for g in [&mut t, &mut v] {
                    for l in 0..g.bt() {
                        let rl = g.th(l);
                        let mut top = g.get(l, i, 0, rl, 0, w);
                        let mut bot = g.tile(l, kk);
                        apply_q_td(&y[kk - i], &tf, Side::Right, &mut top, &mut bot)?;
                        g.put(l, i, 0, 0, &top);
                        g.put(l, kk, 0, 0, &bot);
                    }
                }
            }
        }

        let left_qr = m - off > w || opts.full_last_step;
        if left_qr {
            let mut p = t.get(i, i, 0, ri, 0, w);
            let tf = qr_dense(&mut p)?;
            t.put(i, i, 0, 0, &p);
            for (j, c0, cw) in trailing(&t, i, w) {
                let mut c = t.get(i, j, 0, ri, c0, cw);
                apply_q_dense(&p, &tf, Side::LeftTrans, &mut c)?;
                t.put(i, j, 0, c0, &c);
            }
            if let Some(bg) = bb.as_mut() {
                for c in 0..bg.bc() {
                    let mut x = bg.tile(i, c);
                    apply_q_dense(&p, &tf, Side::LeftTrans, &mut x)?;
                    bg.put(i, c, 0, 0, &x);
                }
            }
            if let Some(ug) = u.as_mut() {
                for l in 0..ug.bt() {
                    let mut x = ug.tile(l, i);
                    apply_q_dense(&p, &tf, Side::Right, &mut x)?;
                    ug.put(l, i, 0, 0, &x);
                }
            }
            for kk in i + 1..mt {
                let rk = t.th(kk);
                let mut r = t.get(i, i, 0, w, 0, w);
                let mut d = t.get(kk, i, 0, rk, 0, w);
                let tf = qr_triangular_dense(&mut r, &mut d)?;
                t.put(i, i, 0, 0, &r);
                t.put(kk, i, 0, 0, &d);
                for (j, c0, cw) in trailing(&t, i, w) {
                    let mut top = t.get(i, j, 0, w, c0, cw);
                    let mut bot = t.get(kk, j, 0, rk, c0, cw);
                    apply_q_td(&d, &tf, Side::LeftTrans, &mut top, &mut bot)?;
                    t.put(i, j, 0, c0, &top);
                    t.put(kk, j, 0, c0, &bot);
                }
                if let Some(bg) = bb.as_mut() {
                    for c in 0..bg.bc() {
                        let kc = bg.tw(c);
                        let mut top = bg.get(i, c, 0, w, 0, kc);
                        let mut bot = bg.tile(kk, c);
                        apply_q_td(&d, &tf, Side::LeftTrans, &mut top, &mut bot)?;
                        bg.put(i, c, 0, 0, &top);
                        bg.put(kk, c, 0, 0, &bot);
                    }
                }
                if let Some(ug) = u.as_mut() {
                    for l in 0..ug.bt() {
                        let ul = ug.th(l);
                        let mut top = ug.get(l, i, 0, ul, 0, w);
                        let mut bot = ug.tile(l, kk);
                        apply_q_td(&d, &tf, Side::Right, &mut top, &mut bot)?;
                        ug.put(l, i, 0, 0, &top);
                        ug.put(l, kk, 0, 0, &bot);
                    }
                }
            }
            let mut p = t.get(i, i, 0, ri, 0, w);
            keep_upper(&mut p);
            t.put(i, i, 0, 0, &p);
        }

        let s = svd_dense(&t.get(i, i, 0, w, 0, w))?;
        t.put(i, i, 0, 0, &Mat::diag(&s.sigma));
        let vt = s.v.transpose();
        for l in 0..i {
            let mut c = t.get(l, i, 0, t.th(l), 0, w);
            gemm_aabt(&mut c, &vt)?;
            t.put(l, i, 0, 0, &c);
        }
        for (j, c0, cw) in trailing(&t, i, w) {
            let mut c = t.get(i, j, 0, w, c0, cw);
            gemm_abta(&mut c, &s.u)?;
            t.put(i, j, 0, c0, &c);
        }
        for l in 0..nt {
            let mut c = v.get(l, i, 0, v.th(l), 0, w);
            gemm_aabt(&mut c, &vt)?;
            v.put(l, i, 0, 0, &c);
        }
        if let Some(bg) = bb.as_mut() {
            for c in 0..bg.bc() {
                let mut x = bg.get(i, c, 0, w, 0, bg.tw(c));
                gemm_abta(&mut x, &s.u)?;
                bg.put(i, c, 0, 0, &x);
            }
        }
        if let Some(ug) = u.as_mut() {
            for l in 0..ug.bt() {
                let mut x = ug.get(l, i, 0, ug.th(l), 0, w);
                gemm_aab(&mut x, &s.u)?;
                ug.put(l, i, 0, 0, &x);
            }
        }
        if left_qr {
            for kk in i + 1..mt {
                t.put(kk, i, 0, 0, &Mat::zeros(t.th(kk), w));
            }
        }
    }
    Ok(DenseUtv { t: t.m, v: v.m, u: u.map(|g| g.m), bt: bb.map(|g| g.m) })
}

/// `Y(kk) = Σ_l A(l,kk)ᵀ·G(l)` for the trailing tile columns of step `i`.
fn sample(t: &Grid, g: &[Mat], i: usize, w: usize) -> Vec<Mat> {
    (i..t.bc())
        .map(|kk| {
            let mut y = Mat::zeros(t.tw(kk), w);
            for l in i..t.bt() {
                gemm_tn(1.0, &t.tile(l, kk), &g[l - i], if l == i { 0.0 } else { 1.0 }, &mut y)
                    .expect("conforming tiles");
            }
            y
        })
        .collect()
}

/// Column pieces `(tile column, first column, width)` right of the leading
/// `w` columns of step `i`.
fn trailing(t: &Grid, i: usize, w: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let ci = t.tw(i);
    if w < ci {
        out.push((i, w, ci - w));
    }
    for j in i + 1..t.bc() {
        out.push((j, 0, t.tw(j)));
    }
    out
}
