//! Deterministic test-problem generators. Every entry is a pure function of
//! its coordinates and the seed, so tiles can be produced in any order and
//! the matrix never has to exist in memory as a whole.

use alloc::vec::Vec;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mat::Mat;

const SCALE_SALT: u64 = 0x5ca1_e000_0000_0001;
const X_SALT: u64 = 0x7700_0000_0000_0003;
const PERTURB_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Uniform(0,1) values addressed by `(seed, stream, index)`.
pub struct UniformStream {
    rng: ChaCha8Rng,
}

impl UniformStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        UniformStream { rng }
    }

    /// Fills `out` with entries `start, start+1, ...` of the stream.
    pub fn fill(&mut self, start: usize, out: &mut [f64]) {
        self.rng.set_word_pos(2 * start as u128);
        for v in out.iter_mut() {
            *v = to_unit(self.rng.next_u64());
        }
    }

    pub fn at(&mut self, index: usize) -> f64 {
        let mut v = [0.0];
        self.fill(index, &mut v);
        v[0]
    }
}

fn to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The synthetic rank-`r` matrix: a diagonally dominant `r×n` leading row
/// block of uniform(0,1) entries (`n` added at `(i,i)`), then copies of that
/// block, each scaled by its own uniform(0.5, 1.5) factor, the last copy
/// truncated at row `m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankDeficient {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub seed: u64,
}

impl RankDeficient {
    /// `None` unless `1 <= r <= min(m, n)`.
    pub fn new(m: usize, n: usize, r: usize, seed: u64) -> Option<Self> {
        (r >= 1 && r <= m.min(n)).then_some(RankDeficient { m, n, r, seed })
    }

    /// Scale of replica `c` (replica 0 is the original block).
    pub fn copy_scale(&self, c: usize) -> f64 {
        if c == 0 {
            1.0
        } else {
            0.5 + UniformStream::new(self.seed ^ SCALE_SALT, 0).at(c)
        }
    }

    /// Row `p`, columns `cols`.
    pub fn row(&self, p: usize, cols: core::ops::Range<usize>) -> Vec<f64> {
        let src = p % self.r;
        let scale = self.copy_scale(p / self.r);
        let mut out = alloc::vec![0.0; cols.len()];
        UniformStream::new(self.seed, src as u64).fill(cols.start, &mut out);
        if cols.contains(&src) {
            out[src - cols.start] += self.n as f64;
        }
        if scale != 1.0 {
            out.iter_mut().for_each(|v| *v *= scale);
        }
        out
    }

    /// The block `rows × cols` as a column-major matrix.
    pub fn block(&self, rows: core::ops::Range<usize>, cols: core::ops::Range<usize>) -> Mat {
        let mut m = Mat::zeros(rows.len(), cols.len());
        for (ii, p) in rows.enumerate() {
            for (jj, v) in self.row(p, cols.clone()).into_iter().enumerate() {
                m[(ii, jj)] = v;
            }
        }
        m
    }
}

/// Entries of the reference solution used by the consistent right-hand-side
/// scenario: column `c` is its own uniform(0,1) stream.
pub fn x_true_block(seed: u64, rows: core::ops::Range<usize>, cols: core::ops::Range<usize>) -> Mat {
    let mut m = Mat::zeros(rows.len(), cols.len());
    for (jj, c) in cols.enumerate() {
        UniformStream::new(seed ^ X_SALT, c as u64).fill(rows.start, m.col_mut(jj));
    }
    m
}

/// `round(frac·len)` distinct positions in `0..len`, sorted, chosen by a
/// seeded sampler.
pub fn perturb_positions(len: usize, frac: f64, seed: u64) -> Vec<usize> {
    let count = libm::round(frac * len as f64) as usize;
    let count = count.min(len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PERTURB_SALT);
    let mut v = rand::seq::index::sample(&mut rng, len, count).into_vec();
    v.sort_unstable();
    v
}
