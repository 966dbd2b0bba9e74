use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::mat::Mat;

/// Stream id for the sampling tile of `(step, tile_row)`.
pub fn normal_stream(step: usize, tile_row: usize) -> u64 {
    ((step as u64) << 32) | (tile_row as u64 & 0xffff_ffff)
}

/// A `rows×cols` tile of standard normal entries, filled column-major from a
/// ChaCha8 stream. The same `(seed, stream)` always yields the same tile,
/// independent of execution order.
pub fn gauss_tile(rows: usize, cols: usize, seed: u64, stream: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_distinct() {
        let a = gauss_tile(4, 3, 9, normal_stream(0, 1));
        assert_eq!(a, gauss_tile(4, 3, 9, normal_stream(0, 1)));
        assert_ne!(a, gauss_tile(4, 3, 9, normal_stream(1, 0)));
        assert_ne!(a, gauss_tile(4, 3, 10, normal_stream(0, 1)));
    }

    #[test]
    fn moments_are_plausible() {
        let g = gauss_tile(100, 100, 1, 0);
        let n = 10_000.0;
        let mean: f64 = g.as_slice().iter().sum::<f64>() / n;
        let var: f64 = g.as_slice().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05 && (var - 1.0).abs() < 0.05, "mean {mean} var {var}");
    }
}
