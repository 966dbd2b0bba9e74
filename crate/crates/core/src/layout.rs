//! Tile-grid arithmetic shared by the task builders, the stores and the cache.

use core::fmt;

/// The logical matrices a task list addresses. Each one lives in its own
/// tile store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StoreRole {
    /// The coefficient matrix, overwritten by `T`.
    A,
    V,
    U,
    /// Right-hand sides, overwritten by `Uᵀ·B` and then by the solve.
    B,
    X,
    /// Sampling panel `m × nb`.
    G,
    /// Sample panel `n × nb`.
    Y,
    /// Triangular factors of the right reflectors, one `nb × nb` tile per
    /// tile row of `Y`.
    TfY,
    /// Triangular factors of the left reflectors, one per tile row of `A`.
    TfA,
    /// Small SVD factors: `U_s` in tile `(0,0)`, `V_sᵀ` in tile `(0,1)`.
    Svd,
    /// Triangular factors of the nullification reflectors.
    TfRz,
}

impl StoreRole {
    pub const ALL: [StoreRole; 11] = [
        StoreRole::A,
        StoreRole::V,
        StoreRole::U,
        StoreRole::B,
        StoreRole::X,
        StoreRole::G,
        StoreRole::Y,
        StoreRole::TfY,
        StoreRole::TfA,
        StoreRole::Svd,
        StoreRole::TfRz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StoreRole::A => "A",
            StoreRole::V => "V",
            StoreRole::U => "U",
            StoreRole::B => "B",
            StoreRole::X => "X",
            StoreRole::G => "G",
            StoreRole::Y => "Y",
            StoreRole::TfY => "TfY",
            StoreRole::TfA => "TfA",
            StoreRole::Svd => "Svd",
            StoreRole::TfRz => "TfRz",
        }
    }

    pub fn from_name(s: &str) -> Option<StoreRole> {
        StoreRole::ALL.iter().copied().find(|r| r.name() == s)
    }

    /// Small stable number used when hashing block ids.
    pub fn code(self) -> u64 {
        StoreRole::ALL.iter().position(|&r| r == self).unwrap_or(0) as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId {
    pub role: StoreRole,
    pub i: usize,
    pub j: usize,
}

impl BlockId {
    pub fn new(role: StoreRole, i: usize, j: usize) -> Self {
        BlockId { role, i, j }
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.role.name(), self.i, self.j)
    }
}

/// Shape and tiling of one matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub rows: usize,
    pub cols: usize,
    pub nb: usize,
}

impl Layout {
    /// Panics if `nb == 0`.
    pub fn new(rows: usize, cols: usize, nb: usize) -> Self {
        assert!(nb > 0, "tile size must be positive");
        Layout { rows, cols, nb }
    }

    pub fn block_rows(&self) -> usize {
        self.rows.div_ceil(self.nb)
    }

    pub fn block_cols(&self) -> usize {
        self.cols.div_ceil(self.nb)
    }

    pub fn tile_rows(&self, i: usize) -> usize {
        extent(self.rows, self.nb, i)
    }

    pub fn tile_cols(&self, j: usize) -> usize {
        extent(self.cols, self.nb, j)
    }

    pub fn tile_shape(&self, i: usize, j: usize) -> (usize, usize) {
        (self.tile_rows(i), self.tile_cols(j))
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.block_rows() && j < self.block_cols()
    }

    pub fn tile_count(&self) -> usize {
        self.block_rows() * self.block_cols()
    }
}

fn extent(len: usize, nb: usize, i: usize) -> usize {
    len.saturating_sub(i * nb).min(nb)
}

/// Problem dimensions: `A` is `m×n`, `B` is `m×k` (`k = 0` when there is no
/// right-hand side), tile size `nb`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub nb: usize,
}

impl Dims {
    pub fn new(m: usize, n: usize, k: usize, nb: usize) -> Self {
        assert!(nb > 0, "tile size must be positive");
        Dims { m, n, k, nb }
    }

    pub fn mt(&self) -> usize {
        self.m.div_ceil(self.nb)
    }

    pub fn nt(&self) -> usize {
        self.n.div_ceil(self.nb)
    }

    pub fn kt(&self) -> usize {
        self.k.div_ceil(self.nb)
    }

    pub fn layout(&self, role: StoreRole) -> Layout {
        let nb = self.nb;
        let (r, c) = match role {
            StoreRole::A => (self.m, self.n),
            StoreRole::V => (self.n, self.n),
            StoreRole::U => (self.m, self.m),
            StoreRole::B => (self.m, self.k),
            StoreRole::X => (self.n, self.k),
            StoreRole::G => (self.m, nb),
            StoreRole::Y => (self.n, nb),
            StoreRole::TfY | StoreRole::TfRz => (self.nt() * nb, nb),
            StoreRole::TfA => (self.mt() * nb, nb),
            StoreRole::Svd => (nb, 2 * nb),
        };
        Layout::new(r, c, nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eleven_by_eight_in_threes() {
        let l = Layout::new(11, 8, 3);
        assert_eq!((l.block_rows(), l.block_cols()), (4, 3));
        assert_eq!(l.tile_shape(0, 0), (3, 3));
        assert_eq!(l.tile_shape(3, 0), (2, 3));
        assert_eq!(l.tile_shape(0, 2), (3, 2));
        assert_eq!(l.tile_shape(3, 2), (2, 2));
        let total: usize =
            (0..4).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| l.tile_rows(i) * l.tile_cols(j)).sum();
        assert_eq!(total, 88);
    }

    #[test]
    fn role_names_round_trip() {
        for r in StoreRole::ALL {
            assert_eq!(StoreRole::from_name(r.name()), Some(r));
        }
    }
}
