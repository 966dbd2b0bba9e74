//! Tiled on-disk matrices.
//!
//! File layout (little-endian): a 64-byte header
//!
//! | bytes  | field                                   |
//! |--------|-----------------------------------------|
//! | 0..4   | magic `OOCT`                            |
//! | 4..8   | format version (`u32`)                  |
//! | 8..16  | rows `m` (`u64`)                        |
//! | 16..24 | cols `n` (`u64`)                        |
//! | 24..32 | tile size `nb` (`u64`)                  |
//! | 32..36 | element code (`u32`, 1 = `f64`)         |
//! | 36..40 | reserved                                |
//! | 40..48 | FNV-1a checksum of bytes 0..40 (`u64`)  |
//! | 48..64 | zero                                    |
//!
//! followed by one `nb·nb·8`-byte slot per tile in block-row-major order.
//! A tile's `r×c` values are stored column-major at the start of its slot.

use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use oocutv_core::{Layout, Mat};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"OOCT";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: u64 = 64;
const ELEM_F64: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    ReadOnly,
    ReadWrite,
}

/// One tile in memory with its grid position.
#[derive(Clone, Debug, PartialEq)]
pub struct Tile {
    pub i: usize,
    pub j: usize,
    pub data: Mat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub version: u32,
    pub rows: u64,
    pub cols: u64,
    pub nb: u64,
    pub elem: u32,
    pub checksum: u64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Header {
    fn encode(&self) -> [u8; HEADER_BYTES as usize] {
        let mut h = [0u8; HEADER_BYTES as usize];
        h[0..4].copy_from_slice(&MAGIC);
        h[4..8].copy_from_slice(&self.version.to_le_bytes());
        h[8..16].copy_from_slice(&self.rows.to_le_bytes());
        h[16..24].copy_from_slice(&self.cols.to_le_bytes());
        h[24..32].copy_from_slice(&self.nb.to_le_bytes());
        h[32..36].copy_from_slice(&self.elem.to_le_bytes());
        let sum = fnv1a(&h[0..40]);
        h[40..48].copy_from_slice(&sum.to_le_bytes());
        h
    }

    fn decode(h: &[u8; HEADER_BYTES as usize]) -> Result<Header> {
        if h[0..4] != MAGIC {
            return Err(Error::Format("missing OOCT magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(h[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(h[o..o + 8].try_into().unwrap());
        let hdr = Header {
            version: u32_at(4),
            rows: u64_at(8),
            cols: u64_at(16),
            nb: u64_at(24),
            elem: u32_at(32),
            checksum: u64_at(40),
        };
        if hdr.checksum != fnv1a(&h[0..40]) {
            return Err(Error::Format("header checksum mismatch".into()));
        }
        if hdr.version != VERSION {
            return Err(Error::Format(format!("unsupported version {}", hdr.version)));
        }
        if hdr.elem != ELEM_F64 {
            return Err(Error::Format(format!("unsupported element code {}", hdr.elem)));
        }
        Ok(hdr)
    }
}

/// Reads and validates the header of a tile-store file.
pub fn read_header(path: &Path) -> Result<Header> {
    let f = File::open(path)?;
    let mut h = [0u8; HEADER_BYTES as usize];
    read_at(&f, &mut h, 0)?;
    Header::decode(&h)
}

#[cfg(unix)]
fn read_at(f: &File, buf: &mut [u8], off: u64) -> std::io::Result<()> {
    std::os::unix::fs::FileExt::read_exact_at(f, buf, off)
}

#[cfg(unix)]
fn write_at(f: &File, buf: &[u8], off: u64) -> std::io::Result<()> {
    std::os::unix::fs::FileExt::write_all_at(f, buf, off)
}

#[cfg(windows)]
fn read_at(f: &File, mut buf: &mut [u8], mut off: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        let n = f.seek_read(buf, off)?;
        if n == 0 {
            return Err(std::io::ErrorKind::UnexpectedEof.into());
        }
        buf = &mut buf[n..];
        off += n as u64;
    }
    Ok(())
}

#[cfg(windows)]
fn write_at(f: &File, mut buf: &[u8], mut off: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        let n = f.seek_write(buf, off)?;
        buf = &buf[n..];
        off += n as u64;
    }
    Ok(())
}

/// Handle to an on-disk tiled `f64` matrix. Reads and writes are positional,
/// so one handle can be shared between threads.
#[derive(Debug)]
pub struct TileStore {
    path: PathBuf,
    file: File,
    layout: Layout,
    mode: Mode,
}

fn file_size(layout: &Layout) -> Option<u64> {
    let nb = layout.nb as u64;
    (layout.tile_count() as u64).checked_mul(nb)?.checked_mul(nb)?.checked_mul(8)?.checked_add(HEADER_BYTES)
}

impl TileStore {
    /// Creates a zero-filled store, truncating any existing file.
    pub fn create(path: impl AsRef<Path>, m: usize, n: usize, nb: usize) -> Result<TileStore> {
        let path = path.as_ref().to_path_buf();
        if m == 0 || n == 0 || nb == 0 {
            return Err(Error::Invalid(format!("store dimensions must be positive, got {m}×{n} nb={nb}")));
        }
        let layout = Layout::new(m, n, nb);
        let size = file_size(&layout).ok_or_else(|| Error::Invalid("store size overflows u64".into()))?;
        let file = OpenOptions::new().read(true).write(true).create(true).truncate(true).open(&path)?;
        let hdr =
            Header { version: VERSION, rows: m as u64, cols: n as u64, nb: nb as u64, elem: ELEM_F64, checksum: 0 };
        write_at(&file, &hdr.encode(), 0)?;
        file.set_len(size)?;
        Ok(TileStore { path, file, layout, mode: Mode::ReadWrite })
    }

    pub fn open(path: impl AsRef<Path>, mode: Mode) -> Result<TileStore> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().read(true).write(mode == Mode::ReadWrite).open(&path)?;
        let mut h = [0u8; HEADER_BYTES as usize];
        read_at(&file, &mut h, 0).map_err(|_| Error::Format("file shorter than the header".into()))?;
        let hdr = Header::decode(&h)?;
        if hdr.rows == 0 || hdr.cols == 0 || hdr.nb == 0 {
            return Err(Error::Format("zero dimension in header".into()));
        }
        let layout = Layout::new(hdr.rows as usize, hdr.cols as usize, hdr.nb as usize);
        let size = file_size(&layout).ok_or_else(|| Error::Format("store size overflows u64".into()))?;
        if file.metadata()?.len() < size {
            return Err(Error::Format(format!("file holds {} bytes, layout needs {size}", file.metadata()?.len())));
        }
        Ok(TileStore { path, file, layout, mode })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn rows(&self) -> usize {
        self.layout.rows
    }

    pub fn cols(&self) -> usize {
        self.layout.cols
    }

    pub fn nb(&self) -> usize {
        self.layout.nb
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn block_rows(&self) -> usize {
        self.layout.block_rows()
    }

    pub fn block_cols(&self) -> usize {
        self.layout.block_cols()
    }

    /// Byte offset of the slot of tile `(i, j)`.
    pub fn offset(&self, i: usize, j: usize) -> u64 {
        let nb = self.layout.nb as u64;
        HEADER_BYTES + ((i * self.layout.block_cols() + j) as u64) * nb * nb * 8
    }

    fn check(&self, i: usize, j: usize) -> Result<()> {
        if self.layout.contains(i, j) {
            Ok(())
        } else {
            Err(Error::OutOfRange { i, j, rows: self.block_rows(), cols: self.block_cols() })
        }
    }

    pub fn read_mat(&self, i: usize, j: usize) -> Result<Mat> {
        self.check(i, j)?;
        let (r, c) = self.layout.tile_shape(i, j);
        let mut bytes = vec![0u8; r * c * 8];
        read_at(&self.file, &mut bytes, self.offset(i, j))?;
        let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        Ok(Mat::from_col_major(r, c, data))
    }

    pub fn read_tile(&self, i: usize, j: usize) -> Result<Tile> {
        Ok(Tile { i, j, data: self.read_mat(i, j)? })
    }

    pub fn write_mat(&self, i: usize, j: usize, m: &Mat) -> Result<()> {
        if self.mode == Mode::ReadOnly {
            return Err(Error::ReadOnly);
        }
        self.check(i, j)?;
        let expected = self.layout.tile_shape(i, j);
        if m.shape() != expected {
            return Err(Error::Extent { i, j, expected, got: m.shape() });
        }
        let mut bytes = Vec::with_capacity(m.as_slice().len() * 8);
        for v in m.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        write_at(&self.file, &bytes, self.offset(i, j))?;
        Ok(())
    }

    pub fn write_tile(&self, tile: &Tile) -> Result<()> {
        self.write_mat(tile.i, tile.j, &tile.data)
    }

    pub fn from_dense(m: &Mat, nb: usize, path: impl AsRef<Path>) -> Result<TileStore> {
        let s = TileStore::create(path, m.rows(), m.cols(), nb)?;
        for i in 0..s.block_rows() {
            for j in 0..s.block_cols() {
                let (r0, c0) = (i * nb, j * nb);
                let (r, c) = s.layout.tile_shape(i, j);
                s.write_mat(i, j, &m.sub(r0..r0 + r, c0..c0 + c))?;
            }
        }
        Ok(s)
    }

    pub fn to_dense(&self) -> Result<Mat> {
        let mut out = Mat::zeros(self.rows(), self.cols());
        let nb = self.nb();
        for i in 0..self.block_rows() {
            for j in 0..self.block_cols() {
                out.set_sub(i * nb, j * nb, &self.read_mat(i, j)?);
            }
        }
        Ok(out)
    }

    /// Fills the store with `f(global_row, global_col)`.
    pub fn fill_with(&self, mut f: impl FnMut(usize, usize) -> f64) -> Result<()> {
        let nb = self.nb();
        for i in 0..self.block_rows() {
            for j in 0..self.block_cols() {
                let (r, c) = self.layout.tile_shape(i, j);
                self.write_mat(i, j, &Mat::from_fn(r, c, |a, b| f(i * nb + a, j * nb + b)))?;
            }
        }
        Ok(())
    }

    /// Sets the store to the identity (ones on the main diagonal).
    pub fn fill_identity(&self) -> Result<()> {
        for i in 0..self.block_rows() {
            for j in 0..self.block_cols() {
                let (r, c) = self.layout.tile_shape(i, j);
                let mut t = Mat::zeros(r, c);
                if i == j {
                    for d in 0..r.min(c) {
                        t[(d, d)] = 1.0;
                    }
                }
                self.write_mat(i, j, &t)?;
            }
        }
        Ok(())
    }

    /// Main-diagonal entries, read from the diagonal tiles.
    pub fn diagonal(&self) -> Result<Vec<f64>> {
        let mut d = Vec::with_capacity(self.rows().min(self.cols()));
        for i in 0..self.block_rows().min(self.block_cols()) {
            let t = self.read_mat(i, i)?;
            d.extend((0..t.rows().min(t.cols())).map(|k| t[(k, k)]));
        }
        Ok(d)
    }

    /// Arbitrary rectangle `rows × cols`, assembled from the tiles it touches.
    pub fn read_region(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Result<Mat> {
        if rows.end > self.rows() || cols.end > self.cols() || rows.start > rows.end || cols.start > cols.end {
            return Err(Error::Invalid(format!(
                "region {rows:?}×{cols:?} outside a {}×{} store",
                self.rows(),
                self.cols()
            )));
        }
        let nb = self.nb();
        let mut out = Mat::zeros(rows.len(), cols.len());
        if rows.is_empty() || cols.is_empty() {
            return Ok(out);
        }
        for i in rows.start / nb..=(rows.end - 1) / nb {
            for j in cols.start / nb..=(cols.end - 1) / nb {
                let t = self.read_mat(i, j)?;
                let (r0, c0) = (i * nb, j * nb);
                let (lo_r, hi_r) = (rows.start.max(r0), rows.end.min(r0 + t.rows()));
                let (lo_c, hi_c) = (cols.start.max(c0), cols.end.min(c0 + t.cols()));
                out.set_sub(lo_r - rows.start, lo_c - cols.start, &t.sub(lo_r - r0..hi_r - r0, lo_c - c0..hi_c - c0));
            }
        }
        Ok(out)
    }

    /// Copies `src` into a new store at `path`, retiling to `nb`.
    pub fn copy_retiled(src: &TileStore, nb: usize, path: impl AsRef<Path>) -> Result<TileStore> {
        let dst = TileStore::create(path, src.rows(), src.cols(), nb)?;
        if nb == src.nb() {
            for i in 0..src.block_rows() {
                for j in 0..src.block_cols() {
                    dst.write_mat(i, j, &src.read_mat(i, j)?)?;
                }
            }
            return Ok(dst);
        }
        // one destination tile row at a time, assembled from the source tiles it overlaps
        let sl = src.layout();
        for i in 0..dst.block_rows() {
            let r0 = i * nb;
            let r = dst.layout.tile_rows(i);
            let mut band = Mat::zeros(r, src.cols());
            for si in r0 / sl.nb..=(r0 + r - 1) / sl.nb {
                let sr0 = si * sl.nb;
                let lo = r0.max(sr0);
                let hi = (r0 + r).min(sr0 + sl.tile_rows(si));
                for sj in 0..sl.block_cols() {
                    let t = src.read_mat(si, sj)?;
                    band.set_sub(lo - r0, sj * sl.nb, &t.sub(lo - sr0..hi - sr0, 0..t.cols()));
                }
            }
            for j in 0..dst.block_cols() {
                let c = dst.layout.tile_cols(j);
                dst.write_mat(i, j, &band.sub(0..r, j * nb..j * nb + c))?;
            }
        }
        Ok(dst)
    }

    /// Frobenius norm, streamed tile by tile.
    pub fn fro_norm(&self) -> Result<f64> {
        let mut scale = 0.0f64;
        let mut ssq = 1.0f64;
        for i in 0..self.block_rows() {
            for j in 0..self.block_cols() {
                for &v in self.read_mat(i, j)?.as_slice() {
                    if v != 0.0 {
                        let a = v.abs();
                        if scale < a {
                            ssq = 1.0 + ssq * (scale / a) * (scale / a);
                            scale = a;
                        } else {
                            ssq += (a / scale) * (a / scale);
                        }
                    }
                }
            }
        }
        Ok(scale * ssq.sqrt())
    }

    pub fn sync(&self) -> Result<()> {
        self.file.sync_data()?;
        Ok(())
    }
}
