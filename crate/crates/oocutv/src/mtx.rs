//! Matrix Market text files, densified into tile stores.
//!
//! Accepts `coordinate` and `array` matrices with `real` or `integer` values
//! and `general`, `symmetric` or `skew-symmetric` structure. Coordinate
//! duplicates are summed.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use oocutv_core::Mat;

use crate::error::{Error, Result};
use crate::store::TileStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Coordinate,
    Array,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    Skew,
}

/// Tile-local `(row, col, value)` entries keyed by tile coordinates.
type TileEntries = BTreeMap<(usize, usize), Vec<(usize, usize, f64)>>;

struct Lines<R> {
    inner: std::io::Lines<R>,
    path: String,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { path: self.path.clone(), line: self.line, msg: msg.into() }
    }

    /// Next line that is neither blank nor a comment.
    fn next_data(&mut self) -> Result<Option<String>> {
        for l in self.inner.by_ref() {
            self.line += 1;
            let l = l?;
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('%') {
                return Ok(Some(t.to_string()));
            }
        }
        Ok(None)
    }

    fn numbers<T: std::str::FromStr>(&self, s: &str, count: usize) -> Result<Vec<T>> {
        let v: Vec<&str> = s.split_whitespace().collect();
        if v.len() != count {
            return Err(self.err(format!("expected {count} fields, found {}", v.len())));
        }
        v.iter().map(|f| f.parse::<T>().map_err(|_| self.err(format!("cannot parse `{f}`")))).collect()
    }
}

fn parse_header<R: BufRead>(lines: &mut Lines<R>) -> Result<(Format, Symmetry)> {
    let first = lines.inner.next().transpose()?.ok_or_else(|| lines.err("empty file"))?;
    lines.line = 1;
    let words: Vec<String> = first.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(lines.err("missing `%%MatrixMarket matrix` banner"));
    }
    let format = match words[2].as_str() {
        "coordinate" => Format::Coordinate,
        "array" => Format::Array,
        f => return Err(lines.err(format!("unsupported format `{f}`"))),
    };
    match words[3].as_str() {
        "real" | "integer" | "double" => {}
        "pattern" => return Err(lines.err("pattern matrices carry no values and are not supported")),
        f => return Err(lines.err(format!("unsupported field `{f}`"))),
    }
    let sym = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::Skew,
        s => return Err(lines.err(format!("unsupported symmetry `{s}`"))),
    };
    Ok((format, sym))
}

/// Reads `path` into a new store at `out` with tile size `nb`.
pub fn read_matrix_market(path: impl AsRef<Path>, nb: usize, out: impl AsRef<Path>) -> Result<TileStore> {
    let path = path.as_ref();
    let mut lines =
        Lines { inner: BufReader::new(File::open(path)?).lines(), path: path.display().to_string(), line: 0 };
    let (format, sym) = parse_header(&mut lines)?;
    let size = lines.next_data()?.ok_or_else(|| lines.err("missing size line"))?;
    match format {
        Format::Coordinate => {
            let d: Vec<usize> = lines.numbers(&size, 3)?;
            let (m, n, nnz) = (d[0], d[1], d[2]);
            if sym != Symmetry::General && m != n {
                return Err(lines.err("symmetric matrix must be square"));
            }
            // entries grouped by tile so each tile is written once
            let mut tiles = TileEntries::new();
            let mut push =
                |i: usize, j: usize, v: f64| tiles.entry((i / nb, j / nb)).or_default().push((i % nb, j % nb, v));
            for _ in 0..nnz {
                let l = lines.next_data()?.ok_or_else(|| lines.err(format!("expected {nnz} entries")))?;
                let f: Vec<&str> = l.split_whitespace().collect();
                if f.len() != 3 {
                    return Err(lines.err(format!("expected `row col value`, found {} fields", f.len())));
                }
                let i: usize = f[0].parse().map_err(|_| lines.err(format!("bad row index `{}`", f[0])))?;
                let j: usize = f[1].parse().map_err(|_| lines.err(format!("bad column index `{}`", f[1])))?;
                let v: f64 = f[2].parse().map_err(|_| lines.err(format!("bad value `{}`", f[2])))?;
                if i == 0 || j == 0 || i > m || j > n {
                    return Err(lines.err(format!("entry ({i},{j}) outside {m}×{n}")));
                }
                let (i, j) = (i - 1, j - 1);
                push(i, j, v);
                if i != j {
                    match sym {
                        Symmetry::General => {}
                        Symmetry::Symmetric => push(j, i, v),
                        Symmetry::Skew => push(j, i, -v),
                    }
                }
            }
            if lines.next_data()?.is_some() {
                return Err(lines.err(format!("more than {nnz} entries")));
            }
            let s = TileStore::create(out, m, n, nb)?;
            let lay = s.layout();
            for ((ti, tj), cells) in tiles {
                let (r, c) = lay.tile_shape(ti, tj);
                let mut t = Mat::zeros(r, c);
                for (a, b, v) in cells {
                    t[(a, b)] += v;
                }
                s.write_mat(ti, tj, &t)?;
            }
            Ok(s)
        }
        Format::Array => {
            let d: Vec<usize> = lines.numbers(&size, 2)?;
            let (m, n) = (d[0], d[1]);
            if sym != Symmetry::General && m != n {
                return Err(lines.err("symmetric matrix must be square"));
            }
            let s = TileStore::create(out, m, n, nb)?;
            let lay = s.layout();
            if sym == Symmetry::General {
                // one band of tile columns at a time
                for tj in 0..lay.block_cols() {
                    let mut band = Mat::zeros(m, lay.tile_cols(tj));
                    for c in 0..band.cols() {
                        for r in 0..m {
                            band[(r, c)] = next_value(&mut lines)?;
                        }
                    }
                    for ti in 0..lay.block_rows() {
                        s.write_mat(ti, tj, &band.sub(ti * nb..ti * nb + lay.tile_rows(ti), 0..band.cols()))?;
                    }
                }
            } else {
                let mut a = Mat::zeros(m, n);
                let sign = if sym == Symmetry::Skew { -1.0 } else { 1.0 };
                for c in 0..n {
                    let start = if sym == Symmetry::Skew { c + 1 } else { c };
                    for r in start..m {
                        let v = next_value(&mut lines)?;
                        a[(r, c)] = v;
                        a[(c, r)] = sign * v;
                    }
                }
                for ti in 0..lay.block_rows() {
                    for tj in 0..lay.block_cols() {
                        let (r, c) = lay.tile_shape(ti, tj);
                        s.write_mat(ti, tj, &a.sub(ti * nb..ti * nb + r, tj * nb..tj * nb + c))?;
                    }
                }
            }
            if lines.next_data()?.is_some() {
                return Err(lines.err("more values than the declared size"));
            }
            Ok(s)
        }
    }
}

fn next_value<R: BufRead>(lines: &mut Lines<R>) -> Result<f64> {
    let l = lines.next_data()?.ok_or_else(|| lines.err("fewer values than the declared size"))?;
    let v: Vec<f64> = lines.numbers(&l, 1)?;
    Ok(v[0])
}

/// Writes `store` as a dense `array real general` file, 17 significant digits.
pub fn write_matrix_market(store: &TileStore, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", store.rows(), store.cols())?;
    let nb = store.nb();
    for tj in 0..store.block_cols() {
        let cols = tj * nb..tj * nb + store.layout().tile_cols(tj);
        let band = store.read_region(0..store.rows(), cols)?;
        for c in 0..band.cols() {
            for &v in band.col(c) {
                writeln!(w, "{v:.16e}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn coordinate_general() {
        let d = tempfile::tempdir().unwrap();
        let p =
            write(d.path(), "a.mtx", "%%MatrixMarket matrix coordinate real general\n% c\n3 3 2\n1 1 2.0\n3 2 -1.0\n");
        let a = read_matrix_market(&p, 2, d.path().join("a")).unwrap().to_dense().unwrap();
        let mut e = Mat::zeros(3, 3);
        e[(0, 0)] = 2.0;
        e[(2, 1)] = -1.0;
        assert_eq!(a, e);
    }

    #[test]
    fn symmetric_is_mirrored_and_duplicates_sum() {
        let d = tempfile::tempdir().unwrap();
        let p =
            write(d.path(), "s.mtx", "%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n2 1 3\n2 1 1\n2 2 5\n");
        let a = read_matrix_market(&p, 4, d.path().join("s")).unwrap().to_dense().unwrap();
        assert_eq!(a, Mat::from_rows(&[&[0.0, 4.0], &[4.0, 5.0]]));
    }

    #[test]
    fn rejects_pattern_and_reports_lines() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "p.mtx", "%%MatrixMarket matrix coordinate pattern general\n2 2 1\n1 1\n");
        assert!(matches!(read_matrix_market(&p, 2, d.path().join("p")), Err(Error::Parse { line: 1, .. })));
        let p = write(d.path(), "q.mtx", "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n\n3 1 2.0\n");
        match read_matrix_market(&p, 2, d.path().join("q")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }
}
