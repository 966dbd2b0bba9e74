use oocutv::store::{read_header, HEADER_BYTES};
use oocutv::{Error, Mode, TileStore};
use oocutv_core::Mat;
use proptest::prelude::*;

fn numbered(m: usize, n: usize) -> Mat {
    Mat::from_fn(m, n, |i, j| (i * 1000 + j) as f64 + 0.25)
}

#[test]
fn edge_tiles_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let a = numbered(93, 57);
    let s = TileStore::from_dense(&a, 10, d.path().join("a")).unwrap();
    assert_eq!((s.block_rows(), s.block_cols()), (10, 6));
    assert_eq!(s.read_mat(9, 5).unwrap().shape(), (3, 7));
    let reopened = TileStore::open(s.path(), Mode::ReadOnly).unwrap();
    assert_eq!(reopened.to_dense().unwrap(), a);
    let len = std::fs::metadata(s.path()).unwrap().len();
    assert_eq!(len, HEADER_BYTES + 60 * 10 * 10 * 8);
}

#[test]
fn header_fields() {
    let d = tempfile::tempdir().unwrap();
    let s = TileStore::create(d.path().join("h"), 7, 3, 2).unwrap();
    let h = read_header(s.path()).unwrap();
    assert_eq!((h.rows, h.cols, h.nb, h.version), (7, 3, 2, 1));
    assert_eq!(s.to_dense().unwrap(), Mat::zeros(7, 3));
}

#[test]
fn corrupt_and_misused_stores_are_rejected() {
    let d = tempfile::tempdir().unwrap();
    let s = TileStore::create(d.path().join("c"), 4, 4, 2).unwrap();
    assert!(matches!(s.read_mat(2, 0), Err(Error::OutOfRange { .. })));
    assert!(matches!(s.write_mat(0, 0, &Mat::zeros(3, 2)), Err(Error::Extent { .. })));
    let ro = TileStore::open(s.path(), Mode::ReadOnly).unwrap();
    assert!(matches!(ro.write_mat(0, 0, &Mat::zeros(2, 2)), Err(Error::ReadOnly)));

    let mut bytes = std::fs::read(s.path()).unwrap();
    bytes[9] ^= 1;
    let p = d.path().join("bad");
    std::fs::write(&p, &bytes).unwrap();
    assert!(matches!(TileStore::open(&p, Mode::ReadOnly), Err(Error::Format(_))));
    std::fs::write(&p, b"OOCT").unwrap();
    assert!(matches!(TileStore::open(&p, Mode::ReadOnly), Err(Error::Format(_))));
    let mut short = std::fs::read(s.path()).unwrap();
    short.truncate(100);
    std::fs::write(&p, &short).unwrap();
    assert!(matches!(TileStore::open(&p, Mode::ReadOnly), Err(Error::Format(_))));
    assert!(TileStore::create(d.path().join("z"), 0, 3, 2).is_err());
}

#[test]
fn diagonal_and_norm() {
    let d = tempfile::tempdir().unwrap();
    let a = numbered(9, 5);
    let s = TileStore::from_dense(&a, 4, d.path().join("a")).unwrap();
    let want: Vec<f64> = (0..5).map(|i| a[(i, i)]).collect();
    assert_eq!(s.diagonal().unwrap(), want);
    assert!((s.fro_norm().unwrap() - a.fro_norm()).abs() <= 1e-12 * a.fro_norm());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn retiling_preserves_values(m in 1usize..40, n in 1usize..40, nb in 1usize..12, nb2 in 1usize..12) {
        let d = tempfile::tempdir().unwrap();
        let a = numbered(m, n);
        let s = TileStore::from_dense(&a, nb, d.path().join("a")).unwrap();
        let t = TileStore::copy_retiled(&s, nb2, d.path().join("b")).unwrap();
        prop_assert_eq!(t.nb(), nb2);
        prop_assert_eq!(t.to_dense().unwrap(), a);
    }

    #[test]
    fn regions_match_dense_slices(m in 1usize..30, n in 1usize..30, nb in 1usize..9, r0 in 0usize..30, r1 in 0usize..30, c0 in 0usize..30, c1 in 0usize..30) {
        let (r0, r1) = (r0.min(m), r1.min(m));
        let (c0, c1) = (c0.min(n), c1.min(n));
        let (r0, r1) = (r0.min(r1), r0.max(r1));
        let (c0, c1) = (c0.min(c1), c0.max(c1));
        let d = tempfile::tempdir().unwrap();
        let a = numbered(m, n);
        let s = TileStore::from_dense(&a, nb, d.path().join("a")).unwrap();
        prop_assert_eq!(s.read_region(r0..r1, c0..c1).unwrap(), a.sub(r0..r1, c0..c1));
    }
}
