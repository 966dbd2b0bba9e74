use oocutv_core::cod::{nullify_task_list, rank_from_diagonal, solve_task_list};
use oocutv_core::randutv::{build_task_list, FactorOptions};
use oocutv_core::{DenseStores, Dims, Mat, StoreRole, TaskKind};

fn lcg_mat(r: usize, c: usize, seed: u64) -> Mat {
    let mut s = seed;
    Mat::from_fn(r, c, |_, _| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    })
}

fn stores(dims: &Dims, a: &Mat, b: &Mat) -> DenseStores {
    let mut st = DenseStores::for_dims(dims);
    st.insert(StoreRole::A, a.clone());
    st.insert(StoreRole::B, b.clone());
    st.insert(StoreRole::V, Mat::identity(dims.n));
    st.insert(StoreRole::U, Mat::identity(dims.m));
    st
}

fn strictly_lower_norm(t: &Mat) -> f64 {
    let mut s = 0.0f64;
    for j in 0..t.cols() {
        for i in j + 1..t.rows() {
            s = s.max(t[(i, j)].abs());
        }
    }
    s
}

#[test]
fn nine_by_nine_tile_counts() {
    let nb = 4;
    let dims = Dims::new(9 * nb, 9 * nb, nb, nb);
    let tl = build_task_list(dims, &FactorOptions::default());
    let expect = [
        (TaskKind::Normal, 44),
        (TaskKind::GemmTn, 284),
        (TaskKind::CompDe, 16),
        (TaskKind::CompTd, 72),
        (TaskKind::ApplRDe, 144),
        (TaskKind::ApplRTd, 648),
        (TaskKind::ApplLDe, 44),
        (TaskKind::ApplLTd, 240),
        (TaskKind::KeepUpp, 8),
        (TaskKind::Svd, 9),
        (TaskKind::GemmAabt, 117),
        (TaskKind::GemmAbta, 45),
        (TaskKind::Zero, 36),
    ];
    for (kind, n) in expect {
        assert_eq!(tl.count(kind), n, "{kind}");
    }
    assert_eq!(tl.len(), expect.iter().map(|e| e.1).sum::<usize>());

    let r = 8 * nb + 2;
    let nl = nullify_task_list(dims, r);
    assert_eq!(nl.count(TaskKind::CompRz), 9);
    assert_eq!(nl.count(TaskKind::ApplRRz), 117);
    assert_eq!(nl.count(TaskKind::Zero), 9);
    let sl = solve_task_list(dims, r);
    assert_eq!(sl.count(TaskKind::Trsm), 9);
    assert_eq!(sl.count(TaskKind::GemmNn), 117);
    assert_eq!(tl.len() + nl.len() + sl.len() - 9, 1959);
}

fn check_factorization(m: usize, n: usize, nb: usize, q: usize, full_last_step: bool) {
    let k = 3;
    let dims = Dims::new(m, n, k, nb);
    let a = lcg_mat(m, n, (m * 31 + n * 7 + nb) as u64);
    let b = lcg_mat(m, k, 99);
    let opts = FactorOptions { q, build_u: true, rhs: true, seed: 5, full_last_step };
    let mut st = stores(&dims, &a, &b);
    st.run(&build_task_list(dims, &opts)).unwrap();
    let t = st.get(StoreRole::A).unwrap().clone();
    let v = st.get(StoreRole::V).unwrap().clone();
    let u = st.get(StoreRole::U).unwrap().clone();
    let bt = st.get(StoreRole::B).unwrap().clone();
    let anorm = a.fro_norm();
    let tag = format!("m={m} n={n} nb={nb} q={q} full={full_last_step}");
    let rec = a.matmul(&v).minus(&u.matmul(&t)).fro_norm();
    assert!(rec <= 1e-12 * anorm * (m.max(n) as f64), "{tag}: AV-UT {rec}");
    let vo = v.transpose().matmul(&v).minus(&Mat::identity(n)).fro_norm();
    let uo = u.transpose().matmul(&u).minus(&Mat::identity(m)).fro_norm();
    assert!(vo <= 1e-12 * n as f64 && uo <= 1e-12 * m as f64, "{tag}: orth {vo} {uo}");
    assert_eq!(strictly_lower_norm(&t), 0.0, "{tag}: T not triangular");
    let ub = u.transpose().matmul(&b);
    assert!(ub.minus(&bt).fro_norm() <= 1e-12 * b.fro_norm() * m as f64, "{tag}: Bt");
}

#[test]
fn factorization_identities_on_odd_shapes() {
    for &(m, n, nb) in &[
        (11, 8, 3),
        (8, 11, 3),
        (12, 12, 4),
        (13, 13, 4),
        (7, 7, 7),
        (20, 9, 4),
        (9, 20, 4),
        (1, 1, 1),
        (5, 1, 2),
        (1, 5, 2),
    ] {
        for q in [0, 1] {
            check_factorization(m, n, nb, q, false);
            check_factorization(m, n, nb, q, true);
        }
    }
}

#[test]
fn nullify_and_solve_give_minimum_norm_solution() {
    // rank-5 matrix built as a product of thin factors
    let (m, n, nb, r) = (14, 11, 3, 5);
    let a = lcg_mat(m, r, 1).matmul(&lcg_mat(r, n, 2));
    let b = lcg_mat(m, 2, 3);
    let dims = Dims::new(m, n, 2, nb);
    let mut st = stores(&dims, &a, &b);
    let opts = FactorOptions { q: 1, build_u: false, rhs: true, seed: 1, full_last_step: false };
    st.run(&build_task_list(dims, &opts)).unwrap();
    let t = st.get(StoreRole::A).unwrap();
    let diag: Vec<f64> = (0..n.min(m)).map(|i| t[(i, i)]).collect();
    assert_eq!(rank_from_diagonal(&diag, 1e-10), r);
    st.run(&nullify_task_list(dims, r)).unwrap();
    let t = st.get(StoreRole::A).unwrap();
    assert!(t.sub(0..r, r..n).fro_norm() <= 1e-12 * t.fro_norm());
    st.run(&solve_task_list(dims, r)).unwrap();
    let x = st.get(StoreRole::X).unwrap().clone();

    // normal equations hold and x lies in the row space of A
    let g = a.transpose().matmul(&a.matmul(&x).minus(&b));
    assert!(g.fro_norm() <= 1e-10 * a.fro_norm().powi(2) * x.fro_norm().max(1.0), "gradient {}", g.fro_norm());
    let v = st.get(StoreRole::V).unwrap();
    let null_part = v.sub(0..n, r..n).transpose().matmul(&x);
    assert!(null_part.fro_norm() <= 1e-10 * x.fro_norm());
}
