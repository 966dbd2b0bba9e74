//! Cache counters checked against an offline replay of the textual task
//! trace.

use std::collections::HashMap;
use std::sync::Arc;

use oocutv::cache::{BlockCache, CacheConfig, CacheStats, StoreSet};
use oocutv::scheduler::{execute_overlapped, execute_sequential};
use oocutv::{Policy, TileStore};
use oocutv_core::cod::{nullify_task_list, solve_task_list};
use oocutv_core::randutv::{build_task_list, FactorOptions};
use oocutv_core::{Dims, StoreRole, TaskList};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Acc {
    R,
    Rw,
    Wo,
}

type Key = (String, usize, usize);

/// Parses `<idx> <kind> ROLE(i,j)[r0..r1,c0..c1]:acc ...` into per-task
/// distinct blocks with merged access.
fn parse(trace: &str) -> Vec<Vec<(Key, Acc)>> {
    trace
        .lines()
        .map(|line| {
            let mut out: Vec<(Key, Acc)> = Vec::new();
            for tok in line.split_whitespace().skip(2) {
                let (head, acc) = tok.rsplit_once(':').unwrap();
                let acc = match acc {
                    "r" => Acc::R,
                    "rw" => Acc::Rw,
                    "wo" => Acc::Wo,
                    other => panic!("bad access {other}"),
                };
                let role = &head[..head.find('(').unwrap()];
                let coords = &head[head.find('(').unwrap() + 1..head.find(')').unwrap()];
                let (i, j) = coords.split_once(',').unwrap();
                let key = (role.to_string(), i.parse().unwrap(), j.parse().unwrap());
                match out.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, a)) => *a = if *a == acc && acc != Acc::Rw { acc } else { Acc::Rw },
                    None => out.push((key, acc)),
                }
            }
            out
        })
        .collect()
}

fn fnv_set(role: StoreRole, i: usize, j: usize) -> usize {
    let mut h: u64 = 0xcbf29ce484222325;
    for w in [role.code(), i as u64, j as u64] {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    (h % 4) as usize
}

struct Line {
    dirty: bool,
    last: u64,
    bytes: usize,
    set: usize,
}

fn simulate(trace: &str, dims: &Dims, policy: Policy, capacity: usize) -> CacheStats {
    let tasks = parse(trace);
    let mut uses: HashMap<Key, Vec<usize>> = HashMap::new();
    for (t, blocks) in tasks.iter().enumerate() {
        for (k, _) in blocks {
            uses.entry(k.clone()).or_default().push(t);
        }
    }
    let slot = dims.nb * dims.nb * 8;
    let slots = capacity / slot;
    let per_set: Vec<usize> = (0..4).map(|s| slots / 4 + usize::from(s < slots % 4)).collect();
    let mut res: HashMap<Key, Line> = HashMap::new();
    let mut st = CacheStats::default();
    let mut tick = 0u64;
    for (now, blocks) in tasks.iter().enumerate() {
        let mut pinned: Vec<Key> = Vec::new();
        for (key, acc) in blocks {
            tick += 1;
            let role = StoreRole::from_name(&key.0).unwrap();
            let (r, c) = dims.layout(role).tile_shape(key.1, key.2);
            let bytes = if policy == Policy::LruFixedAssoc { slot } else { r * c * 8 };
            let set = fnv_set(role, key.1, key.2);
            if policy == Policy::None {
                let idle: Vec<Key> = res.keys().filter(|k| !pinned.contains(k)).cloned().collect();
                for k in idle {
                    if res.remove(&k).unwrap().dirty {
                        st.writes += 1;
                    }
                }
            }
            if let Some(l) = res.get_mut(key) {
                if *acc != Acc::Wo {
                    st.hits += 1;
                }
                l.last = tick;
                l.dirty |= *acc != Acc::R;
                pinned.push(key.clone());
                continue;
            }
            loop {
                let fits = match policy {
                    Policy::LruFixedAssoc => res.values().filter(|l| l.set == set).count() < per_set[set],
                    _ => res.values().map(|l| l.bytes).sum::<usize>() + bytes <= capacity,
                };
                if fits {
                    break;
                }
                let cands = res
                    .iter()
                    .filter(|(k, l)| !pinned.contains(k) && (policy != Policy::LruFixedAssoc || l.set == set));
                let victim = if policy == Policy::LfuFuture {
                    cands
                        .max_by_key(|(k, l)| {
                            let next = uses[*k].iter().copied().find(|&t| t >= now).unwrap_or(usize::MAX);
                            (next, std::cmp::Reverse(l.last))
                        })
                        .map(|(k, _)| k.clone())
                } else {
                    cands.min_by_key(|(_, l)| l.last).map(|(k, _)| k.clone())
                };
                let v = victim.expect("task working set fits");
                if res.remove(&v).unwrap().dirty {
                    st.writes += 1;
                }
            }
            if *acc != Acc::Wo {
                st.reads += 1;
                st.misses += 1;
            }
            res.insert(key.clone(), Line { dirty: *acc != Acc::R, last: tick, bytes, set });
            pinned.push(key.clone());
        }
    }
    st.writes += res.values().filter(|l| l.dirty).count() as u64;
    st
}

fn stores(dir: &std::path::Path, dims: &Dims) -> Arc<StoreSet> {
    let mut set = StoreSet::new();
    for role in StoreRole::ALL {
        let l = dims.layout(role);
        if l.rows == 0 || l.cols == 0 {
            continue;
        }
        let s = TileStore::create(dir.join(role.name()), l.rows, l.cols, dims.nb).unwrap();
        set.insert(role, s);
    }
    let a = set.get(StoreRole::A).unwrap();
    a.fill_with(|i, j| ((i * 7 + j * 3) % 11) as f64 + if i == j { 20.0 } else { 0.0 }).unwrap();
    set.get(StoreRole::V).unwrap().fill_identity().unwrap();
    set.get(StoreRole::U).unwrap().fill_identity().unwrap();
    set.get(StoreRole::B).unwrap().fill_with(|_, _| 1.0).unwrap();
    Arc::new(set)
}

fn task_lists(dims: Dims) -> Vec<TaskList> {
    let fo = FactorOptions { q: 1, build_u: true, rhs: true, seed: 3, full_last_step: false };
    let r = dims.m.min(dims.n) - dims.nb / 2;
    vec![build_task_list(dims, &fo), nullify_task_list(dims, r), solve_task_list(dims, r)]
}

#[test]
fn counters_match_trace_replay() {
    for dims in [Dims::new(24, 24, 3, 4), Dims::new(30, 19, 5, 4), Dims::new(19, 30, 2, 5)] {
        for policy in [Policy::None, Policy::LruFixedAssoc, Policy::LruVariable, Policy::LfuFuture] {
            // four operands of one task may share a set, so the set-associative
            // cache needs four slots per set
            let sizes = if policy == Policy::LruFixedAssoc { [16, 21, 40] } else { [6, 13, 40] };
            for tiles in sizes {
                let dir = tempfile::tempdir().unwrap();
                let set = stores(dir.path(), &dims);
                for (li, tl) in task_lists(dims).iter().enumerate() {
                    let cap = tiles * dims.nb * dims.nb * 8;
                    let cache = BlockCache::new(Arc::clone(&set), CacheConfig { capacity_bytes: cap, policy }, dims.nb);
                    let got = execute_sequential(tl, &cache).unwrap().stats;
                    let want = simulate(&tl.trace(), &dims, policy, cap);
                    assert_eq!(got, want, "{dims:?} {policy:?} tiles={tiles} list={li}");
                    if policy != Policy::None {
                        assert_eq!(got.reads, got.misses);
                    }
                }
            }
        }
    }
}

#[test]
fn lookahead_one_matches_sequential_counts() {
    let dims = Dims::new(28, 28, 2, 4);
    for policy in [Policy::None, Policy::LruFixedAssoc, Policy::LruVariable, Policy::LfuFuture] {
        let tl = &task_lists(dims)[0];
        let seq = {
            let dir = tempfile::tempdir().unwrap();
            let cache = BlockCache::new(stores(dir.path(), &dims), CacheConfig::tiles(17, 4, policy), 4);
            execute_sequential(tl, &cache).unwrap().stats
        };
        let dir = tempfile::tempdir().unwrap();
        let cache = BlockCache::new(stores(dir.path(), &dims), CacheConfig::tiles(17, 4, policy), 4);
        let ovl = execute_overlapped(tl, &cache, 1).unwrap().stats;
        // the single token comes back only after the previous task released its operands
        assert_eq!(ovl, seq, "{policy:?}");
    }
}

#[test]
fn report_matches_flush_totals() {
    let dims = Dims::new(20, 16, 1, 4);
    let dir = tempfile::tempdir().unwrap();
    let cache = BlockCache::new(stores(dir.path(), &dims), CacheConfig::tiles(12, 4, Policy::LruVariable), 4);
    let tl = &task_lists(dims)[0];
    let rep = execute_sequential(tl, &cache).unwrap();
    assert_eq!(rep.stats, cache.stats());
    assert_eq!(rep.tasks(), tl.len());
    assert_eq!(cache.flush().unwrap().writes, rep.stats.writes);
}
