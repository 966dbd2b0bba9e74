//! Bounded tile cache between the executors and the tile stores.
//!
//! Acquiring a block pins it; pinned blocks are never evicted. Dirty blocks
//! are written back when evicted or on [`BlockCache::flush`]. Only one
//! thread acquires at a time (the I/O worker under the overlapped
//! executor); any thread may release.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use oocutv_core::policy::{assoc_set, choose_victim, Candidate, Policy, Schedule, ASSOC_SETS};
use oocutv_core::{Access, BlockId, Mat, StoreRole};

use crate::error::{Error, Result};
use crate::store::TileStore;

/// The stores a task list addresses, one per role.
#[derive(Debug, Default)]
pub struct StoreSet {
    stores: BTreeMap<StoreRole, TileStore>,
}

impl StoreSet {
    pub fn new() -> Self {
        StoreSet::default()
    }

    pub fn insert(&mut self, role: StoreRole, store: TileStore) {
        self.stores.insert(role, store);
    }

    pub fn get(&self, role: StoreRole) -> Result<&TileStore> {
        self.stores.get(&role).ok_or_else(|| Error::Invalid(format!("no store for {}", role.name())))
    }

    pub fn contains(&self, role: StoreRole) -> bool {
        self.stores.contains_key(&role)
    }

    pub fn remove(&mut self, role: StoreRole) -> Option<TileStore> {
        self.stores.remove(&role)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CacheConfig {
    pub capacity_bytes: usize,
    pub policy: Policy,
}

impl CacheConfig {
    /// Capacity expressed in `nb×nb` tiles.
    pub fn tiles(tiles: usize, nb: usize, policy: Policy) -> Self {
        CacheConfig { capacity_bytes: tiles * nb * nb * 8, policy }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub reads: u64,
    pub writes: u64,
    pub hits: u64,
    pub misses: u64,
}

impl CacheStats {
    pub fn since(&self, earlier: &CacheStats) -> CacheStats {
        CacheStats {
            reads: self.reads - earlier.reads,
            writes: self.writes - earlier.writes,
            hits: self.hits - earlier.hits,
            misses: self.misses - earlier.misses,
        }
    }

    pub fn add(&mut self, other: &CacheStats) {
        self.reads += other.reads;
        self.writes += other.writes;
        self.hits += other.hits;
        self.misses += other.misses;
    }
}

impl fmt::Display for CacheStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "reads={} writes={} hits={} misses={}", self.reads, self.writes, self.hits, self.misses)
    }
}

/// A pinned resident tile. Must be given back through
/// [`BlockCache::release`].
#[derive(Debug)]
pub struct Handle {
    pub id: BlockId,
    data: Arc<Mutex<Mat>>,
}

impl Handle {
    pub fn lock(&self) -> MutexGuard<'_, Mat> {
        self.data.lock().unwrap_or_else(|p| p.into_inner())
    }
}

#[derive(Debug)]
struct Entry {
    data: Arc<Mutex<Mat>>,
    dirty: bool,
    pins: usize,
    bytes: usize,
    last: u64,
}

#[derive(Debug, Default)]
struct Inner {
    entries: HashMap<BlockId, Entry>,
    used_bytes: usize,
    set_used: [usize; ASSOC_SETS],
    tick: u64,
    stats: CacheStats,
    schedule: Option<Arc<Schedule>>,
    aborted: bool,
}

pub struct BlockCache {
    stores: Arc<StoreSet>,
    config: CacheConfig,
    slot_bytes: usize,
    set_slots: [usize; ASSOC_SETS],
    inner: Mutex<Inner>,
    released: Condvar,
    acquiring: Mutex<()>,
}

impl fmt::Debug for BlockCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockCache").field("config", &self.config).finish_non_exhaustive()
    }
}

enum Step {
    Done(Handle),
    Load,
    Evict(BlockId, Entry),
    Wait,
}

impl BlockCache {
    /// `nb` fixes the slot size of the set-associative policy.
    pub fn new(stores: Arc<StoreSet>, config: CacheConfig, nb: usize) -> Self {
        let slot_bytes = nb * nb * 8;
        let slots = config.capacity_bytes / slot_bytes.max(1);
        let mut set_slots = [slots / ASSOC_SETS; ASSOC_SETS];
        for s in set_slots.iter_mut().take(slots % ASSOC_SETS) {
            *s += 1;
        }
        BlockCache {
            stores,
            config,
            slot_bytes,
            set_slots,
            inner: Mutex::new(Inner::default()),
            released: Condvar::new(),
            acquiring: Mutex::new(()),
        }
    }

    pub fn stores(&self) -> &Arc<StoreSet> {
        &self.stores
    }

    pub fn config(&self) -> CacheConfig {
        self.config
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Schedule consulted by the future-use policy; `now` arguments of
    /// [`acquire`](Self::acquire) index into it.
    pub fn set_schedule(&self, schedule: Option<Schedule>) {
        self.lock().schedule = schedule.map(Arc::new);
    }

    pub fn stats(&self) -> CacheStats {
        self.lock().stats
    }

    pub fn resident(&self) -> usize {
        self.lock().entries.len()
    }

    /// Wakes and fails any waiting acquirer; used when the consumer side
    /// of an overlapped run stops early.
    pub fn abort(&self) {
        self.lock().aborted = true;
        self.released.notify_all();
    }

    pub fn reset_abort(&self) {
        self.lock().aborted = false;
    }

    fn charge(&self, bytes: usize) -> usize {
        if self.config.policy == Policy::LruFixedAssoc {
            self.slot_bytes
        } else {
            bytes
        }
    }

    fn fits(&self, inner: &Inner, set: usize, bytes: usize) -> bool {
        match self.config.policy {
            Policy::LruFixedAssoc => inner.set_used[set] < self.set_slots[set],
            _ => inner.used_bytes + bytes <= self.config.capacity_bytes,
        }
    }

    fn same_pool(&self, a: &BlockId, set: usize) -> bool {
        self.config.policy != Policy::LruFixedAssoc || assoc_set(a) == set
    }

    fn remove(&self, inner: &mut Inner, id: &BlockId) -> Option<Entry> {
        let e = inner.entries.remove(id)?;
        inner.used_bytes -= e.bytes;
        inner.set_used[assoc_set(id)] -= 1;
        Some(e)
    }

    fn write_back(&self, id: &BlockId, e: &Entry) -> Result<()> {
        let data = e.data.lock().unwrap_or_else(|p| p.into_inner());
        self.stores.get(id.role)?.write_mat(id.i, id.j, &data)
    }

    /// Pins block `id` for a task. `now` is the index of that task in the
    /// current schedule and `own` lists the blocks the same task already
    /// holds; if only those stand in the way the call fails with a capacity
    /// error instead of waiting.
    pub fn acquire(&self, id: BlockId, access: Access, now: usize, own: &[BlockId]) -> Result<Handle> {
        let _one = self.acquiring.lock().unwrap_or_else(|p| p.into_inner());
        let store = self.stores.get(id.role)?;
        if !store.layout().contains(id.i, id.j) {
            return Err(Error::UnknownBlock(id.to_string()));
        }
        let (r, c) = store.layout().tile_shape(id.i, id.j);
        let bytes = self.charge(r * c * 8);
        let set = assoc_set(&id);
        if bytes > self.config.capacity_bytes
            || (self.config.policy == Policy::LruFixedAssoc && self.set_slots[set] == 0)
        {
            return Err(Error::Capacity { needed: bytes, capacity: self.config.capacity_bytes });
        }

        let mut inner = self.lock();
        inner.tick += 1;
        let tick = inner.tick;
        loop {
            if inner.aborted {
                return Err(Error::Aborted);
            }
            match self.plan(&mut inner, id, access, now, own, set, bytes, tick)? {
                Step::Done(h) => return Ok(h),
                Step::Wait => inner = self.released.wait(inner).unwrap_or_else(|p| p.into_inner()),
                Step::Evict(vid, e) => {
                    drop(inner);
                    if e.dirty {
                        self.write_back(&vid, &e)?;
                    }
                    inner = self.lock();
                    if e.dirty {
                        inner.stats.writes += 1;
                    }
                }
                Step::Load => {
                    drop(inner);
                    let data =
                        if access == Access::WriteOnly { Mat::zeros(r, c) } else { store.read_mat(id.i, id.j)? };
                    let data = Arc::new(Mutex::new(data));
                    let mut inner = self.lock();
                    if access != Access::WriteOnly {
                        inner.stats.reads += 1;
                        inner.stats.misses += 1;
                    }
                    inner.entries.insert(
                        id,
                        Entry { data: Arc::clone(&data), dirty: access.writes(), pins: 1, bytes, last: tick },
                    );
                    return Ok(Handle { id, data });
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn plan(
        &self,
        inner: &mut Inner,
        id: BlockId,
        access: Access,
        now: usize,
        own: &[BlockId],
        set: usize,
        bytes: usize,
        tick: u64,
    ) -> Result<Step> {
        let policy = self.config.policy;
        if policy == Policy::None {
            // no reuse: everything not in flight leaves before the next fetch
            let idle: Vec<BlockId> = inner.entries.iter().filter(|(_, e)| e.pins == 0).map(|(k, _)| *k).collect();
            if let Some(v) = idle.into_iter().min() {
                let e = self.remove(inner, &v).expect("listed above");
                return Ok(Step::Evict(v, e));
            }
        }
        if let Some(e) = inner.entries.get(&id) {
            if policy == Policy::None {
                debug_assert!(e.pins > 0);
                return Ok(Step::Wait);
            }
            if access != Access::WriteOnly {
                inner.stats.hits += 1;
            }
            let e = inner.entries.get_mut(&id).expect("present");
            e.pins += 1;
            e.last = tick;
            e.dirty |= access.writes();
            return Ok(Step::Done(Handle { id, data: Arc::clone(&e.data) }));
        }
        if self.fits(inner, set, bytes) {
            inner.used_bytes += bytes;
            inner.set_used[set] += 1;
            return Ok(Step::Load);
        }
        let candidates: Vec<Candidate> = inner
            .entries
            .iter()
            .filter(|(k, e)| e.pins == 0 && self.same_pool(k, set))
            .map(|(k, e)| Candidate { id: *k, last_access: e.last })
            .collect();
        let schedule = inner.schedule.clone();
        if let Some(ix) = choose_victim(policy, &candidates, schedule.as_deref(), now) {
            let v = candidates[ix].id;
            let e = self.remove(inner, &v).expect("candidate is resident");
            return Ok(Step::Evict(v, e));
        }
        let others_pinned = inner.entries.iter().any(|(k, e)| e.pins > 0 && self.same_pool(k, set) && !own.contains(k));
        if others_pinned {
            Ok(Step::Wait)
        } else {
            Err(Error::Capacity { needed: bytes, capacity: self.config.capacity_bytes })
        }
    }

    pub fn release(&self, id: BlockId) -> Result<()> {
        let mut inner = self.lock();
        let e = inner.entries.get_mut(&id).ok_or_else(|| Error::DoubleRelease(id.to_string()))?;
        if e.pins == 0 {
            return Err(Error::DoubleRelease(id.to_string()));
        }
        e.pins -= 1;
        drop(inner);
        self.released.notify_all();
        Ok(())
    }

    /// Writes every dirty tile back, keeping clean copies resident, and
    /// returns the counters.
    pub fn flush(&self) -> Result<CacheStats> {
        let _one = self.acquiring.lock().unwrap_or_else(|p| p.into_inner());
        let dirty: Vec<(BlockId, Arc<Mutex<Mat>>)> = {
            let mut inner = self.lock();
            if inner.entries.values().any(|e| e.pins > 0) {
                return Err(Error::Invalid("flush with pinned tiles".into()));
            }
            let mut v: Vec<_> = inner
                .entries
                .iter_mut()
                .filter(|(_, e)| e.dirty)
                .map(|(k, e)| {
                    e.dirty = false;
                    (*k, Arc::clone(&e.data))
                })
                .collect();
            v.sort_by_key(|(k, _)| *k);
            v
        };
        for (id, data) in &dirty {
            let m = data.lock().unwrap_or_else(|p| p.into_inner());
            self.stores.get(id.role)?.write_mat(id.i, id.j, &m)?;
        }
        let mut inner = self.lock();
        inner.stats.writes += dirty.len() as u64;
        Ok(inner.stats)
    }

    /// Flushes and then drops every resident tile.
    pub fn clear(&self) -> Result<CacheStats> {
        let stats = self.flush()?;
        let mut inner = self.lock();
        inner.entries.clear();
        inner.used_bytes = 0;
        inner.set_used = [0; ASSOC_SETS];
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cache(policy: Policy, tiles: usize) -> (tempfile::TempDir, BlockCache) {
        let dir = tempfile::tempdir().unwrap();
        let mut set = StoreSet::new();
        let a = TileStore::create(dir.path().join("a"), 8, 8, 2).unwrap();
        a.fill_with(|i, j| (i * 8 + j) as f64).unwrap();
        set.insert(StoreRole::A, a);
        let c = BlockCache::new(Arc::new(set), CacheConfig::tiles(tiles, 2, policy), 2);
        (dir, c)
    }

    fn id(i: usize, j: usize) -> BlockId {
        BlockId::new(StoreRole::A, i, j)
    }

    #[test]
    fn second_acquire_hits() {
        let (_d, c) = cache(Policy::LruVariable, 4);
        let h = c.acquire(id(0, 0), Access::Read, 0, &[]).unwrap();
        assert_eq!(h.lock()[(1, 1)], 9.0);
        c.release(id(0, 0)).unwrap();
        c.acquire(id(0, 0), Access::Read, 1, &[]).unwrap();
        c.release(id(0, 0)).unwrap();
        let s = c.stats();
        assert_eq!((s.reads, s.hits, s.misses), (1, 1, 1));
    }

    #[test]
    fn no_reuse_policy_refetches() {
        let (_d, c) = cache(Policy::None, 4);
        // a QR on A00 followed by an apply touching A00 again
        c.acquire(id(0, 0), Access::ReadWrite, 0, &[]).unwrap();
        c.release(id(0, 0)).unwrap();
        c.acquire(id(0, 0), Access::Read, 1, &[]).unwrap();
        c.acquire(id(0, 1), Access::ReadWrite, 1, &[id(0, 0)]).unwrap();
        c.release(id(0, 0)).unwrap();
        c.release(id(0, 1)).unwrap();
        let s = c.flush().unwrap();
        assert_eq!(s.reads, 3);
        assert_eq!(s.writes, 2);
        assert_eq!(s.misses, s.reads);
    }

    #[test]
    fn release_defers_write_and_flush_writes_once() {
        let (_d, c) = cache(Policy::LruVariable, 4);
        assert_eq!(c.flush().unwrap().writes, 0);
        let h = c.acquire(id(1, 1), Access::ReadWrite, 0, &[]).unwrap();
        h.lock()[(0, 0)] = -1.0;
        c.release(id(1, 1)).unwrap();
        assert_eq!(c.stats().writes, 0);
        assert_eq!(c.flush().unwrap().writes, 1);
        assert_eq!(c.flush().unwrap().writes, 1);
        assert_eq!(c.stores().get(StoreRole::A).unwrap().read_mat(1, 1).unwrap()[(0, 0)], -1.0);
    }

    #[test]
    fn pinned_tiles_survive_pressure_and_overflow_is_an_error() {
        let (_d, c) = cache(Policy::LruVariable, 2);
        c.acquire(id(0, 0), Access::Read, 0, &[]).unwrap();
        c.acquire(id(0, 1), Access::Read, 0, &[]).unwrap();
        c.release(id(0, 1)).unwrap();
        c.acquire(id(0, 2), Access::Read, 1, &[]).unwrap();
        // 0,0 is still pinned, so 0,1 was the victim
        let err = c.acquire(id(0, 3), Access::Read, 1, &[id(0, 2), id(0, 0)]).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }));
        assert!(matches!(c.release(id(3, 3)), Err(Error::DoubleRelease(_))));
        c.release(id(0, 0)).unwrap();
        assert!(matches!(c.release(id(0, 0)), Err(Error::DoubleRelease(_))));
    }

    #[test]
    fn write_only_counts_neither_hit_nor_miss() {
        let (_d, c) = cache(Policy::LfuFuture, 4);
        let h = c.acquire(id(2, 2), Access::WriteOnly, 0, &[]).unwrap();
        assert_eq!(h.lock().as_slice(), &[0.0; 4]);
        c.release(id(2, 2)).unwrap();
        assert_eq!(c.stats(), CacheStats::default());
    }

    #[test]
    fn stats_line_format() {
        let s = CacheStats { reads: 1, writes: 2, hits: 3, misses: 4 };
        assert_eq!(s.to_string(), "reads=1 writes=2 hits=3 misses=4");
    }
}
