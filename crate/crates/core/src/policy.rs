//! Eviction-policy logic of the block cache, kept free of I/O so it can be
//! unit-tested and shared with offline trace simulation.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::layout::BlockId;
use crate::task::TaskList;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Policy {
    /// No reuse: every operand is fetched for each task and written back
    /// afterwards.
    None,
    /// LRU within one of [`ASSOC_SETS`] sets, fixed `nb×nb` slots.
    LruFixedAssoc,
    /// LRU over the whole cache, slots sized to the tile.
    LruVariable,
    /// Evict the tile whose next use in the schedule is latest.
    LfuFuture,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::None => "none",
            Policy::LruFixedAssoc => "lru4",
            Policy::LruVariable => "lru",
            Policy::LfuFuture => "lfu",
        }
    }

    pub fn from_name(s: &str) -> Option<Policy> {
        [Policy::None, Policy::LruFixedAssoc, Policy::LruVariable, Policy::LfuFuture]
            .into_iter()
            .find(|p| p.name() == s)
    }
}

pub const ASSOC_SETS: usize = 4;

/// Set index of a block under the fixed-associativity policy (FNV-1a over
/// role code and tile coordinates).
pub fn assoc_set(id: &BlockId) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for word in [id.role.code(), id.i as u64, id.j as u64] {
        for byte in word.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    (h % ASSOC_SETS as u64) as usize
}

/// For each block, the sorted task indices that touch it.
#[derive(Clone, Debug, Default)]
pub struct Schedule {
    uses: BTreeMap<BlockId, Vec<usize>>,
}

impl Schedule {
    pub fn from_tasks(tasks: &TaskList) -> Self {
        let mut uses: BTreeMap<BlockId, Vec<usize>> = BTreeMap::new();
        for (idx, t) in tasks.iter().enumerate() {
            for (b, _) in t.blocks() {
                uses.entry(b).or_default().push(idx);
            }
        }
        Schedule { uses }
    }

    /// First task index `>= now` that touches `id`.
    pub fn next_use(&self, id: &BlockId, now: usize) -> Option<usize> {
        let v = self.uses.get(id)?;
        let pos = v.partition_point(|&t| t < now);
        v.get(pos).copied()
    }
}

/// An unpinned resident tile considered for eviction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub id: BlockId,
    /// Logical time of the last access; lower is older.
    pub last_access: u64,
}

/// Picks the index into `candidates` to evict. LRU policies take the oldest
/// access; the future policy takes the latest next use, treating "never
/// again" as later than anything and breaking ties by age.
pub fn choose_victim(
    policy: Policy,
    candidates: &[Candidate],
    schedule: Option<&Schedule>,
    now: usize,
) -> Option<usize> {
    if candidates.is_empty() {
        return None;
    }
    match (policy, schedule) {
        (Policy::LfuFuture, Some(s)) => {
            let key = |c: &Candidate| {
                let next = s.next_use(&c.id, now).unwrap_or(usize::MAX);
                (next, core::cmp::Reverse(c.last_access))
            };
            (0..candidates.len()).max_by_key(|&i| key(&candidates[i]))
        }
        _ => (0..candidates.len()).min_by_key(|&i| candidates[i].last_access),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::StoreRole;
    use crate::task::{Access, Kernel, Task, View};
    use alloc::vec;

    fn id(i: usize) -> BlockId {
        BlockId::new(StoreRole::A, i, 0)
    }

    fn touch(i: usize) -> Task {
        Task::new(Kernel::Zero, vec![View::new(id(i), 0..1, 0..1, Access::ReadWrite)], 0)
    }

    fn schedule(order: &[usize]) -> Schedule {
        let mut tl = TaskList::new();
        order.iter().for_each(|&i| tl.push(touch(i)));
        Schedule::from_tasks(&tl)
    }

    #[test]
    fn future_policy_evicts_latest_next_use() {
        // block 1 next used at task 5, block 2 at task 90
        let mut order = vec![9; 100];
        order[5] = 1;
        order[90] = 2;
        let s = schedule(&order);
        let c = [Candidate { id: id(1), last_access: 0 }, Candidate { id: id(2), last_access: 1 }];
        assert_eq!(choose_victim(Policy::LfuFuture, &c, Some(&s), 3), Some(1));
    }

    #[test]
    fn never_used_again_goes_first() {
        let s = schedule(&[1, 2, 1, 1]);
        let c = [Candidate { id: id(1), last_access: 0 }, Candidate { id: id(2), last_access: 7 }];
        assert_eq!(choose_victim(Policy::LfuFuture, &c, Some(&s), 2), Some(1));
        let c3 = [
            Candidate { id: id(7), last_access: 9 },
            Candidate { id: id(8), last_access: 4 },
            Candidate { id: id(1), last_access: 0 },
        ];
        // both 7 and 8 are never used; the older one loses
        assert_eq!(choose_victim(Policy::LfuFuture, &c3, Some(&s), 2), Some(1));
    }

    #[test]
    fn lru_takes_oldest() {
        let c = [
            Candidate { id: id(1), last_access: 5 },
            Candidate { id: id(2), last_access: 2 },
            Candidate { id: id(3), last_access: 8 },
        ];
        assert_eq!(choose_victim(Policy::LruVariable, &c, None, 0), Some(1));
        assert_eq!(choose_victim(Policy::LruVariable, &[], None, 0), None);
    }

    #[test]
    fn next_use_is_inclusive_of_now() {
        let s = schedule(&[3, 4, 3]);
        assert_eq!(s.next_use(&id(3), 0), Some(0));
        assert_eq!(s.next_use(&id(3), 1), Some(2));
        assert_eq!(s.next_use(&id(3), 3), None);
    }

    #[test]
    fn sets_spread_over_all_four() {
        let mut seen = [false; ASSOC_SETS];
        for i in 0..32 {
            seen[assoc_set(&id(i))] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(Policy::from_name("lru4"), Some(Policy::LruFixedAssoc));
    }
}
