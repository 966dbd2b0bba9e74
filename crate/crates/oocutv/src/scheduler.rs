//! Executors running a task list through a [`BlockCache`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::mpsc;
use std::time::Instant;

use oocutv_core::policy::{Policy, Schedule};
use oocutv_core::{BlockId, Mat, Task, TaskKind, TaskList};

use crate::cache::{BlockCache, CacheStats, Handle};
use crate::error::{Error, Result};

pub const DEFAULT_LOOKAHEAD: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Executor {
    #[default]
    Sequential,
    /// One I/O worker prefetching operands of up to `lookahead` tasks ahead
    /// of the compute worker.
    Overlapped { lookahead: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KindStats {
    pub count: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExecutionReport {
    pub kinds: BTreeMap<TaskKind, KindStats>,
    /// Time spent inside kernels, including operand staging.
    pub compute_seconds: f64,
    /// Time the compute side spent waiting for operands.
    pub io_wait_seconds: f64,
    pub wall_seconds: f64,
    pub stats: CacheStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Table,
    Csv,
}

impl Format {
    pub fn from_name(s: &str) -> Option<Format> {
        match s {
            "table" => Some(Format::Table),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }
}

impl ExecutionReport {
    pub fn tasks(&self) -> usize {
        self.kinds.values().map(|k| k.count).sum()
    }

    pub fn merge(&mut self, other: &ExecutionReport) {
        for (k, v) in &other.kinds {
            let e = self.kinds.entry(*k).or_default();
            e.count += v.count;
            e.seconds += v.seconds;
        }
        self.compute_seconds += other.compute_seconds;
        self.io_wait_seconds += other.io_wait_seconds;
        self.wall_seconds += other.wall_seconds;
        self.stats.add(&other.stats);
    }

    /// Task kinds by count and mean seconds per task.
    pub fn render(&self, format: Format) -> String {
        let mut out = String::new();
        match format {
            Format::Csv => {
                out.push_str("task,count,mean_seconds\n");
                for (k, v) in &self.kinds {
                    let _ = writeln!(out, "{},{},{:.6e}", k, v.count, mean(v));
                }
                let _ = writeln!(out, "total,{},", self.tasks());
            }
            Format::Table => {
                let _ = writeln!(out, "{:<12} {:>8} {:>14}", "task", "count", "mean s");
                for (k, v) in &self.kinds {
                    let _ = writeln!(out, "{:<12} {:>8} {:>14.6e}", k.name(), v.count, mean(v));
                }
                let _ = writeln!(out, "{:<12} {:>8}", "total", self.tasks());
                let _ = writeln!(
                    out,
                    "compute {:.3}s  io-wait {:.3}s  wall {:.3}s",
                    self.compute_seconds, self.io_wait_seconds, self.wall_seconds
                );
            }
        }
        out
    }
}

fn mean(v: &KindStats) -> f64 {
    if v.count == 0 {
        0.0
    } else {
        v.seconds / v.count as f64
    }
}

/// Runs `tasks` in list order and flushes the cache at the end; the
/// report's counters are the cache traffic of this run.
pub fn execute(tasks: &TaskList, cache: &BlockCache, executor: Executor) -> Result<ExecutionReport> {
    match executor {
        Executor::Sequential => execute_sequential(tasks, cache),
        Executor::Overlapped { lookahead } => execute_overlapped(tasks, cache, lookahead),
    }
}

fn prepare(tasks: &TaskList, cache: &BlockCache) {
    let schedule = (cache.config().policy == Policy::LfuFuture).then(|| Schedule::from_tasks(tasks));
    cache.set_schedule(schedule);
}

fn acquire_all(cache: &BlockCache, task: &Task, now: usize) -> Result<Vec<Handle>> {
    let blocks = task.blocks();
    let mut own: Vec<BlockId> = Vec::with_capacity(blocks.len());
    let mut handles = Vec::with_capacity(blocks.len());
    for (id, access) in blocks {
        match cache.acquire(id, access, now, &own) {
            Ok(h) => {
                own.push(id);
                handles.push(h);
            }
            Err(e) => {
                release_all(cache, &handles)?;
                return Err(e);
            }
        }
    }
    Ok(handles)
}

fn release_all(cache: &BlockCache, handles: &[Handle]) -> Result<()> {
    for h in handles {
        cache.release(h.id)?;
    }
    Ok(())
}

fn run_one(task: &Task, index: usize, handles: &[Handle]) -> Result<()> {
    let handle = |id: &BlockId| handles.iter().find(|h| h.id == *id).expect("operand acquired");
    let mut ops: Vec<Mat> = task
        .views
        .iter()
        .map(|v| {
            if v.access == oocutv_core::Access::WriteOnly {
                let (r, c) = v.shape();
                Mat::zeros(r, c)
            } else {
                handle(&v.block).lock().sub(v.rows.clone(), v.cols.clone())
            }
        })
        .collect();
    task.kernel.run(&mut ops).map_err(|source| Error::Kernel { task: index, source })?;
    for (v, m) in task.views.iter().zip(&ops) {
        if v.access.writes() {
            handle(&v.block).lock().set_sub(v.rows.start, v.cols.start, m);
        }
    }
    Ok(())
}

fn record(report: &mut ExecutionReport, kind: TaskKind, seconds: f64) {
    let e = report.kinds.entry(kind).or_default();
    e.count += 1;
    e.seconds += seconds;
    report.compute_seconds += seconds;
}

pub fn execute_sequential(tasks: &TaskList, cache: &BlockCache) -> Result<ExecutionReport> {
    let wall = Instant::now();
    prepare(tasks, cache);
    let before = cache.stats();
    let mut report = ExecutionReport::default();
    for (index, task) in tasks.iter().enumerate() {
        let t0 = Instant::now();
        let handles = acquire_all(cache, task, index)?;
        report.io_wait_seconds += t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let res = run_one(task, index, &handles);
        record(&mut report, task.kind(), t1.elapsed().as_secs_f64());
        release_all(cache, &handles)?;
        res?;
    }
    let t0 = Instant::now();
    report.stats = cache.flush()?.since(&before);
    report.io_wait_seconds += t0.elapsed().as_secs_f64();
    report.wall_seconds = wall.elapsed().as_secs_f64();
    Ok(report)
}

/// The I/O worker acquires operands for tasks in list order, holding at
/// most `lookahead` prepared tasks ahead of the compute worker. When the
/// cache is too small for that many pinned working sets, the worker waits
/// for releases, which shrinks the effective lookahead.
pub fn execute_overlapped(tasks: &TaskList, cache: &BlockCache, lookahead: usize) -> Result<ExecutionReport> {
    if lookahead == 0 {
        return Err(Error::Invalid("lookahead must be at least 1".into()));
    }
    let wall = Instant::now();
    prepare(tasks, cache);
    let before = cache.stats();
    let mut report = ExecutionReport::default();

    let outcome = std::thread::scope(|scope| -> Result<()> {
        let (token_tx, token_rx) = mpsc::sync_channel::<()>(lookahead);
        let (ready_tx, ready_rx) = mpsc::channel::<Result<Vec<Handle>>>();
        for _ in 0..lookahead {
            token_tx.send(()).expect("receiver alive");
        }
        let io = scope.spawn(move || {
            for (index, task) in tasks.iter().enumerate() {
                if token_rx.recv().is_err() {
                    return;
                }
                let r = acquire_all(cache, task, index);
                let failed = r.is_err();
                if ready_tx.send(r).is_err() || failed {
                    return;
                }
            }
        });

        let mut result = Ok(());
        for (index, task) in tasks.iter().enumerate() {
            let t0 = Instant::now();
            let msg = ready_rx.recv();
            report.io_wait_seconds += t0.elapsed().as_secs_f64();
            let handles = match msg {
                Ok(Ok(h)) => h,
                Ok(Err(e)) => {
                    result = Err(e);
                    break;
                }
                Err(_) => {
                    result = Err(Error::Aborted);
                    break;
                }
            };
            let t1 = Instant::now();
            let res = run_one(task, index, &handles);
            record(&mut report, task.kind(), t1.elapsed().as_secs_f64());
            let rel = release_all(cache, &handles);
            if let Err(e) = res.and(rel) {
                result = Err(e);
                break;
            }
            // the worker may already be done with the list
            let _ = token_tx.send(());
        }
        if result.is_err() {
            cache.abort();
        }
        drop(token_tx);
        io.join().map_err(|_| Error::Invalid("I/O worker panicked".into()))?;
        // unpin whatever was prefetched past the failure
        while let Ok(Ok(handles)) = ready_rx.try_recv() {
            release_all(cache, &handles)?;
        }
        result
    });
    if outcome.is_err() {
        // leave the cache usable for a retry of the caller's choosing
        cache.reset_abort();
    }
    outcome?;
    let t0 = Instant::now();
    report.stats = cache.flush()?.since(&before);
    report.io_wait_seconds += t0.elapsed().as_secs_f64();
    report.wall_seconds = wall.elapsed().as_secs_f64();
    Ok(report)
}
