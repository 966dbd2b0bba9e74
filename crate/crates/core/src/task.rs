//! Tasks of the algorithm-by-blocks formulation.
//!
//! A task is one kernel call over a few tile views. Views name a tile and a
//! rectangular sub-range of it, which is how the builders express partial
//! panels (the first `b` columns of a tile, the trailing columns of a
//! diagonal tile) without changing the storage granularity.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write as _};
use core::ops::Range;

use crate::error::{shape, KernelError};
use crate::kernels::{self, Side};
use crate::layout::{BlockId, Dims, Layout, StoreRole};
use crate::mat::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Access {
    Read,
    ReadWrite,
    /// The task overwrites the whole view and never reads it. Only valid on
    /// views covering a full tile, otherwise the rest of the tile is lost.
    WriteOnly,
}

impl Access {
    pub fn code(self) -> &'static str {
        match self {
            Access::Read => "r",
            Access::ReadWrite => "rw",
            Access::WriteOnly => "wo",
        }
    }

    pub fn from_code(s: &str) -> Option<Access> {
        match s {
            "r" => Some(Access::Read),
            "rw" => Some(Access::ReadWrite),
            "wo" => Some(Access::WriteOnly),
            _ => None,
        }
    }

    pub fn writes(self) -> bool {
        self != Access::Read
    }

    fn merge(self, other: Access) -> Access {
        if self == other {
            self
        } else {
            Access::ReadWrite
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct View {
    pub block: BlockId,
    pub rows: Range<usize>,
    pub cols: Range<usize>,
    pub access: Access,
}

impl View {
    pub fn new(block: BlockId, rows: Range<usize>, cols: Range<usize>, access: Access) -> Self {
        View { block, rows, cols, access }
    }

    /// The whole tile `(i, j)` of `layout`.
    pub fn full(layout: &Layout, block: BlockId, access: Access) -> Self {
        let (r, c) = layout.tile_shape(block.i, block.j);
        View::new(block, 0..r, 0..c, access)
    }

    /// An output view: write-only when it covers the whole tile, read-write
    /// otherwise.
    pub fn output(layout: &Layout, block: BlockId, rows: Range<usize>, cols: Range<usize>) -> Self {
        let (r, c) = layout.tile_shape(block.i, block.j);
        let access = if rows == (0..r) && cols == (0..c) { Access::WriteOnly } else { Access::ReadWrite };
        View::new(block, rows, cols, access)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}[{}..{},{}..{}]:{}",
            self.block,
            self.rows.start,
            self.rows.end,
            self.cols.start,
            self.cols.end,
            self.access.code()
        )
    }
}

/// Task kinds, named after the rows of the operation-count tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskKind {
    Normal,
    GemmTn,
    CompDe,
    CompTd,
    ApplRDe,
    ApplRTd,
    ApplLDe,
    ApplLTd,
    KeepUpp,
    Svd,
    GemmAabt,
    GemmAbta,
    GemmAab,
    Zero,
    CompRz,
    ApplRRz,
    Trsm,
    GemmNn,
}

impl TaskKind {
    pub const ALL: [TaskKind; 18] = [
        TaskKind::Normal,
        TaskKind::GemmTn,
        TaskKind::CompDe,
        TaskKind::CompTd,
        TaskKind::ApplRDe,
        TaskKind::ApplRTd,
        TaskKind::ApplLDe,
        TaskKind::ApplLTd,
        TaskKind::KeepUpp,
        TaskKind::Svd,
        TaskKind::GemmAabt,
        TaskKind::GemmAbta,
        TaskKind::GemmAab,
        TaskKind::Zero,
        TaskKind::CompRz,
        TaskKind::ApplRRz,
        TaskKind::Trsm,
        TaskKind::GemmNn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Normal => "Normal",
            TaskKind::GemmTn => "Gemm_tn",
            TaskKind::CompDe => "Comp_De",
            TaskKind::CompTd => "Comp_TD",
            TaskKind::ApplRDe => "Appl_r_De",
            TaskKind::ApplRTd => "Appl_r_TD",
            TaskKind::ApplLDe => "Appl_l_De",
            TaskKind::ApplLTd => "Appl_l_TD",
            TaskKind::KeepUpp => "Keep_upp",
            TaskKind::Svd => "Svd",
            TaskKind::GemmAabt => "Gemm_aabt",
            TaskKind::GemmAbta => "Gemm_abta",
            TaskKind::GemmAab => "Gemm_aab",
            TaskKind::Zero => "Zero",
            TaskKind::CompRz => "Comp_RZ",
            TaskKind::ApplRRz => "Appl_r_RZ",
            TaskKind::Trsm => "Trsm_lunn",
            TaskKind::GemmNn => "Gemm_nn",
        }
    }

    pub fn from_name(s: &str) -> Option<TaskKind> {
        TaskKind::ALL.iter().copied().find(|k| k.name() == s)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A kernel with its scalar parameters. Operand order is fixed per variant
/// (inputs first, outputs last) and documented on each.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    /// `[G]`: fill with standard normals from `(seed, stream)`.
    Normal { seed: u64, stream: u64 },
    /// `[A, B, C]`: `C := beta·C + alpha·Aᵀ·B`.
    GemmTn { alpha: f64, beta: f64 },
    /// `[A, B, C]`: `C := beta·C + alpha·A·B`.
    GemmNn { alpha: f64, beta: f64 },
    /// `[panel, Tf]`: Householder QR of the panel.
    CompDe,
    /// `[R, D, Tf]`: QR of a triangle on a dense block.
    CompTd,
    /// `[W, Tf, C]`
    ApplDe { side: Side },
    /// `[D, Tf, top, bottom]`
    ApplTd { side: Side },
    /// `[C]`
    KeepUpp,
    /// `[A11, U_s, V_sᵀ]`: `A11` is replaced by `diag(sigma)`.
    Svd,
    /// `[B, C]`: `C := C·Bᵀ`.
    GemmAabt,
    /// `[B, C]`: `C := Bᵀ·C`.
    GemmAbta,
    /// `[B, C]`: `C := C·B`.
    GemmAab,
    /// `[C]`
    Zero,
    /// `[C11, D, Tf]`
    CompRz,
    /// `[Z, Tf, E, F]`
    ApplRRz { transpose: bool },
    /// `[T, B]`: `B := T⁻¹·B`.
    Trsm,
}

impl Kernel {
    pub fn kind(&self) -> TaskKind {
        match self {
            Kernel::Normal { .. } => TaskKind::Normal,
            Kernel::GemmTn { .. } => TaskKind::GemmTn,
            Kernel::GemmNn { .. } => TaskKind::GemmNn,
            Kernel::CompDe => TaskKind::CompDe,
            Kernel::CompTd => TaskKind::CompTd,
            Kernel::ApplDe { side: Side::Left | Side::LeftTrans } => TaskKind::ApplLDe,
            Kernel::ApplDe { .. } => TaskKind::ApplRDe,
            Kernel::ApplTd { side: Side::Left | Side::LeftTrans } => TaskKind::ApplLTd,
            Kernel::ApplTd { .. } => TaskKind::ApplRTd,
            Kernel::KeepUpp => TaskKind::KeepUpp,
            Kernel::Svd => TaskKind::Svd,
            Kernel::GemmAabt => TaskKind::GemmAabt,
            Kernel::GemmAbta => TaskKind::GemmAbta,
            Kernel::GemmAab => TaskKind::GemmAab,
            Kernel::Zero => TaskKind::Zero,
            Kernel::CompRz => TaskKind::CompRz,
            Kernel::ApplRRz { .. } => TaskKind::ApplRRz,
            Kernel::Trsm => TaskKind::Trsm,
        }
    }

    pub fn operand_count(&self) -> usize {
        match self {
            Kernel::Normal { .. } | Kernel::KeepUpp | Kernel::Zero => 1,
            Kernel::CompDe | Kernel::GemmAabt | Kernel::GemmAbta | Kernel::GemmAab | Kernel::Trsm => 2,
            Kernel::GemmTn { .. } | Kernel::GemmNn { .. } | Kernel::CompTd | Kernel::ApplDe { .. } => 3,
            Kernel::Svd | Kernel::CompRz => 3,
            Kernel::ApplTd { .. } | Kernel::ApplRRz { .. } => 4,
        }
    }

    /// Runs the kernel on operand copies laid out as documented on each
    /// variant. Output operands keep their shapes.
    pub fn run(&self, ops: &mut [Mat]) -> Result<(), KernelError> {
        let expected = self.operand_count();
        if ops.len() != expected {
            return Err(KernelError::Operands { expected, got: ops.len() });
        }
        match *self {
            Kernel::Normal { seed, stream } => {
                let (r, c) = ops[0].shape();
                ops[0] = kernels::gauss_tile(r, c, seed, stream);
            }
            Kernel::GemmTn { alpha, beta } => {
                let (ab, c) = ops.split_at_mut(2);
                kernels::gemm_tn(alpha, &ab[0], &ab[1], beta, &mut c[0])?;
            }
            Kernel::GemmNn { alpha, beta } => {
                let (ab, c) = ops.split_at_mut(2);
                kernels::gemm_nn(alpha, &ab[0], &ab[1], beta, &mut c[0])?;
            }
            Kernel::CompDe => {
                let tf = kernels::qr_dense(&mut ops[0])?;
                put(&mut ops[1], tf, "Comp_De")?;
            }
            Kernel::CompTd => {
                let (rd, t) = ops.split_at_mut(2);
                let (r, d) = rd.split_at_mut(1);
                let tf = kernels::qr_triangular_dense(&mut r[0], &mut d[0])?;
                put(&mut t[0], tf, "Comp_TD")?;
            }
            Kernel::ApplDe { side } => {
                let (wt, c) = ops.split_at_mut(2);
                kernels::apply_q_dense(&wt[0], &wt[1], side, &mut c[0])?;
            }
            Kernel::ApplTd { side } => {
                let (dt, tb) = ops.split_at_mut(2);
                let (top, bot) = tb.split_at_mut(1);
                kernels::apply_q_td(&dt[0], &dt[1], side, &mut top[0], &mut bot[0])?;
            }
            Kernel::KeepUpp => kernels::keep_upper(&mut ops[0]),
            Kernel::Svd => {
                let f = kernels::svd_dense(&ops[0])?;
                put(&mut ops[0], Mat::diag(&f.sigma), "Svd")?;
                put(&mut ops[1], f.u, "Svd")?;
                put(&mut ops[2], f.v.transpose(), "Svd")?;
            }
            Kernel::GemmAabt => {
                let (b, c) = ops.split_at_mut(1);
                kernels::gemm_aabt(&mut c[0], &b[0])?;
            }
            Kernel::GemmAbta => {
                let (b, c) = ops.split_at_mut(1);
                kernels::gemm_abta(&mut c[0], &b[0])?;
            }
            Kernel::GemmAab => {
                let (b, c) = ops.split_at_mut(1);
                kernels::gemm_aab(&mut c[0], &b[0])?;
            }
            Kernel::Zero => ops[0].fill(0.0),
            Kernel::CompRz => {
                let (cd, t) = ops.split_at_mut(2);
                let (c, d) = cd.split_at_mut(1);
                let tf = kernels::rz_nullify(&mut c[0], &mut d[0])?;
                put(&mut t[0], tf, "Comp_RZ")?;
            }
            Kernel::ApplRRz { transpose } => {
                let (zt, ef) = ops.split_at_mut(2);
                let (e, f) = ef.split_at_mut(1);
                kernels::apply_rz_right(&zt[0], &zt[1], &mut e[0], &mut f[0], transpose)?;
            }
            Kernel::Trsm => {
                let (t, b) = ops.split_at_mut(1);
                kernels::trsm_upper(&t[0], &mut b[0])?;
            }
        }
        Ok(())
    }
}

fn put(slot: &mut Mat, value: Mat, op: &'static str) -> Result<(), KernelError> {
    if slot.shape() != value.shape() {
        return Err(shape(op, "output view does not match the kernel result"));
    }
    *slot = value;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub kernel: Kernel,
    pub views: Vec<View>,
    /// Outer-loop index of the algorithm that emitted the task.
    pub step: usize,
}

impl Task {
    pub fn new(kernel: Kernel, views: Vec<View>, step: usize) -> Self {
        debug_assert_eq!(kernel.operand_count(), views.len(), "{:?}", kernel);
        Task { kernel, views, step }
    }

    pub fn kind(&self) -> TaskKind {
        self.kernel.kind()
    }

    /// Distinct tiles touched, in first-appearance order, with the merged
    /// access mode: all-read stays read, all-write-only stays write-only,
    /// anything else becomes read-write.
    pub fn blocks(&self) -> Vec<(BlockId, Access)> {
        let mut out: Vec<(BlockId, Access)> = Vec::with_capacity(self.views.len());
        for v in &self.views {
            match out.iter_mut().find(|(b, _)| *b == v.block) {
                Some((_, acc)) => *acc = acc.merge(v.access),
                None => out.push((v.block, v.access)),
            }
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TaskList {
    tasks: Vec<Task>,
}

impl TaskList {
    pub fn new() -> Self {
        TaskList::default()
    }

    pub fn push(&mut self, task: Task) {
        self.tasks.push(task);
    }

    pub fn append(&mut self, other: TaskList) {
        self.tasks.extend(other.tasks);
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Task> {
        self.tasks.iter()
    }

    pub fn counts(&self) -> BTreeMap<TaskKind, usize> {
        let mut m = BTreeMap::new();
        for t in &self.tasks {
            *m.entry(t.kind()).or_insert(0) += 1;
        }
        m
    }

    pub fn count(&self, kind: TaskKind) -> usize {
        self.tasks.iter().filter(|t| t.kind() == kind).count()
    }

    /// One line per task: `<index> <kind> <view>...`, with views written as
    /// `A(2,3)[0..64,0..32]:rw`.
    pub fn trace(&self) -> String {
        let mut s = String::new();
        for (idx, t) in self.tasks.iter().enumerate() {
            let _ = write!(s, "{} {}", idx, t.kind().name());
            for v in &t.views {
                let _ = write!(s, " {}", v);
            }
            s.push('\n');
        }
        s
    }
}

impl<'a> IntoIterator for &'a TaskList {
    type Item = &'a Task;
    type IntoIter = core::slice::Iter<'a, Task>;
    fn into_iter(self) -> Self::IntoIter {
        self.tasks.iter()
    }
}

/// Dense in-memory matrices, one per role, on which a task list can be run
/// directly. Views are resolved to global coordinates through the tile size.
/// This is the reference semantics every executor must reproduce.
#[derive(Clone, Debug, Default)]
pub struct DenseStores {
    nb: usize,
    mats: BTreeMap<StoreRole, Mat>,
}

impl DenseStores {
    pub fn new(nb: usize) -> Self {
        DenseStores { nb, mats: BTreeMap::new() }
    }

    /// Allocates zeroed matrices for every role of `dims` (skipping `B` and
    /// `X` when `k = 0`).
    pub fn for_dims(dims: &Dims) -> Self {
        let mut s = DenseStores::new(dims.nb);
        for role in StoreRole::ALL {
            if dims.k == 0 && matches!(role, StoreRole::B | StoreRole::X) {
                continue;
            }
            let l = dims.layout(role);
            s.insert(role, Mat::zeros(l.rows, l.cols));
        }
        s
    }

    pub fn insert(&mut self, role: StoreRole, m: Mat) {
        self.mats.insert(role, m);
    }

    pub fn get(&self, role: StoreRole) -> Option<&Mat> {
        self.mats.get(&role)
    }

    pub fn get_mut(&mut self, role: StoreRole) -> Option<&mut Mat> {
        self.mats.get_mut(&role)
    }

    pub fn take(&mut self, role: StoreRole) -> Option<Mat> {
        self.mats.remove(&role)
    }

    fn global(&self, v: &View) -> (Range<usize>, Range<usize>) {
        let r0 = v.block.i * self.nb;
        let c0 = v.block.j * self.nb;
        (r0 + v.rows.start..r0 + v.rows.end, c0 + v.cols.start..c0 + v.cols.end)
    }

    /// Runs one task. Write-only views start out zeroed.
    pub fn run_task(&mut self, task: &Task) -> Result<(), KernelError> {
        let mut ops = Vec::with_capacity(task.views.len());
        for v in &task.views {
            let m = self.mats.get(&v.block.role).ok_or(shape("run_task", "missing store for operand"))?;
            let (rows, cols) = self.global(v);
            if rows.end > m.rows() || cols.end > m.cols() {
                return Err(shape("run_task", "view outside its store"));
            }
            ops.push(match v.access {
                Access::WriteOnly => Mat::zeros(rows.len(), cols.len()),
                _ => m.sub(rows, cols),
            });
        }
        task.kernel.run(&mut ops)?;
        for (v, op) in task.views.iter().zip(ops) {
            if v.access.writes() {
                let (rows, cols) = self.global(v);
                let m = self.mats.get_mut(&v.block.role).expect("checked above");
                m.set_sub(rows.start, cols.start, &op);
            }
        }
        Ok(())
    }

    /// Runs a whole list, reporting the index of the first failing task.
    pub fn run(&mut self, tasks: &TaskList) -> Result<(), (usize, KernelError)> {
        for (idx, t) in tasks.iter().enumerate() {
            self.run_task(t).map_err(|e| (idx, e))?;
        }
        Ok(())
    }
}
