//! Online cache page allocation across tasks.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::mapper::{CandidateKind, MappingCandidate, MappingCandidateTable};
use crate::{Cycle, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchedulerMode {
    #[serde(rename = "camdn-full")]
    CamdnFull,
    #[serde(rename = "camdn-hw-only")]
    CamdnHwOnly,
    #[serde(rename = "transparent-baseline")]
    Transparent,
}

impl SchedulerMode {
    pub const ALL: [SchedulerMode; 3] = [SchedulerMode::CamdnFull, SchedulerMode::CamdnHwOnly, SchedulerMode::Transparent];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerMode::CamdnFull => "camdn-full",
            SchedulerMode::CamdnHwOnly => "camdn-hw-only",
            SchedulerMode::Transparent => "transparent-baseline",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s || (s == "transparent" && *m == SchedulerMode::Transparent))
    }
}

/// Which entry of a layer's table is selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    Lbm,
    Lwm(usize),
}

impl Choice {
    pub fn resolve<'a>(&self, mct: &'a MappingCandidateTable) -> &'a MappingCandidate {
        match self {
            Choice::Lbm => &mct.lbm,
            Choice::Lwm(i) => &mct.lwms[*i],
        }
    }

    pub fn kind(&self) -> CandidateKind {
        match self {
            Choice::Lbm => CandidateKind::Lbm,
            Choice::Lwm(_) => CandidateKind::Lwm,
        }
    }
}

/// Per-task prediction tables plus the idle page count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeAllocationTables {
    pub t_next: Vec<Cycle>,
    pub p_next: Vec<u64>,
    pub p_alloc: Vec<u64>,
    pub running: Vec<bool>,
    pub idle_pages: u64,
    pub total_pages: u64,
}

impl RuntimeAllocationTables {
    pub fn new(tasks: usize, total_pages: u64) -> Self {
        Self {
            t_next: vec![0; tasks],
            p_next: vec![0; tasks],
            p_alloc: vec![0; tasks],
            running: vec![false; tasks],
            idle_pages: total_pages,
            total_pages,
        }
    }

    pub fn tasks(&self) -> usize {
        self.p_alloc.len()
    }

    /// Idle pages plus what other running tasks are predicted to hand back
    /// before `t_ahead` (negative when they are predicted to grow). `None`
    /// means no time bound.
    pub fn pred_avail_pages(&self, t_ahead: Option<Cycle>, t_cur: usize) -> i64 {
        let mut p = self.idle_pages as i64;
        for t in 0..self.tasks() {
            if !self.running[t] || t == t_cur {
                continue;
            }
            if t_ahead.map_or(true, |ta| self.t_next[t] < ta) {
                p += self.p_alloc[t] as i64 - self.p_next[t] as i64;
            }
        }
        p
    }

    pub fn conserved(&self) -> bool {
        self.p_alloc.iter().sum::<u64>() + self.idle_pages == self.total_pages
    }
}

/// What the current task knows about its position in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskView {
    pub lbm_enabled: bool,
    pub is_block_head: bool,
    pub block_t_est: u64,
    pub layer_t_est: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub choice: Choice,
    pub p_cur: u64,
    /// `None` is an unbounded wait.
    pub t_ahead: Option<Cycle>,
    /// The prediction used, absent when LBM was already enabled.
    pub p_ahead: Option<i64>,
}

/// `now + ceil(t_est * factor)`. Products within rounding error of an
/// integer count as that integer, so `35 * 0.2` gives 7 and not 8.
pub fn timeout_threshold(now: Cycle, t_est: u64, factor: f64) -> Cycle {
    let x = t_est as f64 * factor;
    let near = libm::round(x);
    let wait = if libm::fabs(x - near) <= 1e-9 * near.max(1.0) { near } else { libm::ceil(x) };
    now + wait as u64
}

/// Predicts near-future availability and picks the candidate for the
/// current layer of `t_cur`.
pub fn select_candidate(
    tables: &RuntimeAllocationTables,
    t_cur: usize,
    view: &TaskView,
    mct: &MappingCandidateTable,
    now: Cycle,
    timeout_factor: f64,
) -> SelectionResult {
    if view.lbm_enabled {
        return SelectionResult { choice: Choice::Lbm, p_cur: mct.lbm.p_need, t_ahead: None, p_ahead: None };
    }
    if view.is_block_head {
        let t_ahead = timeout_threshold(now, view.block_t_est, timeout_factor);
        let p_ahead = tables.pred_avail_pages(Some(t_ahead), t_cur);
        if (mct.lbm.p_need as i64) < p_ahead {
            return SelectionResult { choice: Choice::Lbm, p_cur: mct.lbm.p_need, t_ahead: Some(t_ahead), p_ahead: Some(p_ahead) };
        }
    }
    let t_ahead = timeout_threshold(now, view.layer_t_est, timeout_factor);
    let p_ahead = tables.pred_avail_pages(Some(t_ahead), t_cur);
    let mut cur = 0;
    for (i, m) in mct.lwms.iter().enumerate() {
        if mct.lwms[cur].p_need < m.p_need && m.p_need as i64 <= p_ahead {
            cur = i;
        }
    }
    SelectionResult { choice: Choice::Lwm(cur), p_cur: mct.lwms[cur].p_need, t_ahead: Some(t_ahead), p_ahead: Some(p_ahead) }
}

/// The candidate tried after a timeout: the largest LWM needing strictly
/// fewer pages than `current` that fits the prediction `p_ahead`, else the
/// smallest LWM. `None` when nothing needs fewer pages.
pub fn downgrade(mct: &MappingCandidateTable, current: Choice, p_ahead: i64) -> Option<Choice> {
    let need = current.resolve(mct).p_need;
    if mct.lwms[0].p_need >= need {
        return None;
    }
    let fit = mct.lwms.iter().rposition(|c| c.p_need < need && c.p_need as i64 <= p_ahead);
    Some(Choice::Lwm(fit.unwrap_or(0)))
}

/// Equal static share per task, remainder left idle.
pub fn hw_only_allocate(num_tasks: usize, total_pages: u64) -> u64 {
    if num_tasks == 0 {
        0
    } else {
        total_pages / num_tasks as u64
    }
}

/// Candidate used under a fixed share of `share` pages.
pub fn hw_only_select(mct: &MappingCandidateTable, view: &TaskView, share: u64, lbm_allowed: bool) -> Choice {
    if view.lbm_enabled || (lbm_allowed && view.is_block_head && mct.lbm.p_need <= share) {
        return Choice::Lbm;
    }
    mct.lwms.iter().rposition(|c| c.p_need <= share).map_or(Choice::Lwm(0), Choice::Lwm)
}

/// Free-page pool over the NPU subspace. Pages are handed out lowest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageAllocator {
    first: u64,
    free: BTreeSet<u64>,
    owner: Vec<Option<usize>>,
}

impl PageAllocator {
    pub fn new(first_pcpn: u64, pages: u64) -> Self {
        Self { first: first_pcpn, free: (first_pcpn..first_pcpn + pages).collect(), owner: vec![None; pages as usize] }
    }

    pub fn idle(&self) -> u64 {
        self.free.len() as u64
    }

    pub fn owner(&self, pcpn: u64) -> Option<usize> {
        pcpn.checked_sub(self.first).and_then(|i| self.owner.get(i as usize).copied().flatten())
    }

    pub fn allocate(&mut self, task: usize, n: u64) -> Option<Vec<u64>> {
        if n > self.idle() {
            return None;
        }
        let pages: Vec<u64> = self.free.iter().take(n as usize).copied().collect();
        for p in &pages {
            self.free.remove(p);
            self.owner[(p - self.first) as usize] = Some(task);
        }
        Some(pages)
    }

    pub fn release(&mut self, task: usize, pages: &[u64], now: Cycle) -> Result<()> {
        for &p in pages {
            let slot = &mut self.owner[(p - self.first) as usize];
            if *slot != Some(task) {
                return Err(Error::Invariant { cycle: now, what: format!("task {task} releases page {p} owned by {slot:?}") });
            }
            *slot = None;
            self.free.insert(p);
        }
        Ok(())
    }

    pub fn owned_count(&self, task: usize) -> u64 {
        self.owner.iter().filter(|o| **o == Some(task)).count() as u64
    }
}

/// A task waiting for pages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Waiter {
    pub task: usize,
    pub choice: Choice,
    pub p_cur: u64,
    pub deadline: Option<Cycle>,
    /// Bumped on every downgrade so stale timeout events can be ignored.
    pub epoch: u64,
    pub downgrades: u32,
    pub p_ahead: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub cycle: Cycle,
    pub task: usize,
    pub layer: usize,
    pub kind: CandidateKind,
    pub p_need: u64,
    pub p_ahead: Option<i64>,
    pub downgrades: u32,
}

/// Tables, allocator and wait queue of the dynamic scheme.
#[derive(Debug, Clone)]
pub struct Scheduler {
    pub tables: RuntimeAllocationTables,
    pub pages: PageAllocator,
    pub held: Vec<Vec<u64>>,
    pub waiters: VecDeque<Waiter>,
    pub timeout_factor: f64,
    /// Whether a downgraded request waits a fresh timeout or keeps the
    /// deadline of the first one.
    pub restart_wait: bool,
}

/// Result of asking for pages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Granted { choice: Choice, pages: Vec<u64>, downgrades: u32, p_ahead: Option<i64> },
    Waiting { deadline: Option<Cycle>, epoch: u64 },
}

impl Scheduler {
    pub fn new(tasks: usize, first_pcpn: u64, pages: u64, timeout_factor: f64) -> Self {
        Self {
            tables: RuntimeAllocationTables::new(tasks, pages),
            pages: PageAllocator::new(first_pcpn, pages),
            held: vec![Vec::new(); tasks],
            waiters: VecDeque::new(),
            timeout_factor,
            restart_wait: true,
        }
    }

    /// Moves `n` idle pages to `task`, lowest page numbers first.
    pub fn allocate(&mut self, task: usize, n: u64) -> Option<Vec<u64>> {
        let pages = self.pages.allocate(task, n)?;
        self.tables.idle_pages -= n;
        self.tables.p_alloc[task] += n;
        self.held[task].extend_from_slice(&pages);
        Some(pages)
    }

    pub fn is_waiting(&self, task: usize) -> bool {
        self.waiters.iter().any(|w| w.task == task)
    }

    /// Tries to grant `sel` to `task`; parks it in the queue otherwise.
    pub fn request(&mut self, task: usize, sel: SelectionResult) -> Request {
        if let Some(pages) = self.allocate(task, sel.p_cur) {
            return Request::Granted { choice: sel.choice, pages, downgrades: 0, p_ahead: sel.p_ahead };
        }
        let epoch = 0;
        self.waiters.push_back(Waiter {
            task,
            choice: sel.choice,
            p_cur: sel.p_cur,
            deadline: sel.t_ahead,
            epoch,
            downgrades: 0,
            p_ahead: sel.p_ahead,
        });
        Request::Waiting { deadline: sel.t_ahead, epoch }
    }

    /// Serves waiters in arrival order, granting every one that fits.
    pub fn serve_waiters(&mut self) -> Vec<(usize, Request)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.waiters.len() {
            if self.waiters[i].p_cur <= self.tables.idle_pages {
                let w = self.waiters.remove(i).unwrap();
                let pages = self.allocate(w.task, w.p_cur).expect("idle pages checked");
                out.push((w.task, Request::Granted { choice: w.choice, pages, downgrades: w.downgrades, p_ahead: w.p_ahead }));
            } else {
                i += 1;
            }
        }
        out
    }

    /// Timeout of `task`'s wait at `epoch`: downgrade and retry. Stale
    /// timeouts return `None`.
    pub fn on_timeout(&mut self, task: usize, epoch: u64, mct: &MappingCandidateTable, layer_t_est: u64, now: Cycle) -> Option<Request> {
        let pos = self.waiters.iter().position(|w| w.task == task && w.epoch == epoch)?;
        let mut w = self.waiters.remove(pos).unwrap();
        let deadline = if self.restart_wait { timeout_threshold(now, layer_t_est, self.timeout_factor) } else { now };
        let p_ahead = self.tables.pred_avail_pages(Some(deadline), task);
        let next = downgrade(mct, w.choice, p_ahead).expect("a waiting candidate needs pages, so a smaller one exists");
        w.choice = next;
        w.p_cur = next.resolve(mct).p_need;
        w.downgrades += 1;
        w.epoch += 1;
        if let Some(pages) = self.allocate(task, w.p_cur) {
            return Some(Request::Granted { choice: w.choice, pages, downgrades: w.downgrades, p_ahead: w.p_ahead });
        }
        w.deadline = Some(deadline);
        let r = Request::Waiting { deadline: w.deadline, epoch: w.epoch };
        self.waiters.insert(pos, w);
        Some(r)
    }

    /// Returns every page held by `task` to the pool.
    pub fn release_all(&mut self, task: usize, now: Cycle) -> Result<Vec<u64>> {
        let pages = core::mem::take(&mut self.held[task]);
        self.pages.release(task, &pages, now)?;
        self.tables.idle_pages += pages.len() as u64;
        self.tables.p_alloc[task] -= pages.len() as u64;
        Ok(pages)
    }

    pub fn check(&self, now: Cycle) -> Result<()> {
        if !self.tables.conserved() || self.tables.idle_pages != self.pages.idle() {
            return Err(Error::Invariant { cycle: now, what: format!("page conservation broken: {:?}", self.tables) });
        }
        Ok(())
    }
}
