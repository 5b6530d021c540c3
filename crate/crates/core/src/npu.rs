//! NPU core timing: walks a candidate's tile loop nest and turns it into
//! cache/DRAM requests and compute intervals, double-buffering operand loads.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cachemem::{CacheMem, CacheMode, NecKind, NecOutcome, NecRequest};
use crate::mapper::{tile_extent, CandidateKind, Dim, MappingCandidate, TensorRole, TileStep};
use crate::workload::LayerSpec;
use crate::{Cycle, Error, HardwareConfig, Result};

/// DRAM placement of one layer's tensors and which of them are activations
/// passed between layers (counted separately as intermediate traffic).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MemoryPlan {
    pub input: u64,
    pub weights: u64,
    pub output: u64,
    pub input_intermediate: bool,
    pub output_intermediate: bool,
}

impl MemoryPlan {
    fn base(&self, role: TensorRole) -> u64 {
        match role {
            TensorRole::Input => self.input,
            TensorRole::Weights => self.weights,
            TensorRole::Output => self.output,
        }
    }

    fn intermediate(&self, role: TensorRole) -> bool {
        match role {
            TensorRole::Input => self.input_intermediate,
            TensorRole::Weights => false,
            TensorRole::Output => self.output_intermediate,
        }
    }
}

/// Cores executing one task. Groups larger than one run the same inference in
/// lockstep: reads are multicast, the leader alone writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreGroup {
    pub leader: usize,
    pub size: u32,
}

impl CoreGroup {
    pub fn single(npu: usize) -> Self {
        Self { leader: npu, size: 1 }
    }

    pub fn members(&self) -> core::ops::Range<usize> {
        self.leader..self.leader + self.size as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerExecution {
    pub task: usize,
    pub layer: usize,
    pub kind: CandidateKind,
    pub p_need: u64,
    pub start: Cycle,
    pub end: Cycle,
    pub dram_read: u64,
    pub dram_write: u64,
    pub intermediate_dram: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub compute_cycles: u64,
}

impl LayerExecution {
    pub fn dram_bytes(&self) -> u64 {
        self.dram_read + self.dram_write
    }

    pub fn latency(&self) -> Cycle {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NpuCore {
    pub id: usize,
    pub busy_until: Cycle,
    profile: BTreeMap<(usize, usize), u64>,
}

impl NpuCore {
    pub fn new(id: usize) -> Self {
        Self { id, busy_until: 0, profile: BTreeMap::new() }
    }

    /// Estimated latency of `(model, layer)`: the running average of observed
    /// latencies, or `analytic` before the first observation.
    pub fn t_est(&self, model: usize, layer: usize, analytic: u64) -> u64 {
        self.profile.get(&(model, layer)).copied().unwrap_or(analytic)
    }

    /// Blends an observation into the estimate with weight one half.
    pub fn record_profile(&mut self, model: usize, layer: usize, latency: u64, analytic: u64) -> u64 {
        let prev = self.t_est(model, layer, analytic);
        let next = (prev + latency) / 2;
        self.profile.insert((model, layer), next);
        next
    }
}

/// Where the next request of a tile goes.
#[derive(Debug, Clone, Copy)]
struct Transfer {
    role: TensorRole,
    bytes: u64,
    vc: u64,
    dram: u64,
}

/// Fetch bookkeeping for a cached operand: which tiles of the current reuse
/// window are already in the cache.
#[derive(Debug, Clone)]
struct Window {
    key: Option<u64>,
    fetched: Vec<bool>,
}

/// Next thing the engine must do for a running layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    ComputeStart(Cycle),
    TileDone(Cycle),
    Finished(Cycle),
}

#[derive(Debug, Clone)]
pub struct LayerRun {
    layer: LayerSpec,
    cand: MappingCandidate,
    plan: MemoryPlan,
    group: CoreGroup,
    pe_dim: u64,
    steps: Vec<TileStep>,
    next: usize,
    loads_done: Cycle,
    writes_done: Cycle,
    compute_end: Cycle,
    windows: [Window; 3],
    out_visits: Vec<u32>,
    out_reload: u32,
    depth: [usize; 3],
    exec: LayerExecution,
}

impl LayerRun {
    /// Prepares `cand` for `layer` and issues the loads of the first tile.
    pub fn start(
        hw: &HardwareConfig,
        task: usize,
        layer: &LayerSpec,
        cand: &MappingCandidate,
        plan: MemoryPlan,
        group: CoreGroup,
        now: Cycle,
        cache: &mut CacheMem,
    ) -> Result<(Self, Progress)> {
        if cand.scratch_bytes > hw.scratchpad_bytes {
            return Err(Error::ScratchpadOverflow { needed: cand.scratch_bytes, capacity: hw.scratchpad_bytes });
        }
        let t = cand.loop_table;
        let windows = TensorRole::ALL.map(|role| {
            let [a, b] = role.deps();
            let inv = t.order.position(role.invariant());
            let count = |d: Dim| if t.order.position(d) < inv { 1 } else { t.trips(layer, d) as usize };
            Window { key: None, fetched: vec![false; count(a) * count(b)] }
        });
        let out_tiles = (t.trips(layer, Dim::M) * t.trips(layer, Dim::N)) as usize;
        let mut run = Self {
            layer: layer.clone(),
            cand: cand.clone(),
            plan,
            group,
            pe_dim: hw.pe_dim,
            steps: t.steps(layer),
            next: 0,
            loads_done: now,
            writes_done: now,
            compute_end: now,
            windows,
            out_visits: vec![0; out_tiles],
            out_reload: t.reload_factor(layer, TensorRole::Output) as u32,
            depth: TensorRole::ALL.map(|r| t.visit_depth(r)),
            exec: LayerExecution {
                task,
                layer: layer.id,
                kind: cand.kind,
                p_need: cand.p_need,
                start: now,
                end: now,
                dram_read: 0,
                dram_write: 0,
                intermediate_dram: 0,
                cache_hits: 0,
                cache_misses: 0,
                compute_cycles: 0,
            },
        };
        run.loads_done = run.issue_loads(0, now, true, cache)?;
        let first = Progress::ComputeStart(run.loads_done);
        Ok((run, first))
    }

    pub fn execution(&self) -> &LayerExecution {
        &self.exec
    }

    pub fn candidate(&self) -> &MappingCandidate {
        &self.cand
    }

    pub fn group(&self) -> CoreGroup {
        self.group
    }

    fn step(&self, i: usize) -> &TileStep {
        &self.steps[i]
    }

    fn prev(&self, i: usize) -> Option<&TileStep> {
        i.checked_sub(1).map(|p| &self.steps[p])
    }

    fn enters(&self, i: usize, role: TensorRole) -> bool {
        self.step(i).enters(self.prev(i), self.depth[role.index()])
    }

    fn leaves_output(&self, i: usize) -> bool {
        i + 1 == self.steps.len() || self.steps[i + 1].enters(Some(&self.steps[i]), self.depth[TensorRole::Output.index()])
    }

    fn out_index(&self, s: &TileStep) -> usize {
        let tn = self.cand.loop_table.trips(&self.layer, Dim::N);
        (s.tile[Dim::M as usize] * tn + s.tile[Dim::N as usize]) as usize
    }

    /// Byte offset of a tile inside a region packing the tensor block by block:
    /// rows of tiles along the first dependency, tiles along the second within
    /// each row. `local` selects reuse-window coordinates instead of the whole
    /// tensor.
    fn offsets(&self, s: &TileStep, role: TensorRole, local: bool) -> (u64, u64, Option<(u64, usize)>) {
        let t = self.cand.loop_table;
        let e = self.layer.elem_bytes;
        let [a, b] = role.deps();
        let inv = t.order.position(role.invariant());
        let (ta, tb) = (t.factors.get(a), t.factors.get(b));
        let (ia, ib) = (s.tile[a as usize], s.tile[b as usize]);
        let ext_a = tile_extent(self.layer.dim(a), ta, ia);
        let ext_b = tile_extent(self.layer.dim(b), tb, ib);
        let bytes = ext_a * ext_b * e;
        let full = (ia * ta * self.layer.dim(b) + ib * tb * ext_a) * e;
        if !local {
            return (bytes, full, None);
        }
        let outer_a = t.order.position(a) < inv;
        let outer_b = t.order.position(b) < inv;
        let (la, lb) = (if outer_a { 0 } else { ia }, if outer_b { 0 } else { ib });
        let extent_b = if outer_b { tb } else { self.layer.dim(b) };
        let off = (la * ta * extent_b + lb * tb * ext_a) * e;
        let key = (if outer_a { ia + 1 } else { 0 }) << 32 | (if outer_b { ib + 1 } else { 0 });
        let tiles_b = if outer_b { 1 } else { t.trips(&self.layer, b) };
        (bytes, off, Some((key, (la * tiles_b + lb) as usize)))
    }

    fn transfer(&self, s: &TileStep, role: TensorRole) -> (Transfer, Option<(u64, usize)>) {
        let map = self.cand.cmap.get(role);
        let (bytes, full, _) = self.offsets(s, role, false);
        let dram = self.plan.base(role) + full;
        if map.intermediate {
            return (Transfer { role, bytes, vc: map.vc_base + full, dram }, None);
        }
        if map.is_cached() {
            let (_, off, win) = self.offsets(s, role, true);
            return (Transfer { role, bytes, vc: map.vc_base + off, dram }, win);
        }
        (Transfer { role, bytes, vc: 0, dram }, None)
    }

    fn issue(&mut self, kind: NecKind, x: Transfer, now: Cycle, cache: &mut CacheMem) -> Result<Cycle> {
        let flag = self.plan.intermediate(x.role) && !self.cand.cmap.get(x.role).intermediate;
        let out: NecOutcome = if cache.mode() == CacheMode::Transparent {
            let write = matches!(kind, NecKind::Write | NecKind::BypassWrite | NecKind::Writeback);
            cache.transparent_access(self.group.leader, x.dram, x.bytes, write, flag, now)?
        } else {
            let multicast = self.group.size > 1;
            let kind = match kind {
                NecKind::Read if multicast => NecKind::MulticastRead,
                NecKind::BypassRead if multicast => NecKind::MulticastBypassRead,
                k => k,
            };
            let address = if kind.is_bypass() { x.dram } else { x.vc };
            let req = NecRequest::new(kind, self.group.leader, address, x.bytes)
                .with_mem(x.dram)
                .with_receivers(self.group.size)
                .intermediate(flag);
            cache.execute(&req, now)?
        };
        self.exec.dram_read += out.dram_read;
        self.exec.dram_write += out.dram_write;
        self.exec.intermediate_dram += out.intermediate_dram;
        self.exec.cache_hits += out.hit_lines;
        self.exec.cache_misses += out.miss_lines;
        Ok(out.done)
    }

    /// Loads of input, weights and (for revisits) partial sums for tile `i`.
    /// Partial sums are left for later when `with_output` is false.
    fn issue_loads(&mut self, i: usize, now: Cycle, with_output: bool, cache: &mut CacheMem) -> Result<Cycle> {
        let mut done = now;
        let s = *self.step(i);
        for role in [TensorRole::Input, TensorRole::Weights] {
            if !self.enters(i, role) {
                continue;
            }
            let map = *self.cand.cmap.get(role);
            let (x, win) = self.transfer(&s, role);
            let kind = if map.intermediate {
                NecKind::Read
            } else if let Some((key, slot)) = win {
                let w = &mut self.windows[role.index()];
                if w.key != Some(key) {
                    w.key = Some(key);
                    w.fetched.iter_mut().for_each(|f| *f = false);
                }
                if core::mem::replace(&mut w.fetched[slot], true) {
                    NecKind::Read
                } else {
                    NecKind::Fetch
                }
            } else {
                NecKind::BypassRead
            };
            done = done.max(self.issue(kind, x, now, cache)?);
        }
        if with_output {
            done = done.max(self.issue_output_read(i, now, cache)?);
        }
        Ok(done)
    }

    fn issue_output_read(&mut self, i: usize, now: Cycle, cache: &mut CacheMem) -> Result<Cycle> {
        let s = *self.step(i);
        if !self.enters(i, TensorRole::Output) {
            return Ok(now);
        }
        let idx = self.out_index(&s);
        if self.out_visits[idx] == 0 {
            return Ok(now);
        }
        let map = *self.cand.cmap.get(TensorRole::Output);
        let (x, _) = self.transfer(&s, TensorRole::Output);
        let kind = if map.intermediate || map.is_cached() { NecKind::Read } else { NecKind::BypassRead };
        self.issue(kind, x, now, cache)
    }

    fn same_output_tile(&self, i: usize, j: usize) -> bool {
        let (a, b) = (&self.steps[i].tile, &self.steps[j].tile);
        a[Dim::M as usize] == b[Dim::M as usize] && a[Dim::N as usize] == b[Dim::N as usize]
    }

    /// Starts computing tile `next` and prefetches the following tile.
    pub fn compute_start(&mut self, now: Cycle, cache: &mut CacheMem) -> Result<Progress> {
        let i = self.next;
        let s = *self.step(i);
        let t = self.cand.loop_table.factors;
        let ext = |d: Dim, tile: u64| tile_extent(self.layer.dim(d), tile, s.tile[d as usize]);
        let cycles = ext(Dim::M, t.tm).div_ceil(self.pe_dim) * ext(Dim::N, t.tn).div_ceil(self.pe_dim) * ext(Dim::K, t.tk);
        self.exec.compute_cycles += cycles;
        self.compute_end = now + cycles;
        if i + 1 < self.steps.len() {
            // partial sums of the tile being computed are not ready yet
            let defer = self.same_output_tile(i, i + 1);
            self.loads_done = self.issue_loads(i + 1, now, !defer, cache)?;
        }
        Ok(Progress::TileDone(self.compute_end))
    }

    /// Tile `next` finished computing: write its outputs if it is leaving the
    /// output tile, then schedule the next compute or finish.
    pub fn tile_done(&mut self, now: Cycle, cache: &mut CacheMem) -> Result<Progress> {
        let i = self.next;
        let s = *self.step(i);
        if self.enters(i, TensorRole::Output) {
            let idx = self.out_index(&s);
            self.out_visits[idx] += 1;
        }
        if self.leaves_output(i) {
            let map = *self.cand.cmap.get(TensorRole::Output);
            let (x, _) = self.transfer(&s, TensorRole::Output);
            let done = if map.intermediate {
                self.issue(NecKind::Write, x, now, cache)?
            } else if map.is_cached() {
                let w = self.issue(NecKind::Write, x, now, cache)?;
                if self.out_visits[self.out_index(&s)] >= self.out_reload {
                    self.issue(NecKind::Writeback, x, now, cache)?.max(w)
                } else {
                    w
                }
            } else {
                self.issue(NecKind::BypassWrite, x, now, cache)?
            };
            self.writes_done = self.writes_done.max(done);
        }
        self.next += 1;
        if self.next == self.steps.len() {
            self.exec.end = self.writes_done.max(now);
            return Ok(Progress::Finished(self.exec.end));
        }
        if self.same_output_tile(i, self.next) {
            let r = self.issue_output_read(self.next, now, cache)?;
            self.loads_done = self.loads_done.max(r);
        }
        Ok(Progress::ComputeStart(self.loads_done.max(now)))
    }

    /// Advances one event.
    pub fn advance(&mut self, p: Progress, cache: &mut CacheMem) -> Result<Progress> {
        match p {
            Progress::ComputeStart(t) => self.compute_start(t, cache),
            Progress::TileDone(t) => self.tile_done(t, cache),
            Progress::Finished(_) => Ok(p),
        }
    }

    pub fn into_execution(self) -> LayerExecution {
        self.exec
    }
}

/// Runs a whole layer with no other traffic interleaved.
#[allow(clippy::too_many_arguments)]
pub fn execute_layer(
    hw: &HardwareConfig,
    core: &mut NpuCore,
    task: usize,
    layer: &LayerSpec,
    cand: &MappingCandidate,
    plan: MemoryPlan,
    now: Cycle,
    cache: &mut CacheMem,
) -> Result<LayerExecution> {
    if core.busy_until > now {
        return Err(Error::Invariant { cycle: now, what: alloc::format!("npu {} is still busy", core.id) });
    }
    let (mut run, mut p) = LayerRun::start(hw, task, layer, cand, plan, CoreGroup::single(core.id), now, cache)?;
    while !matches!(p, Progress::Finished(_)) {
        p = run.advance(p, cache)?;
    }
    let exec = run.into_execution();
    core.busy_until = exec.end;
    Ok(exec)
}
