use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::{MetricsReport, ModelMetrics};
use super::scenario::Scenario;
use crate::cachemem::{CacheMem, CacheMode, TraceRecord};
use crate::mapper::{CandidateKind, MappingCandidateTable};
use crate::npu::{CoreGroup, LayerRun, MemoryPlan, NpuCore, Progress};
use crate::scheduler::{
    hw_only_allocate, hw_only_select, select_candidate, timeout_threshold, Choice, DecisionRecord, Request, Scheduler,
    SchedulerMode, TaskView,
};
use crate::{Cycle, Error, HardwareConfig, Result};

const MODEL_SPAN: u64 = 1 << 32;
const ACT_BASE: u64 = 1 << 40;
const ACT_SLOT: u64 = 1 << 30;
const ACT_BUF: u64 = 1 << 29;
const FULL_CHECK_PERIOD: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    LayerBegin(usize),
    Timeout { slot: usize, epoch: u64 },
    StartLayer(usize),
    Step(usize),
    LayerEnd(usize),
}

#[derive(Debug, Clone)]
struct Task {
    model: usize,
    layer: usize,
    dispatched: Cycle,
    lbm_block_end: Option<usize>,
    choice: Choice,
    wait_since: Cycle,
}

#[derive(Debug, Clone)]
struct Slot {
    group: CoreGroup,
    task: Option<Task>,
    run: Option<LayerRun>,
    progress: Progress,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub decisions: Vec<DecisionRecord>,
    pub trace: Vec<TraceRecord>,
}

/// Draws the dispatch order: `n` models picked uniformly over all instances.
pub fn model_queue(sc: &Scenario, n: u64) -> Vec<usize> {
    let pool: Vec<usize> = sc.models.iter().enumerate().flat_map(|(i, e)| core::iter::repeat_n(i, e.instances as usize)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

struct Engine<'a> {
    sc: &'a Scenario,
    hw: &'a HardwareConfig,
    cache: CacheMem,
    sched: Scheduler,
    cores: Vec<NpuCore>,
    slots: Vec<Slot>,
    heap: BinaryHeap<Reverse<(Cycle, u64, Event)>>,
    seq: u64,
    now: Cycle,
    events: u64,
    queue: Vec<usize>,
    next_item: usize,
    metrics: Vec<ModelMetrics>,
    decisions: Vec<DecisionRecord>,
    share: u64,
    analytic: Vec<Vec<u64>>,
    weight_base: Vec<Vec<u64>>,
}

impl<'a> Engine<'a> {
    fn new(sc: &'a Scenario) -> Result<Self> {
        let hw = &sc.hw;
        let mode = if sc.mode == SchedulerMode::Transparent { CacheMode::Transparent } else { CacheMode::Partitioned };
        let mut cache = CacheMem::new(hw, mode);
        if sc.instrumented {
            cache.enable_checks();
        }
        if sc.trace {
            cache.enable_trace();
        }
        let n_slots = sc.slots();
        let g = sc.replication;
        let slots = (0..n_slots)
            .map(|s| Slot { group: CoreGroup { leader: s * g as usize, size: g }, task: None, run: None, progress: Progress::Finished(0) })
            .collect();
        let analytic = sc
            .models
            .iter()
            .map(|e| e.mapping.tables.iter().map(|t| t.largest_lwm().analytic_latency(hw)).collect())
            .collect();
        let weight_base = sc
            .models
            .iter()
            .enumerate()
            .map(|(m, e)| {
                let mut at = m as u64 * MODEL_SPAN;
                e.model
                    .layers
                    .iter()
                    .map(|l| {
                        let b = at;
                        at += l.weight_bytes().next_multiple_of(hw.page_bytes);
                        b
                    })
                    .collect()
            })
            .collect();
        let metrics = sc.models.iter().map(|e| ModelMetrics { model: e.model.name.clone(), ..Default::default() }).collect();
        Ok(Self {
            sc,
            hw,
            cache,
            sched: Scheduler { restart_wait: hw.timeout_restarts_wait, ..Scheduler::new(n_slots, hw.first_npu_pcpn(), hw.npu_pages(), hw.timeout_factor) },
            cores: (0..hw.num_npus).map(NpuCore::new).collect(),
            slots,
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0,
            events: 0,
            queue: model_queue(sc, sc.total_inferences()),
            next_item: 0,
            metrics,
            decisions: Vec::new(),
            share: 0,
            analytic,
            weight_base,
        })
    }

    fn push(&mut self, at: Cycle, ev: Event) -> Result<()> {
        if at < self.now {
            return Err(Error::Invariant { cycle: self.now, what: format!("{ev:?} scheduled in the past at {at}") });
        }
        self.seq += 1;
        self.heap.push(Reverse((at, self.seq, ev)));
        Ok(())
    }

    fn task(&self, slot: usize) -> &Task {
        self.slots[slot].task.as_ref().expect("slot has a task")
    }

    fn task_mut(&mut self, slot: usize) -> &mut Task {
        self.slots[slot].task.as_mut().expect("slot has a task")
    }

    fn mct(&self, model: usize, layer: usize) -> &'a MappingCandidateTable {
        &self.sc.models[model].mapping.tables[layer]
    }

    fn t_est(&self, slot: usize, model: usize, layer: usize) -> u64 {
        self.cores[self.slots[slot].group.leader].t_est(model, layer, self.analytic[model][layer])
    }

    fn t_est_range(&self, slot: usize, model: usize, layers: core::ops::Range<usize>) -> u64 {
        layers.map(|l| self.t_est(slot, model, l)).sum()
    }

    fn is_head(&self, model: usize, layer: usize) -> bool {
        self.sc.lbm && self.sc.models[model].model.block_of(layer).start == layer
    }

    fn program(&mut self, slot: usize) -> Result<()> {
        let group = self.slots[slot].group;
        if let Some(&p) = self.sched.held[slot].iter().find(|&&p| self.sched.pages.owner(p) != Some(slot)) {
            return Err(Error::Invariant { cycle: self.now, what: format!("slot {slot} maps page {p} it does not own") });
        }
        let pages = self.sched.held[slot].clone();
        for npu in group.members() {
            self.cache.program_cpt(npu, &pages)?;
        }
        Ok(())
    }

    fn init(&mut self) -> Result<()> {
        if self.sc.mode == SchedulerMode::CamdnHwOnly {
            self.share = hw_only_allocate(self.slots.len(), self.hw.npu_pages());
            for s in 0..self.slots.len() {
                self.sched.allocate(s, self.share).expect("static shares fit");
                self.program(s)?;
            }
        }
        for s in 0..self.slots.len() {
            self.dispatch(s)?;
        }
        Ok(())
    }

    fn dispatch(&mut self, slot: usize) -> Result<()> {
        if self.next_item < self.queue.len() {
            let model = self.queue[self.next_item];
            self.next_item += 1;
            self.slots[slot].task =
                Some(Task { model, layer: 0, dispatched: self.now, lbm_block_end: None, choice: Choice::Lwm(0), wait_since: self.now });
            self.sched.tables.running[slot] = true;
            self.push(self.now, Event::LayerBegin(slot))
        } else {
            self.slots[slot].task = None;
            self.sched.tables.running[slot] = false;
            self.sched.tables.p_next[slot] = 0;
            Ok(())
        }
    }

    fn view(&self, slot: usize) -> TaskView {
        let t = self.task(slot);
        let block = *self.sc.models[t.model].model.block_of(t.layer);
        TaskView {
            lbm_enabled: t.lbm_block_end.is_some(),
            is_block_head: self.is_head(t.model, t.layer),
            block_t_est: self.t_est_range(slot, t.model, block.range()),
            layer_t_est: self.t_est(slot, t.model, t.layer),
        }
    }

    fn layer_begin(&mut self, slot: usize) -> Result<()> {
        let now = self.now;
        let (model, layer) = {
            let t = self.task_mut(slot);
            t.wait_since = now;
            (t.model, t.layer)
        };
        let mct = self.mct(model, layer);
        let view = self.view(slot);
        match self.sc.mode {
            SchedulerMode::CamdnFull => {
                if view.lbm_enabled {
                    return self.granted(slot, Choice::Lbm, false, 0, None);
                }
                let sel = select_candidate(&self.sched.tables, slot, &view, mct, self.now, self.hw.timeout_factor);
                match self.sched.request(slot, sel) {
                    Request::Granted { choice, pages, downgrades, p_ahead } => self.granted(slot, choice, !pages.is_empty(), downgrades, p_ahead),
                    Request::Waiting { deadline, epoch } => match deadline {
                        Some(d) => self.push(d, Event::Timeout { slot, epoch }),
                        None => Ok(()),
                    },
                }
            }
            SchedulerMode::CamdnHwOnly => {
                let choice = hw_only_select(mct, &view, self.share, self.sc.lbm);
                self.granted(slot, choice, false, 0, None)
            }
            SchedulerMode::Transparent => self.granted(slot, Choice::Lwm(0), false, 0, None),
        }
    }

    /// Pages predicted for the layer after `layer`, evaluated at `at`.
    fn predict_p_next(&self, slot: usize, at: Cycle) -> u64 {
        let t = self.task(slot);
        let next = t.layer + 1;
        if next >= self.sc.models[t.model].model.num_layers() {
            return 0;
        }
        if t.lbm_block_end.is_some_and(|e| next < e) {
            return self.sched.tables.p_alloc[slot];
        }
        let mct = self.mct(t.model, next);
        let ta = timeout_threshold(at, self.t_est(slot, t.model, next), self.hw.timeout_factor);
        let p_ahead = self.sched.tables.pred_avail_pages(Some(ta), slot) + self.sched.tables.p_alloc[slot] as i64;
        if self.is_head(t.model, next) && (mct.lbm.p_need as i64) < p_ahead {
            return mct.lbm.p_need;
        }
        mct.lwms.iter().rev().find(|c| c.p_need as i64 <= p_ahead).map_or(0, |c| c.p_need)
    }

    fn granted(&mut self, slot: usize, choice: Choice, new_pages: bool, downgrades: u32, p_ahead: Option<i64>) -> Result<()> {
        let (model, layer) = (self.task(slot).model, self.task(slot).layer);
        let block = *self.sc.models[model].model.block_of(layer);
        let mct = self.mct(model, layer);
        {
            let t = self.task_mut(slot);
            t.choice = choice;
            if choice == Choice::Lbm && t.lbm_block_end.is_none() {
                t.lbm_block_end = Some(block.end);
            }
            if choice != Choice::Lbm {
                t.lbm_block_end = None;
            }
        }
        let start = if new_pages {
            self.program(slot)?;
            self.now + self.hw.cpt_program_cycles
        } else {
            self.now
        };
        if self.sc.mode == SchedulerMode::CamdnFull {
            let est = if choice == Choice::Lbm {
                self.t_est_range(slot, model, layer..block.end)
            } else {
                self.t_est(slot, model, layer)
            };
            self.sched.tables.t_next[slot] = start + est;
            self.sched.tables.p_next[slot] = self.predict_p_next(slot, start + est);
        }
        let cand = choice.resolve(mct);
        let m = &mut self.metrics[model];
        m.wait_cycles += self.now - self.slots[slot].task.as_ref().unwrap().wait_since;
        m.downgrades += downgrades as u64;
        match cand.kind {
            CandidateKind::Lbm => m.lbm_layers += 1,
            CandidateKind::Lwm => m.lwm_layers += 1,
        }
        if self.sc.decision_log {
            self.decisions.push(DecisionRecord {
                cycle: self.now,
                task: slot,
                layer,
                kind: cand.kind,
                p_need: cand.p_need,
                p_ahead,
                downgrades,
            });
        }
        self.push(start, Event::StartLayer(slot))
    }

    fn memory_plan(&self, slot: usize, model: usize, layer: usize) -> MemoryPlan {
        let act = ACT_BASE + slot as u64 * ACT_SLOT;
        let n = self.sc.models[model].model.num_layers();
        MemoryPlan {
            input: act + (layer as u64 % 2) * ACT_BUF,
            weights: self.weight_base[model][layer],
            output: act + ((layer as u64 + 1) % 2) * ACT_BUF,
            input_intermediate: layer > 0,
            output_intermediate: layer + 1 < n,
        }
    }

    fn start_layer(&mut self, slot: usize) -> Result<()> {
        let (model, layer, choice) = (self.task(slot).model, self.task(slot).layer, self.task(slot).choice);
        let spec = &self.sc.models[model].model.layers[layer];
        let cand = choice.resolve(self.mct(model, layer));
        let plan = self.memory_plan(slot, model, layer);
        let group = self.slots[slot].group;
        let (run, p) = LayerRun::start(self.hw, slot, spec, cand, plan, group, self.now, &mut self.cache)?;
        self.slots[slot].run = Some(run);
        self.schedule_progress(slot, p)
    }

    fn schedule_progress(&mut self, slot: usize, p: Progress) -> Result<()> {
        self.slots[slot].progress = p;
        match p {
            Progress::ComputeStart(t) | Progress::TileDone(t) => self.push(t, Event::Step(slot)),
            Progress::Finished(t) => self.push(t, Event::LayerEnd(slot)),
        }
    }

    fn step(&mut self, slot: usize) -> Result<()> {
        let p = self.slots[slot].progress;
        let run = self.slots[slot].run.as_mut().expect("running layer");
        let next = run.advance(p, &mut self.cache)?;
        self.schedule_progress(slot, next)
    }

    fn layer_end(&mut self, slot: usize) -> Result<()> {
        let exec = self.slots[slot].run.take().expect("running layer").into_execution();
        let (model, layer, block_end) = {
            let t = self.task(slot);
            (t.model, t.layer, t.lbm_block_end)
        };
        let m = &mut self.metrics[model];
        m.dram_read += exec.dram_read;
        m.dram_write += exec.dram_write;
        m.intermediate_dram += exec.intermediate_dram;
        m.cache_hits += exec.cache_hits;
        m.cache_misses += exec.cache_misses;
        let leader = self.slots[slot].group.leader;
        self.cores[leader].record_profile(model, layer, exec.latency(), self.analytic[model][layer]);

        let next = layer + 1;
        let last = next == self.sc.models[model].model.num_layers();
        let keep = block_end.is_some_and(|e| next < e);
        let mut released = false;
        if !keep {
            self.task_mut(slot).lbm_block_end = None;
            if self.sc.mode == SchedulerMode::CamdnFull && !self.sched.held[slot].is_empty() {
                for npu in self.slots[slot].group.members() {
                    self.cache.clear_cpt(npu);
                }
                let pages = self.sched.release_all(slot, self.now)?;
                self.cache.invalidate_pages(&pages);
                released = true;
            }
        }
        if self.sc.mode == SchedulerMode::CamdnFull {
            self.sched.tables.t_next[slot] =
                if keep { self.now + self.t_est_range(slot, model, next..block_end.unwrap()) } else { self.now };
            self.sched.tables.p_next[slot] = self.predict_p_next(slot, self.now);
        }
        if last {
            let latency = self.now - self.task(slot).dispatched;
            let m = &mut self.metrics[model];
            m.inferences += 1;
            m.total_latency += latency;
            self.dispatch(slot)?;
        } else {
            self.task_mut(slot).layer = next;
            self.push(self.now, Event::LayerBegin(slot))?;
        }
        if released {
            for (t, r) in self.sched.serve_waiters() {
                if let Request::Granted { choice, pages, downgrades, p_ahead } = r {
                    self.granted(t, choice, !pages.is_empty(), downgrades, p_ahead)?;
                }
            }
        }
        Ok(())
    }

    fn timeout(&mut self, slot: usize, epoch: u64) -> Result<()> {
        let Some(t) = self.slots[slot].task.as_ref() else { return Ok(()) };
        let (model, layer) = (t.model, t.layer);
        let mct = self.mct(model, layer);
        let est = self.t_est(slot, model, layer);
        match self.sched.on_timeout(slot, epoch, mct, est, self.now) {
            None => Ok(()),
            Some(Request::Granted { choice, pages, downgrades, p_ahead }) => self.granted(slot, choice, !pages.is_empty(), downgrades, p_ahead),
            Some(Request::Waiting { deadline, epoch }) => match deadline {
                Some(d) => self.push(d, Event::Timeout { slot, epoch }),
                None => Ok(()),
            },
        }
    }

    fn check(&self) -> Result<()> {
        let fail = |what: alloc::string::String| Err(Error::Invariant { cycle: self.now, what });
        self.sched.check(self.now)?;
        if self.next_item < self.queue.len() {
            if let Some(s) = self.slots.iter().position(|s| s.task.is_none()) {
                return fail(format!("slot {s} idle while work is queued"));
            }
        }
        if self.events % FULL_CHECK_PERIOD == 0 {
            for (s, slot) in self.slots.iter().enumerate() {
                for npu in slot.group.members() {
                    if let Some(p) = self.cache.cpt(npu).valid_pcpns().find(|&p| self.sched.pages.owner(p) != Some(s)) {
                        return fail(format!("npu {npu} maps page {p} not owned by its task"));
                    }
                }
            }
            let used = self.slots.len() * self.sc.replication as usize;
            if let Some(npu) = (used..self.hw.num_npus).find(|&n| self.cache.cpt(n).valid_pcpns().next().is_some()) {
                return fail(format!("idle npu {npu} has mapped pages"));
            }
        }
        Ok(())
    }

    fn run(mut self) -> Result<RunOutput> {
        self.init()?;
        while let Some(Reverse((t, _, ev))) = self.heap.pop() {
            if t > self.sc.stop.max_cycles {
                break;
            }
            if t < self.now {
                return Err(Error::Invariant { cycle: self.now, what: format!("event {ev:?} at {t} is out of order") });
            }
            self.now = t;
            self.events += 1;
            match ev {
                Event::LayerBegin(s) => self.layer_begin(s)?,
                Event::Timeout { slot, epoch } => self.timeout(slot, epoch)?,
                Event::StartLayer(s) => self.start_layer(s)?,
                Event::Step(s) => self.step(s)?,
                Event::LayerEnd(s) => self.layer_end(s)?,
            }
            if self.sc.instrumented {
                self.check()?;
            }
        }
        self.finish()
    }

    fn finish(mut self) -> Result<RunOutput> {
        // traffic of layers cut off by the cycle limit
        for slot in &self.slots {
            if let (Some(run), Some(t)) = (&slot.run, &slot.task) {
                let e = run.execution();
                let m = &mut self.metrics[t.model];
                m.dram_read += e.dram_read;
                m.dram_write += e.dram_write;
                m.intermediate_dram += e.intermediate_dram;
                m.cache_hits += e.cache_hits;
                m.cache_misses += e.cache_misses;
            }
        }
        let sum = |f: fn(&ModelMetrics) -> u64| self.metrics.iter().map(f).sum::<u64>();
        let stats = self.cache.stats;
        let closure = [
            (sum(|m| m.dram_read), self.cache.dram.read_bytes, "DRAM read"),
            (sum(|m| m.dram_write), self.cache.dram.write_bytes, "DRAM write"),
            (sum(|m| m.intermediate_dram), stats.intermediate_dram_read + stats.intermediate_dram_write, "intermediate DRAM"),
            (sum(|m| m.cache_hits), stats.hit_lines, "cache hits"),
            (sum(|m| m.cache_misses), stats.miss_lines, "cache misses"),
        ];
        for (a, b, what) in closure {
            if a != b {
                return Err(Error::Invariant { cycle: self.now, what: format!("{what}: per-model sum {a} != counter {b}") });
            }
        }
        let mut report = MetricsReport {
            scenario: self.sc.name.clone(),
            mode: self.sc.mode,
            seed: self.sc.seed,
            cache_bytes: self.hw.cache_bytes,
            colocated: self.slots.len(),
            cycles: self.now,
            events: self.events,
            inferences: 0,
            dram_read: self.cache.dram.read_bytes,
            dram_write: self.cache.dram.write_bytes,
            intermediate_dram: stats.intermediate_dram_read + stats.intermediate_dram_write,
            cache_hits: stats.hit_lines,
            cache_misses: stats.miss_lines,
            hit_rate: 0.0,
            models: self.metrics,
        };
        report.finish();
        let trace = self.cache.take_trace();
        Ok(RunOutput { report, decisions: self.decisions, trace })
    }
}

/// Runs a scenario to its stop rule.
pub fn run(sc: &Scenario) -> Result<RunOutput> {
    sc.validate()?;
    Engine::new(sc)?.run()
}

/// Stable per-cell seed: mixes the base seed with a cell index.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
