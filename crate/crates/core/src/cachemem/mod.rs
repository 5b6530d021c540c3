//! Shared cache and DRAM: physical cache addressing, per-NPU cache page
//! tables, the request engine for the partitioned NPU subspace, the LRU
//! baseline and the channel-queued DRAM.

mod address;
mod cpt;
mod dram;
mod lru;
mod nec;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use address::{AddressLayout, PhysicalCacheAddress};
pub use cpt::CachePageTable;
pub use dram::Dram;
pub use lru::{LruCache, LruOutcome};
pub use nec::{NecKind, NecOutcome, NecRequest, SubspaceLines, TraceRecord};

use crate::{Cycle, Error, HardwareConfig, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CacheMode {
    /// Software-mapped NPU ways, per-NPU CPTs, explicit fetch/writeback.
    Partitioned,
    /// Hardware LRU over all ways; the NPUs see plain memory.
    Transparent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CacheStats {
    pub hit_lines: u64,
    pub miss_lines: u64,
    pub intermediate_dram_read: u64,
    pub intermediate_dram_write: u64,
    pub requests: [u64; 8],
}

impl CacheStats {
    pub fn count(&self, kind: NecKind) -> u64 {
        self.requests[kind as usize]
    }
}

#[derive(Debug, Clone)]
pub struct CacheMem {
    hw: HardwareConfig,
    layout: AddressLayout,
    mode: CacheMode,
    cpts: Vec<CachePageTable>,
    lines: SubspaceLines,
    lru: Option<LruCache>,
    pub dram: Dram,
    pub stats: CacheStats,
    version: u64,
    trace: Option<Vec<TraceRecord>>,
    checked: bool,
}

impl CacheMem {
    pub fn new(hw: &HardwareConfig, mode: CacheMode) -> Self {
        let cpt_entries = hw.total_pages() as usize;
        let subspace_lines = (hw.npu_pages() * hw.lines_per_page()) as usize;
        Self {
            hw: hw.clone(),
            layout: AddressLayout::new(hw),
            mode,
            cpts: (0..hw.num_npus).map(|_| CachePageTable::new(cpt_entries, hw.page_bytes)).collect(),
            lines: SubspaceLines::new(if mode == CacheMode::Partitioned { subspace_lines } else { 0 }),
            lru: (mode == CacheMode::Transparent).then(|| LruCache::new(hw)),
            dram: Dram::new(hw),
            stats: CacheStats::default(),
            version: 0,
            trace: None,
            checked: false,
        }
    }

    /// Verifies bypass purity and multicast byte conservation on every
    /// request.
    pub fn enable_checks(&mut self) {
        self.checked = true;
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn layout(&self) -> &AddressLayout {
        &self.layout
    }

    pub fn cpt(&self, npu: usize) -> &CachePageTable {
        &self.cpts[npu]
    }

    /// Counter bumped by every change to line state; bypass requests must
    /// leave it untouched.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn lines(&self) -> &SubspaceLines {
        &self.lines
    }

    pub fn lru(&self) -> Option<&LruCache> {
        self.lru.as_ref()
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.as_mut().map(core::mem::take).unwrap_or_default()
    }

    fn mapped_pcpn_ok(&self, pcpn: u64) -> bool {
        pcpn >= self.hw.first_npu_pcpn() && pcpn < self.hw.total_pages()
    }

    /// Maps vcpn `i` of `npu` to `pcpns[i]`. Only NPU-subspace pages may be
    /// mapped.
    pub fn program_cpt(&mut self, npu: usize, pcpns: &[u64]) -> Result<()> {
        if let Some(&bad) = pcpns.iter().find(|&&p| !self.mapped_pcpn_ok(p)) {
            return Err(Error::InvalidConfig(format!("pcpn {bad} lies outside the NPU ways")));
        }
        self.cpts[npu].program(pcpns);
        Ok(())
    }

    pub fn clear_cpt(&mut self, npu: usize) {
        self.cpts[npu].clear();
    }

    fn page_line_range(&self, pcpn: u64) -> (usize, usize) {
        let lpp = self.hw.lines_per_page();
        let start = ((pcpn - self.hw.first_npu_pcpn()) * lpp) as usize;
        (start, start + lpp as usize)
    }

    /// Drops the contents of released pages.
    pub fn invalidate_pages(&mut self, pcpns: &[u64]) {
        for &p in pcpns {
            if self.mapped_pcpn_ok(p) {
                let (s, e) = self.page_line_range(p);
                self.lines.clear_range(s, e);
            }
        }
        if !pcpns.is_empty() {
            self.version += 1;
        }
    }

    /// Subspace line indices covered by `[vcaddr, vcaddr + bytes)` under the
    /// requester's CPT.
    fn subspace_lines(&self, npu: usize, vcaddr: u64, bytes: u64, now: Cycle, out: &mut Vec<usize>) -> Result<()> {
        out.clear();
        if bytes == 0 {
            return Ok(());
        }
        let page = self.hw.page_bytes;
        let line = self.hw.line_bytes;
        let first = self.hw.first_npu_pcpn();
        let lpp = self.hw.lines_per_page();
        let end = vcaddr + bytes;
        let mut cur = vcaddr;
        while cur < end {
            let vcpn = cur / page;
            let chunk_end = end.min((vcpn + 1) * page);
            let pcpn = self.cpts[npu].lookup(vcpn).ok_or(Error::InvalidPage { npu, vcpn })?;
            if !self.mapped_pcpn_ok(pcpn) {
                return Err(Error::Invariant { cycle: now, what: format!("npu {npu} maps pcpn {pcpn} outside the NPU ways") });
            }
            let base = ((pcpn - first) * lpp) as usize;
            let l0 = ((cur % page) / line) as usize;
            let l1 = ((chunk_end - 1) % page / line) as usize;
            out.extend((l0..=l1).map(|l| base + l));
            cur = chunk_end;
        }
        Ok(())
    }

    /// Executes one request against the partitioned subspace and DRAM.
    pub fn execute(&mut self, req: &NecRequest, now: Cycle) -> Result<NecOutcome> {
        if self.mode != CacheMode::Partitioned && req.kind.uses_cache() {
            return Err(Error::Invariant { cycle: now, what: format!("{} issued in transparent mode", req.kind.name()) });
        }
        if req.kind.is_multicast() && req.receivers == 0 {
            return Err(Error::Invariant { cycle: now, what: format!("{} with an empty group", req.kind.name()) });
        }
        self.stats.requests[req.kind as usize] += 1;
        let before = (self.version, self.dram.read_bytes + self.dram.write_bytes);
        let hit = self.hw.cache_hit_cycles;
        let mut out = NecOutcome { done: now, ..Default::default() };
        let mut idx = Vec::new();
        if req.kind.uses_cache() {
            self.subspace_lines(req.requester, req.address, req.bytes, now, &mut idx)?;
        }
        match req.kind {
            NecKind::Read | NecKind::MulticastRead => {
                if let Some(&i) = idx.iter().find(|&&i| !self.lines.is_valid(i)) {
                    return Err(Error::Invariant {
                        cycle: now,
                        what: format!("npu {} reads invalid subspace line {i}", req.requester),
                    });
                }
                out.hit_lines = idx.len() as u64;
                out.done = now + hit;
            }
            NecKind::Write => {
                for &i in &idx {
                    self.lines.set(i, true, true);
                }
                self.version += 1;
                out.hit_lines = idx.len() as u64;
                out.done = now + hit;
            }
            NecKind::Fetch => {
                for &i in &idx {
                    self.lines.set(i, true, false);
                }
                self.version += 1;
                out.miss_lines = idx.len() as u64;
                out.dram_read = req.bytes;
                out.done = self.dram.submit(req.mem_address, req.bytes, false, now) + hit;
            }
            NecKind::Writeback => {
                if let Some(&i) = idx.iter().find(|&&i| !self.lines.is_valid(i)) {
                    return Err(Error::Invariant {
                        cycle: now,
                        what: format!("npu {} writes back invalid subspace line {i}", req.requester),
                    });
                }
                for &i in &idx {
                    self.lines.set(i, true, false);
                }
                self.version += 1;
                out.dram_write = req.bytes;
                out.done = self.dram.submit(req.mem_address, req.bytes, true, now);
            }
            NecKind::BypassRead | NecKind::MulticastBypassRead => {
                out.dram_read = req.bytes;
                out.done = self.dram.submit(req.address, req.bytes, false, now);
            }
            NecKind::BypassWrite => {
                out.dram_write = req.bytes;
                out.done = self.dram.submit(req.address, req.bytes, true, now);
            }
        }
        if self.checked {
            self.check_request(req, before, now)?;
        }
        self.stats.hit_lines += out.hit_lines;
        self.stats.miss_lines += out.miss_lines;
        if req.intermediate {
            out.intermediate_dram = out.dram_read + out.dram_write;
            self.stats.intermediate_dram_read += out.dram_read;
            self.stats.intermediate_dram_write += out.dram_write;
        }
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceRecord { cycle: now, npu: req.requester, kind: req.kind, address: req.address, bytes: req.bytes, done: out.done });
        }
        Ok(out)
    }

    fn check_request(&self, req: &NecRequest, before: (u64, u64), now: Cycle) -> Result<()> {
        let moved = self.dram.read_bytes + self.dram.write_bytes - before.1;
        if req.kind.is_bypass() && self.version != before.0 {
            return Err(Error::Invariant { cycle: now, what: format!("{} changed cache state", req.kind.name()) });
        }
        let expected = match req.kind {
            NecKind::Read | NecKind::Write | NecKind::MulticastRead => 0,
            _ => req.bytes,
        };
        if moved != expected {
            return Err(Error::Invariant {
                cycle: now,
                what: format!("{} for {} receivers moved {moved} DRAM bytes, expected {expected}", req.kind.name(), req.receivers),
            });
        }
        Ok(())
    }

    /// A plain memory access in transparent mode. Read misses are fetched
    /// from DRAM; dirty victims are written back without stalling the
    /// requester.
    pub fn transparent_access(
        &mut self,
        npu: usize,
        address: u64,
        bytes: u64,
        is_write: bool,
        intermediate: bool,
        now: Cycle,
    ) -> Result<NecOutcome> {
        let line = self.hw.line_bytes;
        let lru = self
            .lru
            .as_mut()
            .ok_or_else(|| Error::Invariant { cycle: now, what: format!("npu {npu} used the LRU path in partitioned mode") })?;
        let mut out = NecOutcome { done: now + self.hw.cache_hit_cycles, ..Default::default() };
        if bytes == 0 {
            return Ok(out);
        }
        let mut first_miss = None;
        let mut wb: Vec<(u64, bool)> = Vec::new();
        let l0 = address / line;
        let l1 = (address + bytes - 1) / line;
        for l in l0..=l1 {
            let o = lru.access(l * line, is_write, intermediate);
            if o.hit {
                out.hit_lines += 1;
            } else {
                out.miss_lines += 1;
                first_miss.get_or_insert(l * line);
            }
            if let Some(v) = o.writeback {
                wb.push(v);
            }
        }
        if !is_write {
            if let Some(a) = first_miss {
                let b = out.miss_lines * line;
                out.dram_read = b;
                out.done = out.done.max(self.dram.submit(a, b, false, now) + self.hw.cache_hit_cycles);
                if intermediate {
                    out.intermediate_dram += b;
                    self.stats.intermediate_dram_read += b;
                }
            }
        }
        if let Some(&(a, _)) = wb.first() {
            let b = wb.len() as u64 * line;
            out.dram_write = b;
            self.dram.submit(a, b, true, now);
            let inter = wb.iter().filter(|w| w.1).count() as u64 * line;
            out.intermediate_dram += inter;
            self.stats.intermediate_dram_write += inter;
        }
        self.stats.hit_lines += out.hit_lines;
        self.stats.miss_lines += out.miss_lines;
        if let Some(t) = self.trace.as_mut() {
            let kind = if is_write { NecKind::Write } else { NecKind::Read };
            t.push(TraceRecord { cycle: now, npu, kind, address, bytes, done: out.done });
        }
        Ok(out)
    }
}
