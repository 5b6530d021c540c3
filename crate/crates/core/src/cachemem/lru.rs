//! Hardware-managed set-associative LRU cache over the whole cache, used by
//! the transparent baseline.

use alloc::vec;
use alloc::vec::Vec;

use crate::HardwareConfig;

const INVALID: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LruOutcome {
    pub hit: bool,
    /// Set when a dirty victim had to be written back; carries its
    /// line address and intermediate flag.
    pub writeback: Option<(u64, bool)>,
}

#[derive(Debug, Clone)]
pub struct LruCache {
    slices: u64,
    sets: u64,
    ways: usize,
    line_bytes: u64,
    tags: Vec<u64>,
    stamps: Vec<u64>,
    dirty: Vec<bool>,
    intermediate: Vec<bool>,
    clock: u64,
    pub hits: u64,
    pub misses: u64,
}

impl LruCache {
    pub fn new(hw: &HardwareConfig) -> Self {
        let n = (hw.slices * hw.sets_per_slice() * hw.total_ways) as usize;
        Self {
            slices: hw.slices,
            sets: hw.sets_per_slice(),
            ways: hw.total_ways as usize,
            line_bytes: hw.line_bytes,
            tags: vec![INVALID; n],
            stamps: vec![0; n],
            dirty: vec![false; n],
            intermediate: vec![false; n],
            clock: 0,
            hits: 0,
            misses: 0,
        }
    }

    /// `(slice, set)` of a memory byte address.
    pub fn index_of(&self, address: u64) -> (u64, u64) {
        let line = address / self.line_bytes;
        (line % self.slices, (line / self.slices) % self.sets)
    }

    fn set_base(&self, line: u64) -> (usize, u64) {
        let slice = line % self.slices;
        let set = (line / self.slices) % self.sets;
        let tag = line / (self.slices * self.sets);
        (((slice * self.sets + set) as usize) * self.ways, tag)
    }

    /// One line access. Writes allocate without fetching (full-line writes).
    pub fn access(&mut self, address: u64, is_write: bool, intermediate: bool) -> LruOutcome {
        self.clock += 1;
        let line = address / self.line_bytes;
        let (base, tag) = self.set_base(line);
        let ways = base..base + self.ways;
        if let Some(i) = ways.clone().find(|&i| self.tags[i] == tag) {
            self.hits += 1;
            self.stamps[i] = self.clock;
            if is_write {
                self.dirty[i] = true;
                self.intermediate[i] = intermediate;
            }
            return LruOutcome { hit: true, writeback: None };
        }
        self.misses += 1;
        let victim = ways
            .clone()
            .find(|&i| self.tags[i] == INVALID)
            .unwrap_or_else(|| ways.min_by_key(|&i| self.stamps[i]).expect("at least one way"));
        let writeback = (self.tags[victim] != INVALID && self.dirty[victim]).then(|| {
            let vline = self.tags[victim] * self.slices * self.sets + (line % (self.slices * self.sets));
            (vline * self.line_bytes, self.intermediate[victim])
        });
        self.tags[victim] = tag;
        self.stamps[victim] = self.clock;
        self.dirty[victim] = is_write;
        self.intermediate[victim] = intermediate;
        LruOutcome { hit: false, writeback }
    }

    pub fn contains(&self, address: u64) -> bool {
        let (base, tag) = self.set_base(address / self.line_bytes);
        self.tags[base..base + self.ways].contains(&tag)
    }

    pub fn dirty_lines(&self) -> usize {
        self.dirty.iter().filter(|d| **d).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_lines_in_one_set_evict_the_first() {
        let hw = HardwareConfig::default();
        let mut c = LruCache::new(&hw);
        let stride = hw.slices * hw.sets_per_slice() * hw.line_bytes;
        for i in 0..16 {
            assert!(!c.access(i * stride, false, false).hit);
        }
        assert!(c.contains(0));
        c.access(16 * stride, false, false);
        assert!(!c.contains(0));
        assert!(c.contains(stride));
    }

    #[test]
    fn lru_order_respects_recent_use() {
        let hw = HardwareConfig::default();
        let mut c = LruCache::new(&hw);
        let stride = hw.slices * hw.sets_per_slice() * hw.line_bytes;
        for i in 0..16 {
            c.access(i * stride, false, false);
        }
        assert!(c.access(0, false, false).hit);
        c.access(16 * stride, false, false);
        assert!(c.contains(0));
        assert!(!c.contains(stride));
    }

    #[test]
    fn dirty_victim_is_written_back() {
        let hw = HardwareConfig::default();
        let mut c = LruCache::new(&hw);
        let stride = hw.slices * hw.sets_per_slice() * hw.line_bytes;
        c.access(5 * 64, true, true);
        for i in 1..16 {
            c.access(5 * 64 + i * stride, false, false);
        }
        let out = c.access(5 * 64 + 16 * stride, false, false);
        assert_eq!(out.writeback, Some((5 * 64, true)));
    }

    #[test]
    fn index_mapping() {
        let c = LruCache::new(&HardwareConfig::default());
        assert_eq!(c.index_of(64), (1, 0));
        assert_eq!(c.index_of(8 * 64), (0, 1));
    }
}
