use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::Cycle;

/// Request kinds understood by the NPU-to-cache engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NecKind {
    Read,
    Write,
    BypassRead,
    BypassWrite,
    MulticastRead,
    MulticastBypassRead,
    Fetch,
    Writeback,
}

impl NecKind {
    pub const ALL: [NecKind; 8] = [
        NecKind::Read,
        NecKind::Write,
        NecKind::BypassRead,
        NecKind::BypassWrite,
        NecKind::MulticastRead,
        NecKind::MulticastBypassRead,
        NecKind::Fetch,
        NecKind::Writeback,
    ];

    pub fn is_bypass(self) -> bool {
        matches!(self, NecKind::BypassRead | NecKind::BypassWrite | NecKind::MulticastBypassRead)
    }

    pub fn is_multicast(self) -> bool {
        matches!(self, NecKind::MulticastRead | NecKind::MulticastBypassRead)
    }

    /// Whether the request touches cache lines through the requester's CPT.
    pub fn uses_cache(self) -> bool {
        !self.is_bypass()
    }

    pub fn name(self) -> &'static str {
        match self {
            NecKind::Read => "read",
            NecKind::Write => "write",
            NecKind::BypassRead => "bypass_read",
            NecKind::BypassWrite => "bypass_write",
            NecKind::MulticastRead => "multicast_read",
            NecKind::MulticastBypassRead => "multicast_bypass_read",
            NecKind::Fetch => "fetch",
            NecKind::Writeback => "writeback",
        }
    }
}

/// `address` is a virtual cache address for cache kinds and a memory address
/// for bypass kinds. `mem_address` is the memory side of a fetch or
/// writeback. `receivers` counts the cores served by one multicast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NecRequest {
    pub kind: NecKind,
    pub requester: usize,
    pub receivers: u32,
    pub address: u64,
    pub mem_address: u64,
    pub bytes: u64,
    pub intermediate: bool,
}

impl NecRequest {
    pub fn new(kind: NecKind, requester: usize, address: u64, bytes: u64) -> Self {
        Self { kind, requester, receivers: 1, address, mem_address: address, bytes, intermediate: false }
    }

    pub fn with_mem(mut self, mem_address: u64) -> Self {
        self.mem_address = mem_address;
        self
    }

    pub fn with_receivers(mut self, receivers: u32) -> Self {
        self.receivers = receivers;
        self
    }

    pub fn intermediate(mut self, yes: bool) -> Self {
        self.intermediate = yes;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NecOutcome {
    pub done: Cycle,
    pub hit_lines: u64,
    pub miss_lines: u64,
    pub dram_read: u64,
    pub dram_write: u64,
    /// DRAM bytes that belong to activations passed between layers.
    pub intermediate_dram: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub cycle: Cycle,
    pub npu: usize,
    pub kind: NecKind,
    pub address: u64,
    pub bytes: u64,
    pub done: Cycle,
}

/// Valid and dirty bits for every line of the NPU subspace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubspaceLines {
    valid: Vec<u64>,
    dirty: Vec<u64>,
    lines: usize,
}

impl SubspaceLines {
    pub fn new(lines: usize) -> Self {
        let words = lines.div_ceil(64);
        Self { valid: vec![0; words], dirty: vec![0; words], lines }
    }

    pub fn len(&self) -> usize {
        self.lines
    }

    pub fn is_empty(&self) -> bool {
        self.lines == 0
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.valid[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn is_dirty(&self, i: usize) -> bool {
        self.dirty[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, valid: bool, dirty: bool) {
        let (w, b) = (i / 64, 1u64 << (i % 64));
        if valid {
            self.valid[w] |= b;
        } else {
            self.valid[w] &= !b;
        }
        if dirty {
            self.dirty[w] |= b;
        } else {
            self.dirty[w] &= !b;
        }
    }

    pub fn clear_range(&mut self, start: usize, end: usize) {
        for i in start..end {
            self.set(i, false, false);
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn dirty_count(&self) -> usize {
        self.dirty.iter().map(|w| w.count_ones() as usize).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bits_roundtrip() {
        let mut s = SubspaceLines::new(130);
        s.set(129, true, true);
        s.set(3, true, false);
        assert!(s.is_valid(129) && s.is_dirty(129));
        assert!(s.is_valid(3) && !s.is_dirty(3));
        assert_eq!((s.valid_count(), s.dirty_count()), (2, 1));
        s.clear_range(0, 130);
        assert_eq!(s.valid_count(), 0);
    }

    #[test]
    fn kind_classes() {
        assert_eq!(NecKind::ALL.iter().filter(|k| k.is_bypass()).count(), 3);
        assert_eq!(NecKind::ALL.iter().filter(|k| k.is_multicast()).count(), 2);
    }
}
