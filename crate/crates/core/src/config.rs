//! Hardware configuration of the NPU-integrated SoC.

use alloc::format;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const KIB: u64 = 1024;
pub const MIB: u64 = 1024 * 1024;

/// Static description of the SoC. Defaults reproduce the reference platform:
/// 16 cores with 32x32 PE arrays and 256KB scratchpads, a 16MB 16-way cache in
/// 8 slices with 12 ways reserved for NPUs, 32KB cache pages and 102.4GB/s of
/// DRAM bandwidth over 4 channels at 1GHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareConfig {
    pub pe_dim: u64,
    pub scratchpad_bytes: u64,
    pub num_npus: usize,
    pub cache_bytes: u64,
    pub total_ways: u64,
    pub npu_ways: u64,
    pub slices: u64,
    pub line_bytes: u64,
    pub page_bytes: u64,
    pub dram_bandwidth_gbps: f64,
    pub frequency_ghz: f64,
    pub dram_channels: u64,
    pub cache_hit_cycles: u64,
    pub dram_base_cycles: u64,
    /// Fraction of the estimated latency a task waits for pages before
    /// downgrading its candidate.
    pub timeout_factor: f64,
    /// Whether a candidate chosen after a timeout gets a fresh timeout;
    /// otherwise it must be granted at once or is downgraded again.
    pub timeout_restarts_wait: bool,
    /// Fixed cost of reprogramming a CPT on reallocation.
    pub cpt_program_cycles: u64,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self {
            pe_dim: 32,
            scratchpad_bytes: 256 * KIB,
            num_npus: 16,
            cache_bytes: 16 * MIB,
            total_ways: 16,
            npu_ways: 12,
            slices: 8,
            line_bytes: 64,
            page_bytes: 32 * KIB,
            dram_bandwidth_gbps: 102.4,
            frequency_ghz: 1.0,
            dram_channels: 4,
            cache_hit_cycles: 20,
            dram_base_cycles: 100,
            timeout_factor: 0.2,
            timeout_restarts_wait: true,
            cpt_program_cycles: 64,
        }
    }
}

fn is_pow2(v: u64) -> bool {
    v != 0 && v & (v - 1) == 0
}

impl HardwareConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.pe_dim == 0 || self.scratchpad_bytes == 0 || self.num_npus == 0 {
            return bad(format!("pe_dim, scratchpad_bytes and num_npus must be positive"));
        }
        if self.total_ways == 0 || self.npu_ways == 0 || self.npu_ways > self.total_ways {
            return bad(format!(
                "npu_ways ({}) must be in 1..={} (total_ways)",
                self.npu_ways, self.total_ways
            ));
        }
        if self.slices == 0 || self.line_bytes == 0 || self.page_bytes == 0 || self.dram_channels == 0 {
            return bad(format!("slices, line_bytes, page_bytes and dram_channels must be positive"));
        }
        if !is_pow2(self.line_bytes) {
            return bad(format!("line_bytes ({}) must be a power of two", self.line_bytes));
        }
        let span = self.slices * self.total_ways * self.line_bytes;
        if self.cache_bytes == 0 || self.cache_bytes % span != 0 {
            return bad(format!(
                "cache_bytes ({}) must be a positive multiple of slices*total_ways*line_bytes ({span})",
                self.cache_bytes
            ));
        }
        if self.page_bytes % self.line_bytes != 0 {
            return bad(format!("page_bytes ({}) must be a multiple of line_bytes", self.page_bytes));
        }
        if self.way_span_bytes() % self.page_bytes != 0 {
            return bad(format!(
                "page_bytes ({}) must divide the bytes of one way ({})",
                self.page_bytes,
                self.way_span_bytes()
            ));
        }
        if !(self.dram_bandwidth_gbps >= 0.0) || !(self.frequency_ghz > 0.0) {
            return bad(format!("bandwidth must be >= 0 and frequency > 0"));
        }
        if !(self.timeout_factor >= 0.0) {
            return bad(format!("timeout_factor must be >= 0"));
        }
        Ok(())
    }

    pub fn sets_per_slice(&self) -> u64 {
        self.cache_bytes / (self.slices * self.total_ways * self.line_bytes)
    }

    /// Bytes covered by one way across all slices and sets.
    pub fn way_span_bytes(&self) -> u64 {
        self.cache_bytes / self.total_ways
    }

    pub fn total_lines(&self) -> u64 {
        self.cache_bytes / self.line_bytes
    }

    pub fn lines_per_page(&self) -> u64 {
        self.page_bytes / self.line_bytes
    }

    /// Physical cache pages in the whole cache; also the CPT capacity.
    pub fn total_pages(&self) -> u64 {
        self.cache_bytes / self.page_bytes
    }

    pub fn pages_per_way(&self) -> u64 {
        self.way_span_bytes() / self.page_bytes
    }

    /// The NPU subspace occupies the highest `npu_ways` ways.
    pub fn first_npu_way(&self) -> u64 {
        self.total_ways - self.npu_ways
    }

    pub fn first_npu_pcpn(&self) -> u64 {
        self.first_npu_way() * self.pages_per_way()
    }

    /// Allocatable pages of the NPU subspace.
    pub fn npu_pages(&self) -> u64 {
        self.npu_ways * self.pages_per_way()
    }

    /// Aggregate DRAM bandwidth in thousandths of a byte per cycle; 0 means
    /// unlimited.
    pub fn dram_millibytes_per_cycle(&self) -> u64 {
        (self.dram_bandwidth_gbps / self.frequency_ghz * 1000.0 + 0.5) as u64
    }

    pub fn channel_millibytes_per_cycle(&self) -> u64 {
        self.dram_millibytes_per_cycle() / self.dram_channels
    }

    /// Elements of `elem_bytes` that fill one cache line.
    pub fn line_elems(&self, elem_bytes: u64) -> u64 {
        (self.line_bytes / elem_bytes).max(1)
    }

    pub fn with_cache_bytes(&self, cache_bytes: u64) -> Self {
        Self { cache_bytes, ..self.clone() }
    }
}
