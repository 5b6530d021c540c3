use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::loops::{LoopTable, TensorRole};
use crate::workload::LayerSpec;
use crate::HardwareConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Bypassed,
    Cached,
}

/// Where one operand lives in the task's virtual cache space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TensorMap {
    pub role: TensorRole,
    pub placement: Placement,
    /// The tensor is an activation passed between layers of a layer block and
    /// kept whole in cache; it never reaches DRAM.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub intermediate: bool,
    /// Page-aligned base in vcaddr space (meaningless when bypassed).
    pub vc_base: u64,
    /// Cached footprint in bytes.
    pub bytes: u64,
}

impl TensorMap {
    pub fn bypassed(role: TensorRole) -> Self {
        Self { role, placement: Placement::Bypassed, intermediate: false, vc_base: 0, bytes: 0 }
    }

    pub fn is_cached(&self) -> bool {
        self.placement == Placement::Cached
    }
}

/// Cache map of a candidate, indexed by [`TensorRole::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheMapTable(pub [TensorMap; 3]);

impl CacheMapTable {
    pub fn all_bypassed() -> Self {
        Self(TensorRole::ALL.map(TensorMap::bypassed))
    }

    pub fn get(&self, role: TensorRole) -> &TensorMap {
        &self.0[role.index()]
    }

    pub fn get_mut(&mut self, role: TensorRole) -> &mut TensorMap {
        &mut self.0[role.index()]
    }

    pub fn cached_bytes(&self) -> u64 {
        self.0.iter().filter(|t| t.is_cached()).map(|t| t.bytes).sum()
    }

    /// Lays the cached regions out back to back from `base_page`, each on its
    /// own page boundary, skipping intermediates (already placed). Returns the
    /// first page after the last region.
    pub fn layout_from(&mut self, base_page: u64, page_bytes: u64) -> u64 {
        let mut page = base_page;
        for t in self.0.iter_mut() {
            if t.is_cached() && !t.intermediate {
                t.vc_base = page * page_bytes;
                page += t.bytes.div_ceil(page_bytes);
            }
        }
        page
    }

    /// Pages spanned by the cached regions, `[vc_base, vc_base+bytes)` each.
    pub fn pages_spanned(&self, page_bytes: u64) -> u64 {
        self.0
            .iter()
            .filter(|t| t.is_cached() && t.bytes > 0)
            .map(|t| (t.vc_base + t.bytes).div_ceil(page_bytes))
            .max()
            .unwrap_or(0)
    }

    pub fn regions_disjoint(&self) -> bool {
        let mut r: Vec<(u64, u64)> = self
            .0
            .iter()
            .filter(|t| t.is_cached() && t.bytes > 0)
            .map(|t| (t.vc_base, t.vc_base + t.bytes))
            .collect();
        r.sort();
        r.windows(2).all(|w| w[0].1 <= w[1].0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CandidateKind {
    #[serde(rename = "LWM")]
    Lwm,
    #[serde(rename = "LBM")]
    Lbm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingCandidate {
    pub kind: CandidateKind,
    #[serde(rename = "loop")]
    pub loop_table: LoopTable,
    pub cmap: CacheMapTable,
    pub p_need: u64,
    pub est_dram_bytes: u64,
    pub est_compute_cycles: u64,
    pub scratch_bytes: u64,
}

impl MappingCandidate {
    /// Builds an LWM candidate and fills in all derived fields.
    pub fn layer_wise(layer: &LayerSpec, hw: &HardwareConfig, loop_table: LoopTable, mut cmap: CacheMapTable) -> Self {
        let p_need = cmap.layout_from(0, hw.page_bytes);
        let mut c = Self {
            kind: CandidateKind::Lwm,
            loop_table,
            cmap,
            p_need,
            est_dram_bytes: 0,
            est_compute_cycles: loop_table.compute_cycles(layer, hw.pe_dim),
            scratch_bytes: loop_table.scratch_bytes(layer.elem_bytes),
        };
        c.est_dram_bytes = dram_traffic(&c, layer);
        c
    }

    pub fn same_plan(&self, other: &Self) -> bool {
        self.kind == other.kind && self.loop_table == other.loop_table && self.cmap == other.cmap
    }

    /// Cycles implied by the heavier of compute and DRAM transfer.
    pub fn analytic_latency(&self, hw: &HardwareConfig) -> u64 {
        let bw = hw.dram_millibytes_per_cycle();
        let transfer = if bw == 0 { 0 } else { (self.est_dram_bytes * 1000).div_ceil(bw) };
        self.est_compute_cycles.max(transfer).max(1)
    }
}

/// DRAM bytes moved by one execution of `layer` under `candidate`.
///
/// Input and weights cost `bytes * reload` when bypassed and `bytes` when
/// cached. A bypassed output visited `r` times costs `(2r - 1) * bytes`
/// (every visit writes, every revisit reads the partial sums back); a cached
/// output is written back once. Intermediates cost nothing.
pub fn dram_traffic(candidate: &MappingCandidate, layer: &LayerSpec) -> u64 {
    TensorRole::ALL
        .iter()
        .map(|role| tensor_traffic(candidate, layer, *role))
        .sum()
}

pub fn tensor_traffic(candidate: &MappingCandidate, layer: &LayerSpec, role: TensorRole) -> u64 {
    let map = candidate.cmap.get(role);
    let bytes = layer.tensor_bytes(role);
    if map.intermediate {
        return 0;
    }
    let reload = candidate.loop_table.reload_factor(layer, role);
    match (role, map.placement) {
        (_, Placement::Cached) => bytes,
        (TensorRole::Output, Placement::Bypassed) => (2 * reload - 1) * bytes,
        (_, Placement::Bypassed) => reload * bytes,
    }
}
