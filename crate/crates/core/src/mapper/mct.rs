//! Mapping candidate tables and whole-model mapping.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::Range;
use serde::{Deserialize, Serialize};

use super::candidate::{dram_traffic, CandidateKind, MappingCandidate, Placement, TensorMap};
use super::loops::TensorRole;
use super::search::{for_each_evaluated, heuristic_prune, Evaluated};
use crate::workload::{segment_blocks_by, LayerBlock, LayerSpec, ModelSpec};
use crate::HardwareConfig;

/// Every candidate of one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingCandidateTable {
    pub layer_id: usize,
    /// Sorted by nondecreasing `p_need`; the first entry needs no pages.
    pub lwms: Vec<MappingCandidate>,
    pub lbm: MappingCandidate,
}

impl MappingCandidateTable {
    pub fn largest_lwm(&self) -> &MappingCandidate {
        self.lwms.last().unwrap()
    }

    /// Largest LWM that needs at most `pages`.
    pub fn largest_fitting(&self, pages: u64) -> &MappingCandidate {
        self.lwms.iter().rev().find(|c| c.p_need <= pages).unwrap_or(&self.lwms[0])
    }

    /// Largest LWM needing strictly fewer than `pages`, if any.
    pub fn next_smaller(&self, pages: u64) -> Option<&MappingCandidate> {
        self.lwms.iter().rev().find(|c| c.p_need < pages)
    }
}

/// Cache usage levels requested from the mapper by default: 0%, 12.5%, 25%,
/// 50% and 100% of the NPU subspace.
pub fn default_usage_limits(hw: &HardwareConfig) -> Vec<u64> {
    let p = hw.npu_pages();
    alloc::vec![0, p / 8, p / 4, p / 2, p]
}

/// Default page cap for one layer block: a quarter of the NPU subspace.
pub fn default_lbm_page_cap(hw: &HardwareConfig) -> u64 {
    (hw.npu_pages() / 4).max(1)
}

pub const DEFAULT_MAX_BLOCK_LAYERS: usize = 4;

/// Builds the table of one layer: the minimum-traffic LWM within each usage
/// limit (limit 0 is always included) and, treating the layer as a block of
/// its own, an LBM equal to the largest LWM.
pub fn generate_mct(layer: &LayerSpec, hw: &HardwareConfig, usage_limits: &[u64]) -> MappingCandidateTable {
    let mut limits: Vec<u64> = usage_limits.to_vec();
    limits.push(0);
    limits.sort_unstable();
    limits.dedup();

    let mut best: Vec<Option<Evaluated>> = alloc::vec![None; limits.len()];
    for sub in heuristic_prune(layer, hw) {
        for_each_evaluated(layer, hw, &sub, |e| {
            let first = limits.partition_point(|l| *l < e.p_need);
            for slot in best[first..].iter_mut() {
                if slot.as_ref().map_or(true, |b| e.cmp_key(b) == Ordering::Less) {
                    *slot = Some(e);
                }
            }
        });
    }

    let mut lwms: Vec<MappingCandidate> = Vec::new();
    for e in best.into_iter().flatten() {
        let c = e.into_candidate(layer, hw);
        if !lwms.iter().any(|o| o.same_plan(&c)) {
            lwms.push(c);
        }
    }
    lwms.sort_by_key(|c| (c.p_need, core::cmp::Reverse(c.est_dram_bytes)));
    let mut lbm = lwms.last().expect("the scratchpad admits no tiling of this layer").clone();
    lbm.kind = CandidateKind::Lbm;
    MappingCandidateTable { layer_id: layer.id, lwms, lbm }
}

/// LBM candidates for every layer of `block`, derived from each layer's
/// largest LWM by pinning the block's intermediate activations whole in the
/// cache. Intermediates alternate between two slots at the start of the
/// virtual space; working regions follow. All layers of the block report the
/// block-wide page need so the allocation is held unchanged until block end.
pub fn lbm_block_candidates(
    model: &ModelSpec,
    block: Range<usize>,
    largest: &[MappingCandidate],
    hw: &HardwareConfig,
) -> Vec<MappingCandidate> {
    let page = hw.page_bytes;
    let inter_count = block.len() - 1;
    let slot_pages = (block.start..block.end - 1)
        .map(|l| model.layers[l].output_bytes().div_ceil(page))
        .max()
        .unwrap_or(0);
    let slots = inter_count.min(2) as u64;
    let working_base = slots * slot_pages;

    let mut out: Vec<MappingCandidate> = Vec::with_capacity(block.len());
    for l in block.clone() {
        let layer = &model.layers[l];
        let mut c = largest[l].clone();
        c.kind = CandidateKind::Lbm;
        let pin = |c: &mut MappingCandidate, role: TensorRole, slot: usize| {
            *c.cmap.get_mut(role) = TensorMap {
                role,
                placement: Placement::Cached,
                intermediate: true,
                vc_base: (slot as u64 % 2) * slot_pages * page,
                bytes: layer.tensor_bytes(role),
            };
        };
        if l > block.start {
            pin(&mut c, TensorRole::Input, l - 1 - block.start);
        }
        if l + 1 < block.end {
            pin(&mut c, TensorRole::Output, l - block.start);
        }
        c.p_need = c.cmap.layout_from(working_base, page);
        c.est_dram_bytes = dram_traffic(&c, layer);
        out.push(c);
    }
    let block_pages = out.iter().map(|c| c.p_need).max().unwrap_or(0);
    for c in out.iter_mut() {
        c.p_need = block_pages;
    }
    out
}

/// Page need of the LBM of `block`; the footprint bound used when segmenting.
pub fn lbm_footprint_pages(
    model: &ModelSpec,
    block: Range<usize>,
    largest: &[MappingCandidate],
    hw: &HardwareConfig,
) -> u64 {
    lbm_block_candidates(model, block, largest, hw).first().map_or(0, |c| c.p_need)
}

/// Largest LWM of every layer, the basis of LBM footprints.
pub fn largest_lwms(model: &ModelSpec, hw: &HardwareConfig) -> Vec<MappingCandidate> {
    let limit = [hw.npu_pages()];
    model.layers.iter().map(|l| generate_mct(l, hw, &limit).largest_lwm().clone()).collect()
}

/// Contents of a model mapping file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMapping {
    pub model: String,
    pub usage_limits: Vec<u64>,
    pub page_bytes: u64,
    pub blocks: Vec<LayerBlock>,
    pub tables: Vec<MappingCandidateTable>,
}

impl ModelMapping {
    pub fn block_of(&self, layer: usize) -> &LayerBlock {
        self.blocks.iter().find(|b| b.contains(layer)).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingOptions {
    pub usage_limits: Vec<u64>,
    pub max_block_layers: usize,
    pub lbm_page_cap: u64,
}

impl MappingOptions {
    pub fn defaults(hw: &HardwareConfig) -> Self {
        Self {
            usage_limits: default_usage_limits(hw),
            max_block_layers: DEFAULT_MAX_BLOCK_LAYERS,
            lbm_page_cap: default_lbm_page_cap(hw),
        }
    }
}

/// Maps every layer of `model`: segments it into blocks, builds each layer's
/// table and replaces the per-layer LBM with the block-aware one.
pub fn map_model(model: &ModelSpec, hw: &HardwareConfig, opts: &MappingOptions) -> (ModelSpec, ModelMapping) {
    let mut limits = opts.usage_limits.clone();
    limits.push(hw.npu_pages());
    limits.push(0);
    limits.sort_unstable();
    limits.dedup();

    let mut tables: Vec<MappingCandidateTable> = model.layers.iter().map(|l| generate_mct(l, hw, &limits)).collect();
    let largest: Vec<MappingCandidate> = tables.iter().map(|t| t.largest_lwm().clone()).collect();
    let segmented = segment_blocks_with(model, opts.max_block_layers, opts.lbm_page_cap, &largest, hw);
    for b in &segmented.blocks {
        let lbms = lbm_block_candidates(&segmented, b.range(), &largest, hw);
        for (l, c) in b.range().zip(lbms) {
            tables[l].lbm = c;
        }
    }
    let mapping = ModelMapping {
        model: model.name.clone(),
        usage_limits: opts.usage_limits.clone(),
        page_bytes: hw.page_bytes,
        blocks: segmented.blocks.clone(),
        tables,
    };
    (segmented, mapping)
}

pub(crate) fn segment_blocks_with(
    model: &ModelSpec,
    max_block_layers: usize,
    lbm_page_cap: u64,
    largest: &[MappingCandidate],
    hw: &HardwareConfig,
) -> ModelSpec {
    segment_blocks_by(model, max_block_layers, lbm_page_cap, |range| lbm_footprint_pages(model, range, largest, hw))
}
