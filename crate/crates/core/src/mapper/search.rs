//! Heuristic pruning of the tiling space and exhaustive minimum-traffic search
//! over what survives.

use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use super::candidate::{CacheMapTable, MappingCandidate, Placement, TensorMap};
#[cfg(test)]
use super::loops::Dim;
use super::loops::{LoopOrder, LoopTable, TensorRole, TileFactors};
use crate::workload::LayerSpec;
use crate::HardwareConfig;

/// Largest number of tile values kept per dimension.
pub const MAX_FACTORS_PER_DIM: usize = 64;
/// Granularity of the non-divisor tile values.
pub const FACTOR_STEP: u64 = 16;

/// One loop order with the tile factors admitted for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subspace {
    pub order: LoopOrder,
    pub points: Vec<TileFactors>,
}

/// Candidate tile values for a dimension of size `dim`: its divisors plus the
/// multiples of 16 up to `dim`, thinned evenly to at most 64 values (the full
/// dimension is always kept).
pub fn factor_grid(dim: u64) -> Vec<u64> {
    thin(raw_grid(dim))
}

fn raw_grid(dim: u64) -> Vec<u64> {
    let mut v: Vec<u64> = (1..=dim).filter(|d| dim % d == 0).collect();
    v.extend((1..=dim / FACTOR_STEP).map(|i| i * FACTOR_STEP));
    v.sort_unstable();
    v.dedup();
    v
}

fn thin(mut v: Vec<u64>) -> Vec<u64> {
    if v.len() > MAX_FACTORS_PER_DIM {
        let n = v.len();
        let keep = MAX_FACTORS_PER_DIM;
        v = (0..keep).map(|i| v[(i * (n - 1)) / (keep - 1)]).collect();
        v.dedup();
    }
    v
}

/// Tile sizes that fill whole cache lines along a contiguous dimension, or
/// span the dimension entirely, thinned like [`factor_grid`].
pub fn aligned_grid(dim: u64, line_elems: u64) -> Vec<u64> {
    thin(raw_grid(dim).into_iter().filter(|t| *t == dim || t % line_elems == 0).collect())
}

/// Applies the pruning rules and returns one subspace per stationary order:
/// - `tn` and `tk` are multiples of the cache line (in elements) or the full
///   dimension;
/// - the three double-buffered tiles fit the scratchpad;
/// - `tm * tn` covers the PE array whenever some admitted point can, and
///   `tm`, `tn` are whole multiples of the PE dimension (or the full
///   dimension) whenever some admitted point allows it;
/// - loop orders are limited to output-, weight- and input-stationary.
pub fn heuristic_prune(layer: &LayerSpec, hw: &HardwareConfig) -> Vec<Subspace> {
    let le = hw.line_elems(layer.elem_bytes);
    let gm = factor_grid(layer.m);
    let gn = aligned_grid(layer.n, le);
    let gk = aligned_grid(layer.k, le);

    let mut fits = Vec::new();
    for &tm in &gm {
        for &tn in &gn {
            for &tk in &gk {
                let f = TileFactors::new(tm, tn, tk);
                let scratch = 2 * layer.elem_bytes * (tm * tk + tk * tn + tm * tn);
                if scratch <= hw.scratchpad_bytes {
                    fits.push(f);
                }
            }
        }
    }
    let pe_target = (hw.pe_dim * hw.pe_dim).min(layer.m * layer.n);
    if fits.iter().any(|f| f.tm * f.tn >= pe_target) {
        fits.retain(|f| f.tm * f.tn >= pe_target);
    }
    let whole = |t: u64, dim: u64| t == dim || t % hw.pe_dim == 0;
    if fits.iter().any(|f| whole(f.tm, layer.m) && whole(f.tn, layer.n)) {
        fits.retain(|f| whole(f.tm, layer.m) && whole(f.tn, layer.n));
    }
    LoopOrder::ALL
        .iter()
        .map(|&order| Subspace { order, points: fits.clone() })
        .collect()
}

/// A fully evaluated grid point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Evaluated {
    pub table: LoopTable,
    pub cached: [bool; 3],
    pub footprint: [u64; 3],
    pub traffic: u64,
    pub p_need: u64,
}

impl Evaluated {
    fn placement_bits(&self) -> u8 {
        self.cached.iter().enumerate().map(|(i, c)| (*c as u8) << i).sum()
    }

    /// Total order used to pick among candidates: less traffic, then fewer
    /// pages, then larger tiles, then loop order, factors and placement.
    pub fn cmp_key(&self, other: &Self) -> Ordering {
        let key = |e: &Self| {
            (
                e.traffic,
                e.p_need,
                Reverse(e.table.factors.volume()),
                e.table.order,
                e.table.factors,
                e.placement_bits(),
            )
        };
        key(self).cmp(&key(other))
    }

    pub fn into_candidate(self, layer: &LayerSpec, hw: &HardwareConfig) -> MappingCandidate {
        let mut cmap = CacheMapTable::all_bypassed();
        for role in TensorRole::ALL {
            if self.cached[role.index()] {
                *cmap.get_mut(role) = TensorMap {
                    role,
                    placement: Placement::Cached,
                    intermediate: false,
                    vc_base: 0,
                    bytes: self.footprint[role.index()],
                };
            }
        }
        let c = MappingCandidate::layer_wise(layer, hw, self.table, cmap);
        debug_assert_eq!(c.est_dram_bytes, self.traffic);
        debug_assert_eq!(c.p_need, self.p_need);
        c
    }
}

/// Calls `f` for every (tiling, placement) combination of a subspace. A tensor
/// may only be cached when it is revisited; otherwise it is bypassed.
pub(crate) fn for_each_evaluated(
    layer: &LayerSpec,
    hw: &HardwareConfig,
    subspace: &Subspace,
    mut f: impl FnMut(Evaluated),
) {
    let page = hw.page_bytes;
    for &factors in &subspace.points {
        let table = LoopTable { order: subspace.order, factors };
        let mut reload = [1u64; 3];
        let mut window = [0u64; 3];
        let mut bytes = [0u64; 3];
        for role in TensorRole::ALL {
            let i = role.index();
            reload[i] = table.reload_factor(layer, role);
            window[i] = table.reuse_window_bytes(layer, role);
            bytes[i] = layer.tensor_bytes(role);
        }
        for bits in 0u8..8 {
            let cached = [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0];
            if (0..3).any(|i| cached[i] && reload[i] <= 1) {
                continue;
            }
            let mut traffic = 0;
            let mut pages = 0;
            for i in 0..3 {
                if cached[i] {
                    traffic += bytes[i];
                    pages += window[i].div_ceil(page);
                } else if i == TensorRole::Output.index() {
                    traffic += (2 * reload[i] - 1) * bytes[i];
                } else {
                    traffic += reload[i] * bytes[i];
                }
            }
            f(Evaluated { table, cached, footprint: window, traffic, p_need: pages });
        }
    }
}

/// Minimum-traffic candidate of one subspace whose page need is within
/// `limit`, or `None` if nothing fits.
pub fn solve_min_traffic(
    layer: &LayerSpec,
    hw: &HardwareConfig,
    subspace: &Subspace,
    limit: u64,
) -> Option<MappingCandidate> {
    let mut best: Option<Evaluated> = None;
    for_each_evaluated(layer, hw, subspace, |e| {
        if e.p_need <= limit && best.as_ref().map_or(true, |b| e.cmp_key(b) == Ordering::Less) {
            best = Some(e);
        }
    });
    best.map(|e| e.into_candidate(layer, hw))
}

/// Tile sizes admitting nothing but the single point `(m, n, k)`; used by
/// callers that need a specific candidate.
pub fn single_point(order: LoopOrder, tm: u64, tn: u64, tk: u64) -> Subspace {
    Subspace { order, points: alloc::vec![TileFactors::new(tm, tn, tk)] }
}

#[cfg(test)]
pub(crate) fn dim_values(sub: &Subspace, dim: Dim) -> Vec<u64> {
    let mut v: Vec<u64> = sub.points.iter().map(|p| p.get(dim)).collect();
    v.sort_unstable();
    v.dedup();
    v
}
