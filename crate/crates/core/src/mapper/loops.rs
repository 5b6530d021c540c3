use serde::{Deserialize, Serialize};

use crate::workload::LayerSpec;

/// Tile-loop dimension of the matmul-normalized layer `C[M,N] += A[M,K] * B[K,N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dim {
    M,
    N,
    K,
}

/// Tensor operand of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorRole {
    Input,
    Weights,
    Output,
}

impl TensorRole {
    pub const ALL: [TensorRole; 3] = [TensorRole::Input, TensorRole::Weights, TensorRole::Output];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Loop dimensions that index this tensor.
    pub fn deps(self) -> [Dim; 2] {
        match self {
            TensorRole::Input => [Dim::M, Dim::K],
            TensorRole::Weights => [Dim::K, Dim::N],
            TensorRole::Output => [Dim::M, Dim::N],
        }
    }

    /// The one loop dimension this tensor does not depend on.
    pub fn invariant(self) -> Dim {
        match self {
            TensorRole::Input => Dim::N,
            TensorRole::Weights => Dim::M,
            TensorRole::Output => Dim::K,
        }
    }
}

/// The three stationary loop orders kept by the heuristic pruner,
/// outermost loop first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LoopOrder {
    /// `m, n, k`: the output tile stays in the scratchpad across `k`.
    #[serde(rename = "mnk")]
    OutputStationary,
    /// `n, k, m`: the weight tile stays across `m`.
    #[serde(rename = "nkm")]
    WeightStationary,
    /// `m, k, n`: the input tile stays across `n`.
    #[serde(rename = "mkn")]
    InputStationary,
}

impl LoopOrder {
    pub const ALL: [LoopOrder; 3] =
        [LoopOrder::OutputStationary, LoopOrder::WeightStationary, LoopOrder::InputStationary];

    pub fn dims(self) -> [Dim; 3] {
        match self {
            LoopOrder::OutputStationary => [Dim::M, Dim::N, Dim::K],
            LoopOrder::WeightStationary => [Dim::N, Dim::K, Dim::M],
            LoopOrder::InputStationary => [Dim::M, Dim::K, Dim::N],
        }
    }

    /// Nesting depth of `dim`, 0 = outermost.
    pub fn position(self, dim: Dim) -> usize {
        self.dims().iter().position(|d| *d == dim).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileFactors {
    pub tm: u64,
    pub tn: u64,
    pub tk: u64,
}

impl TileFactors {
    pub fn new(tm: u64, tn: u64, tk: u64) -> Self {
        Self { tm, tn, tk }
    }

    pub fn get(&self, dim: Dim) -> u64 {
        match dim {
            Dim::M => self.tm,
            Dim::N => self.tn,
            Dim::K => self.tk,
        }
    }

    pub fn volume(&self) -> u64 {
        self.tm * self.tn * self.tk
    }
}

/// Loop permutation plus tile sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LoopTable {
    pub order: LoopOrder,
    pub factors: TileFactors,
}

impl LoopTable {
    pub fn new(order: LoopOrder, tm: u64, tn: u64, tk: u64) -> Self {
        Self { order, factors: TileFactors::new(tm, tn, tk) }
    }

    pub fn is_valid_for(&self, layer: &LayerSpec) -> bool {
        let f = self.factors;
        f.tm >= 1 && f.tn >= 1 && f.tk >= 1 && f.tm <= layer.m && f.tn <= layer.n && f.tk <= layer.k
    }

    pub fn trips(&self, layer: &LayerSpec, dim: Dim) -> u64 {
        layer.dim(dim).div_ceil(self.factors.get(dim))
    }

    pub fn tile_count(&self, layer: &LayerSpec) -> u64 {
        self.trips(layer, Dim::M) * self.trips(layer, Dim::N) * self.trips(layer, Dim::K)
    }

    /// Nesting depth of the innermost loop `role` depends on. The operand's
    /// tile transfer sits in that loop's body: it happens again whenever the
    /// loop counters at this depth or outside it change.
    pub fn visit_depth(&self, role: TensorRole) -> usize {
        role.deps().iter().map(|d| self.order.position(*d)).max().unwrap()
    }

    /// Tile indices `[m, n, k]` and loop counters (outermost first) of every
    /// step, in execution order.
    pub fn steps(&self, layer: &LayerSpec) -> alloc::vec::Vec<TileStep> {
        let dims = self.order.dims();
        let trips = dims.map(|d| self.trips(layer, d));
        let mut out = alloc::vec::Vec::with_capacity((trips[0] * trips[1] * trips[2]) as usize);
        for a in 0..trips[0] {
            for b in 0..trips[1] {
                for c in 0..trips[2] {
                    let counters = [a, b, c];
                    let mut tile = [0u64; 3];
                    for (d, v) in dims.iter().zip(counters) {
                        tile[*d as usize] = v;
                    }
                    out.push(TileStep { tile, counters });
                }
            }
        }
        out
    }

    /// Times each byte of `role` is transferred into the scratchpad when the
    /// tensor is not retained anywhere between visits. For the output this is
    /// the number of separate visits of each output tile.
    pub fn reload_factor(&self, layer: &LayerSpec, role: TensorRole) -> u64 {
        let inv = role.invariant();
        let innermost_dep = role.deps().iter().map(|d| self.order.position(*d)).max().unwrap();
        if self.order.position(inv) < innermost_dep {
            self.trips(layer, inv)
        } else {
            1
        }
    }

    /// Bytes a cache region must hold so that every revisit of `role` hits:
    /// the slice of the tensor swept between two visits of the same tile.
    /// Zero when the tensor is never revisited.
    pub fn reuse_window_bytes(&self, layer: &LayerSpec, role: TensorRole) -> u64 {
        if self.reload_factor(layer, role) <= 1 {
            return 0;
        }
        let inv_pos = self.order.position(role.invariant());
        let elems: u64 = role
            .deps()
            .iter()
            .map(|d| {
                if self.order.position(*d) < inv_pos {
                    self.factors.get(*d)
                } else {
                    layer.dim(*d)
                }
            })
            .product();
        elems * layer.elem_bytes
    }

    /// Scratchpad bytes with every operand tile double-buffered.
    pub fn scratch_bytes(&self, elem_bytes: u64) -> u64 {
        let f = self.factors;
        2 * elem_bytes * (f.tm * f.tk + f.tk * f.tn + f.tm * f.tn)
    }

    /// Cycles of PE-array work for the whole layer: each tile costs
    /// `ceil(tm/pe) * ceil(tn/pe) * tk`.
    pub fn compute_cycles(&self, layer: &LayerSpec, pe_dim: u64) -> u64 {
        let waves = |dim: u64, tile: u64| {
            let full = dim / tile;
            let rem = dim % tile;
            full * tile.div_ceil(pe_dim) + if rem > 0 { rem.div_ceil(pe_dim) } else { 0 }
        };
        waves(layer.m, self.factors.tm) * waves(layer.n, self.factors.tn) * layer.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileStep {
    /// Tile index per dimension, `[m, n, k]`.
    pub tile: [u64; 3],
    /// Loop counters in nesting order.
    pub counters: [u64; 3],
}

impl TileStep {
    /// Whether moving from `prev` to `self` re-enters the body of the loop at
    /// `depth`.
    pub fn enters(&self, prev: Option<&TileStep>, depth: usize) -> bool {
        prev.map_or(true, |p| p.counters[..=depth] != self.counters[..=depth])
    }
}

/// Extent of tile `index` along a dimension of size `dim` split in `tile`s.
pub fn tile_extent(dim: u64, tile: u64, index: u64) -> u64 {
    tile.min(dim - index * tile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{LayerKind, LayerSpec};

    fn layer(m: u64, n: u64, k: u64) -> LayerSpec {
        LayerSpec::new(0, LayerKind::MatMul, m, n, k)
    }

    #[test]
    fn output_stationary_reloads() {
        let l = layer(128, 256, 64);
        let t = LoopTable::new(LoopOrder::OutputStationary, 64, 64, 32);
        assert_eq!(t.reload_factor(&l, TensorRole::Input), 4);
        assert_eq!(t.reload_factor(&l, TensorRole::Weights), 2);
        assert_eq!(t.reload_factor(&l, TensorRole::Output), 1);
        assert_eq!(t.reuse_window_bytes(&l, TensorRole::Input), 64 * 64);
        assert_eq!(t.reuse_window_bytes(&l, TensorRole::Weights), 64 * 256);
    }

    #[test]
    fn weight_stationary_revisits_output() {
        let l = layer(128, 256, 96);
        let t = LoopTable::new(LoopOrder::WeightStationary, 64, 64, 32);
        assert_eq!(t.reload_factor(&l, TensorRole::Output), 3);
        assert_eq!(t.reload_factor(&l, TensorRole::Weights), 1);
        assert_eq!(t.reuse_window_bytes(&l, TensorRole::Output), 128 * 64);
    }

    #[test]
    fn compute_cycles_with_edges() {
        let l = layer(40, 32, 10);
        let t = LoopTable::new(LoopOrder::OutputStationary, 32, 32, 10);
        // m tiles: 32 -> 1 wave, 8 -> 1 wave
        assert_eq!(t.compute_cycles(&l, 32), 2 * 1 * 10);
    }

    #[test]
    fn scratch_arithmetic() {
        let t = LoopTable::new(LoopOrder::OutputStationary, 256, 256, 256);
        assert_eq!(t.scratch_bytes(1), 384 * 1024);
    }
}
