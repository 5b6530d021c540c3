//! DNN workload description: layers normalized to matmul shape, models as
//! chains of layers, and their segmentation into layer blocks.

mod reuse;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;
use serde::{Deserialize, Serialize};

use crate::mapper::{largest_lwms, Dim, TensorRole};
use crate::{Error, HardwareConfig, Result};

pub use reuse::{reuse_stats, DistanceBucket, ReuseCountBucket, ReuseStats, DISTANCE_BUCKETS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    MatMul,
    Conv,
    DwConv,
    #[serde(rename = "LSTMCell")]
    LstmCell,
}

/// One layer as `output[M,N] = input[M,K] x weights[K,N]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub id: usize,
    pub kind: LayerKind,
    pub m: u64,
    pub n: u64,
    pub k: u64,
    pub elem_bytes: u64,
    /// Weights are read from DRAM on every inference.
    pub weight_resident: bool,
}

impl LayerSpec {
    pub fn new(id: usize, kind: LayerKind, m: u64, n: u64, k: u64) -> Self {
        Self { id, kind, m, n, k, elem_bytes: 1, weight_resident: true }
    }

    pub fn with_elem_bytes(mut self, elem_bytes: u64) -> Self {
        self.elem_bytes = elem_bytes;
        self
    }

    pub fn dim(&self, dim: Dim) -> u64 {
        match dim {
            Dim::M => self.m,
            Dim::N => self.n,
            Dim::K => self.k,
        }
    }

    pub fn input_bytes(&self) -> u64 {
        self.m * self.k * self.elem_bytes
    }

    pub fn weight_bytes(&self) -> u64 {
        self.k * self.n * self.elem_bytes
    }

    pub fn output_bytes(&self) -> u64 {
        self.m * self.n * self.elem_bytes
    }

    pub fn tensor_bytes(&self, role: TensorRole) -> u64 {
        match role {
            TensorRole::Input => self.input_bytes(),
            TensorRole::Weights => self.weight_bytes(),
            TensorRole::Output => self.output_bytes(),
        }
    }

    pub fn validate(&self) -> core::result::Result<(), String> {
        if self.m == 0 || self.n == 0 || self.k == 0 {
            return Err(format!("layer {}: M, N and K must be at least 1", self.id));
        }
        if !matches!(self.elem_bytes, 1 | 2 | 4) {
            return Err(format!("layer {}: elem_bytes must be 1, 2 or 4, got {}", self.id, self.elem_bytes));
        }
        Ok(())
    }
}

/// Half-open range of layer indices executed as one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LayerBlock {
    pub start: usize,
    pub end: usize,
}

impl LayerBlock {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn contains(&self, layer: usize) -> bool {
        self.range().contains(&layer)
    }

    pub fn is_head(&self, layer: usize) -> bool {
        layer == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    pub blocks: Vec<LayerBlock>,
    pub qos_ms: Option<f64>,
}

impl ModelSpec {
    /// Validates the layer chain. Layer ids are reassigned by position and
    /// every layer starts as its own block.
    pub fn new(name: impl Into<String>, mut layers: Vec<LayerSpec>, qos_ms: Option<f64>) -> Result<Self> {
        let name = name.into();
        let invalid = |reason: String| Error::InvalidModel { model: name.clone(), reason };
        if layers.is_empty() {
            return Err(invalid(format!("no layers")));
        }
        if let Some(q) = qos_ms {
            if !(q > 0.0) {
                return Err(invalid(format!("qos_ms must be positive")));
            }
        }
        for (i, l) in layers.iter_mut().enumerate() {
            l.id = i;
            l.validate().map_err(invalid)?;
        }
        for i in 1..layers.len() {
            let (prev, cur) = (&layers[i - 1], &layers[i]);
            if prev.n != cur.k || prev.m != cur.m || prev.elem_bytes != cur.elem_bytes {
                return Err(Error::DimensionMismatch { layer: i });
            }
        }
        let blocks = (0..layers.len()).map(|i| LayerBlock { start: i, end: i + 1 }).collect();
        Ok(Self { name, layers, blocks, qos_ms })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn block_of(&self, layer: usize) -> &LayerBlock {
        self.blocks.iter().find(|b| b.contains(layer)).expect("blocks partition the layers")
    }

    /// Blocks are contiguous, in order, non-empty and cover every layer.
    pub fn blocks_partition_layers(&self) -> bool {
        let mut next = 0;
        for b in &self.blocks {
            if b.start != next || b.is_empty() {
                return false;
            }
            next = b.end;
        }
        next == self.layers.len()
    }

    /// Bytes of activation passed from layer `i` to layer `i + 1`.
    pub fn intermediate_bytes(&self, i: usize) -> u64 {
        self.layers[i].output_bytes()
    }
}

/// Greedy segmentation: a block grows while it has at most
/// `max_block_layers` layers and the page need of its layer-block mapping
/// stays within `lbm_page_cap`.
pub fn segment_blocks(model: &ModelSpec, max_block_layers: usize, lbm_page_cap: u64, hw: &HardwareConfig) -> ModelSpec {
    let largest = largest_lwms(model, hw);
    segment_blocks_by(model, max_block_layers, lbm_page_cap, |r| {
        crate::mapper::lbm_footprint_pages(model, r, &largest, hw)
    })
}

pub(crate) fn segment_blocks_by(
    model: &ModelSpec,
    max_block_layers: usize,
    lbm_page_cap: u64,
    footprint: impl Fn(Range<usize>) -> u64,
) -> ModelSpec {
    let max_len = max_block_layers.max(1);
    let mut blocks = Vec::new();
    let mut start = 0;
    let n = model.layers.len();
    while start < n {
        let mut end = start + 1;
        while end < n && end + 1 - start <= max_len && footprint(start..end + 1) <= lbm_page_cap {
            end += 1;
        }
        blocks.push(LayerBlock { start, end });
        start = end;
    }
    ModelSpec { blocks, ..model.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn chain(dims: &[u64], m: u64) -> ModelSpec {
        let layers = dims.windows(2).enumerate().map(|(i, w)| LayerSpec::new(i, LayerKind::MatMul, m, w[1], w[0])).collect();
        ModelSpec::new("t", layers, None).unwrap()
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let layers = vec![LayerSpec::new(0, LayerKind::MatMul, 64, 128, 64), LayerSpec::new(1, LayerKind::MatMul, 64, 64, 96)];
        let err = ModelSpec::new("bad", layers, None).unwrap_err();
        assert_eq!(alloc::string::ToString::to_string(&err), "dimension mismatch at layer 1");
    }

    #[test]
    fn rejects_zero_dims_and_odd_elem() {
        let l = LayerSpec::new(0, LayerKind::Conv, 0, 4, 4);
        assert!(ModelSpec::new("z", vec![l], None).is_err());
        let l = LayerSpec::new(0, LayerKind::Conv, 4, 4, 4).with_elem_bytes(3);
        assert!(ModelSpec::new("e", vec![l], None).is_err());
    }

    #[test]
    fn tensor_sizes() {
        let l = LayerSpec::new(0, LayerKind::MatMul, 8, 16, 32).with_elem_bytes(2);
        assert_eq!(l.input_bytes(), 8 * 32 * 2);
        assert_eq!(l.weight_bytes(), 32 * 16 * 2);
        assert_eq!(l.output_bytes(), 8 * 16 * 2);
    }

    #[test]
    fn greedy_segmentation_by_length() {
        let m = chain(&[64, 64, 64, 64, 64], 64);
        let s = segment_blocks_by(&m, 2, 100, |_| 1);
        assert_eq!(s.blocks, vec![LayerBlock { start: 0, end: 2 }, LayerBlock { start: 2, end: 4 }]);
        assert!(s.blocks_partition_layers());
    }

    #[test]
    fn single_layer_single_block() {
        let m = chain(&[64, 64], 64);
        let s = segment_blocks(&m, 4, 96, &HardwareConfig::default());
        assert_eq!(s.blocks, vec![LayerBlock { start: 0, end: 1 }]);
    }

    #[test]
    fn huge_intermediate_splits_block() {
        // Layer 1 produces a 1024x1024 activation (32 pages); with a cap of
        // 30 pages no block can hold it.
        let hw = HardwareConfig::default();
        let m = chain(&[64, 64, 1024, 64], 1024);
        let largest = largest_lwms(&m, &hw);
        let fp = |r: Range<usize>| crate::mapper::lbm_footprint_pages(&m, r, &largest, &hw);
        assert!(fp(0..2) <= 30);
        assert!(fp(1..3) > 30);
        let s = segment_blocks(&m, 4, 30, &hw);
        assert!(s.blocks.iter().all(|b| !(b.contains(1) && b.contains(2))));
        assert!(s.blocks_partition_layers());
    }

    #[test]
    fn two_layer_file_is_one_block() {
        let m = chain(&[64, 128, 64], 64);
        let s = segment_blocks(&m, 4, 96, &HardwareConfig::default());
        assert_eq!(s.blocks.len(), 1);
    }
}
