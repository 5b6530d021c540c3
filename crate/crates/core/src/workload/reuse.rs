//! Reuse statistics of a model executed layer by layer with its streaming
//! (no cache) mapping.
//!
//! The access stream of a layer walks its tile loop nest. At every step the
//! input tile is read if it differs from the previous step's, then the weight
//! tile likewise, then the output tile's partial sums are read back if it is
//! being revisited; when the next step moves to another output tile (or the
//! layer ends) the output tile is written.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::config::{KIB, MIB};
use crate::mapper::{generate_mct, tile_extent, Dim, LoopTable, TensorRole};
use crate::workload::ModelSpec;
use crate::HardwareConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReuseCountBucket {
    Once,
    Twice,
    ThreeToFour,
    FiveOrMore,
}

impl ReuseCountBucket {
    pub fn of(count: u64) -> Self {
        match count {
            0 | 1 => Self::Once,
            2 => Self::Twice,
            3 | 4 => Self::ThreeToFour,
            _ => Self::FiveOrMore,
        }
    }

    pub const LABELS: [&'static str; 4] = ["1", "2", "3-4", ">=5"];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceBucket {
    Under256K,
    To1M,
    To2M,
    Over2M,
}

/// Lower bounds of the distance buckets `<256KB, 256KB-1MB, 1-2MB, >=2MB`.
pub const DISTANCE_BUCKETS: [u64; 4] = [0, 256 * KIB, MIB, 2 * MIB];

impl DistanceBucket {
    pub fn of(distance: u64) -> Self {
        if distance >= DISTANCE_BUCKETS[3] {
            Self::Over2M
        } else if distance >= DISTANCE_BUCKETS[2] {
            Self::To2M
        } else if distance >= DISTANCE_BUCKETS[1] {
            Self::To1M
        } else {
            Self::Under256K
        }
    }

    pub const LABELS: [&'static str; 4] = ["<256KB", "256KB-1MB", "1MB-2MB", ">=2MB"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseStats {
    /// Bytes per reuse-count bucket (accesses per byte within one inference).
    pub bytes_by_reuse_count: [u64; 4],
    /// Bytes of intermediate activations per reuse-distance bucket.
    pub intermediate_bytes_by_reuse_distance: [u64; 4],
    pub pct_by_reuse_count: [f64; 4],
    pub pct_intermediate_by_reuse_distance: [f64; 4],
}

fn percentages(bytes: &[u64; 4]) -> [f64; 4] {
    let total: u64 = bytes.iter().sum();
    if total == 0 {
        return [0.0; 4];
    }
    bytes.map(|b| b as f64 * 100.0 / total as f64)
}

/// Tile-level reuse statistics. The distance histogram is empty (all zero)
/// for single-layer models.
pub fn reuse_stats(model: &ModelSpec, hw: &HardwareConfig) -> ReuseStats {
    let tables: Vec<LoopTable> =
        model.layers.iter().map(|l| generate_mct(l, hw, &[0]).lwms[0].loop_table).collect();

    let mut counts = [0u64; 4];
    let n = model.layers.len();
    for (i, (layer, t)) in model.layers.iter().zip(&tables).enumerate() {
        let add = |counts: &mut [u64; 4], c: u64, bytes: u64| counts[ReuseCountBucket::of(c) as usize] += bytes;
        if i == 0 {
            add(&mut counts, t.reload_factor(layer, TensorRole::Input), layer.input_bytes());
        }
        add(&mut counts, t.reload_factor(layer, TensorRole::Weights), layer.weight_bytes());
        let visits = t.reload_factor(layer, TensorRole::Output);
        let mut out = 2 * visits - 1;
        if i + 1 < n {
            out += tables[i + 1].reload_factor(&model.layers[i + 1], TensorRole::Input);
        }
        add(&mut counts, out, layer.output_bytes());
    }

    let mut dist = [0u64; 4];
    let mut pos = 0u64;
    let mut last_writes: Option<(Vec<u64>, u64, u64)> = None;
    for (layer, t) in model.layers.iter().zip(&tables) {
        let e = layer.elem_bytes;
        let f = t.factors;
        let (nm, nn, nk) = (t.trips(layer, Dim::M), t.trips(layer, Dim::N), t.trips(layer, Dim::K));
        let mut first_read = vec![true; (nm * nk) as usize];
        let mut writes = vec![0u64; (nm * nn) as usize];
        let mut visited = vec![false; (nm * nn) as usize];
        let steps = t.steps(layer);
        let (d_in, d_w, d_out) =
            (t.visit_depth(TensorRole::Input), t.visit_depth(TensorRole::Weights), t.visit_depth(TensorRole::Output));
        for (s, step) in steps.iter().enumerate() {
            let prev = if s > 0 { Some(&steps[s - 1]) } else { None };
            let [im, inn, ik] = step.tile;
            let tm = tile_extent(layer.m, f.tm, im);
            let tn = tile_extent(layer.n, f.tn, inn);
            let tk = tile_extent(layer.k, f.tk, ik);
            if step.enters(prev, d_in) {
                let slot = (im * nk + ik) as usize;
                if first_read[slot] {
                    first_read[slot] = false;
                    if let Some((pw, ptm, ptn)) = &last_writes {
                        overlap_distances(pw, *ptm, *ptn, layer.k, im * f.tm, tm, ik * f.tk, tk, pos, e, &mut dist);
                    }
                }
                pos += tm * tk * e;
            }
            if step.enters(prev, d_w) {
                pos += tk * tn * e;
            }
            let out_slot = (im * nn + inn) as usize;
            if step.enters(prev, d_out) {
                if visited[out_slot] {
                    pos += tm * tn * e;
                }
                visited[out_slot] = true;
            }
            let leaving = steps.get(s + 1).map_or(true, |nx| nx.enters(Some(step), d_out));
            if leaving {
                pos += tm * tn * e;
                writes[out_slot] = pos;
            }
        }
        last_writes = Some((writes, f.tm, f.tn));
    }

    ReuseStats {
        bytes_by_reuse_count: counts,
        intermediate_bytes_by_reuse_distance: dist,
        pct_by_reuse_count: percentages(&counts),
        pct_intermediate_by_reuse_distance: percentages(&dist),
    }
}

/// Adds the bytes of the consumer tile `rows x cols` (read at `read_pos`)
/// to the distance histogram, split over the producer tiles they came from.
#[allow(clippy::too_many_arguments)]
fn overlap_distances(
    writes: &[u64],
    ptm: u64,
    ptn: u64,
    cols_total: u64,
    r0: u64,
    rows: u64,
    c0: u64,
    cols: u64,
    read_pos: u64,
    elem: u64,
    dist: &mut [u64; 4],
) {
    let pnn = cols_total.div_ceil(ptn);
    let (r1, c1) = (r0 + rows, c0 + cols);
    for pm in r0 / ptm..=(r1 - 1) / ptm {
        let ro = r1.min((pm + 1) * ptm) - r0.max(pm * ptm);
        for pn in c0 / ptn..=(c1 - 1) / ptn {
            let co = c1.min((pn + 1) * ptn) - c0.max(pn * ptn);
            let w = writes[(pm * pnn + pn) as usize];
            dist[DistanceBucket::of(read_pos - w) as usize] += ro * co * elem;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{LayerKind, LayerSpec};

    #[test]
    fn single_small_layer_all_once() {
        let hw = HardwareConfig::default();
        let m = ModelSpec::new("one", vec![LayerSpec::new(0, LayerKind::MatMul, 64, 64, 64)], None).unwrap();
        let s = reuse_stats(&m, &hw);
        assert_eq!(s.pct_by_reuse_count[0], 100.0);
        assert_eq!(s.intermediate_bytes_by_reuse_distance, [0; 4]);
    }

    #[test]
    fn buckets() {
        assert_eq!(ReuseCountBucket::of(1), ReuseCountBucket::Once);
        assert_eq!(ReuseCountBucket::of(4), ReuseCountBucket::ThreeToFour);
        assert_eq!(ReuseCountBucket::of(9), ReuseCountBucket::FiveOrMore);
        assert_eq!(DistanceBucket::of(256 * KIB), DistanceBucket::To1M);
        assert_eq!(DistanceBucket::of(2 * MIB), DistanceBucket::Over2M);
    }
}
