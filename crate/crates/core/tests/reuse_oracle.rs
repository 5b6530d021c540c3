mod common;

use camdn_core::config::{KIB, MIB};
use camdn_core::mapper::generate_mct;
use camdn_core::workload::{reuse_stats, DistanceBucket, LayerKind, LayerSpec, ModelSpec, ReuseCountBucket};
use camdn_core::HardwareConfig;
use common::{access_stream, Operand};
use proptest::prelude::*;

/// Element-level brute force over the sequential access stream of the whole
/// model. Tensor ids: model input, then per layer its weights and output.
fn brute_force(model: &ModelSpec, hw: &HardwareConfig) -> ([u64; 4], [u64; 4]) {
    let layers = &model.layers;
    let e = layers[0].elem_bytes;
    // accesses per element
    let mut counts: Vec<Vec<u64>> = Vec::new();
    counts.push(vec![0; (layers[0].m * layers[0].k) as usize]);
    for l in layers {
        counts.push(vec![0; (l.k * l.n) as usize]);
        counts.push(vec![0; (l.m * l.n) as usize]);
    }
    let mut dist = [0u64; 4];
    let mut pos = 0u64;
    let mut write_end: Vec<u64> = Vec::new();
    for (i, l) in layers.iter().enumerate() {
        let t = generate_mct(l, hw, &[0]).lwms[0].loop_table;
        let f = t.factors;
        let stream = access_stream(l, t.order, f.tm as usize, f.tn as usize, f.tk as usize);
        let in_id = if i == 0 { 0 } else { 2 * i };
        let (w_id, o_id) = (2 * i + 1, 2 * i + 2);
        let mut first = vec![true; (l.m * l.k) as usize];
        let mut new_write_end = vec![0u64; (l.m * l.n) as usize];
        for a in &stream {
            let (id, width) = match a.operand {
                Operand::Input => (in_id, l.k as usize),
                Operand::Weights => (w_id, l.n as usize),
                Operand::Output => (o_id, l.n as usize),
            };
            let bytes = (a.rows.len() * a.cols.len()) as u64 * e;
            for r in a.rows.clone() {
                for c in a.cols.clone() {
                    let at = r * width + c;
                    counts[id][at] += 1;
                    if a.operand == Operand::Input && i > 0 && first[at] {
                        first[at] = false;
                        dist[DistanceBucket::of(pos - write_end[at]) as usize] += e;
                    }
                    if a.operand == Operand::Output && a.write {
                        new_write_end[at] = pos + bytes;
                    }
                }
            }
            pos += bytes;
        }
        write_end = new_write_end;
    }
    let mut hist = [0u64; 4];
    for c in counts.iter().flatten() {
        hist[ReuseCountBucket::of(*c) as usize] += e;
    }
    (hist, dist)
}

fn chain(dims: &[u64], m: u64) -> ModelSpec {
    let layers = dims.windows(2).enumerate().map(|(i, w)| LayerSpec::new(i, LayerKind::MatMul, m, w[1], w[0])).collect();
    ModelSpec::new("chain", layers, None).unwrap()
}

#[test]
fn large_producer_weights_push_distance_over_2mb() {
    let hw = HardwareConfig::default();
    // layer 0 weights: 2048 x 1024 = 2MB, mostly streamed after its first
    // output tiles are written
    let m = chain(&[2048, 1024, 256], 256);
    assert_eq!(m.layers[0].weight_bytes(), 2 * MIB);
    let s = reuse_stats(&m, &hw);
    assert!(s.intermediate_bytes_by_reuse_distance[3] > 0, "{:?}", s.intermediate_bytes_by_reuse_distance);
    let (counts, dist) = brute_force(&m, &hw);
    assert_eq!(s.bytes_by_reuse_count, counts);
    assert_eq!(s.intermediate_bytes_by_reuse_distance, dist);
}

#[test]
fn histograms_normalize() {
    let hw = HardwareConfig::default();
    let s = reuse_stats(&chain(&[128, 256, 128, 512], 256), &hw);
    let a: f64 = s.pct_by_reuse_count.iter().sum();
    let b: f64 = s.pct_intermediate_by_reuse_distance.iter().sum();
    assert!((a - 100.0).abs() < 0.01);
    assert!((b - 100.0).abs() < 0.01);
    let _ = KIB;
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn matches_brute_force(dims in prop::collection::vec(prop::sample::select(vec![16u64, 32, 48, 64, 96, 128, 192]), 2..=5),
                           m in prop::sample::select(vec![8u64, 32, 64, 100])) {
        let hw = HardwareConfig::default();
        let model = chain(&dims, m);
        let s = reuse_stats(&model, &hw);
        let (counts, dist) = brute_force(&model, &hw);
        prop_assert_eq!(s.bytes_by_reuse_count, counts);
        prop_assert_eq!(s.intermediate_bytes_by_reuse_distance, dist);
    }
}
