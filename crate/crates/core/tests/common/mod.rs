//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod alg1;

use camdn_core::mapper::{CacheMapTable, LoopOrder, LoopTable, MappingCandidate, Placement, TensorMap, TensorRole};
use camdn_core::workload::LayerSpec;
use camdn_core::scheduler::SchedulerMode;
use camdn_core::sim::{ModelEntry, Scenario};
use camdn_core::workload::{LayerKind, ModelSpec};
use camdn_core::HardwareConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// LWM candidate with tiling `t` whose tensors are cached where `cached`
/// says so, each with a window covering its reuse.
pub fn candidate(layer: &LayerSpec, order: LoopOrder, t: (u64, u64, u64), cached: [bool; 3]) -> MappingCandidate {
    let hw = HardwareConfig::default();
    let mut cmap = CacheMapTable::all_bypassed();
    for role in TensorRole::ALL {
        if cached[role.index()] {
            let table = LoopTable::new(order, t.0, t.1, t.2);
            *cmap.get_mut(role) = TensorMap {
                role,
                placement: Placement::Cached,
                intermediate: false,
                vc_base: 0,
                bytes: table.reuse_window_bytes(layer, role).max(1),
            };
        }
    }
    MappingCandidate::layer_wise(layer, &hw, LoopTable::new(order, t.0, t.1, t.2), cmap)
}

/// Replays the tile loop nest of `cand` element by element and counts DRAM
/// bytes. Each operand's transfer sits in the body of the innermost loop it
/// depends on, so it repeats whenever that loop or any loop outside it
/// advances. Cached
/// tensors go through an unbounded cache that holds exactly their elements;
/// intermediates never touch DRAM.
pub fn trace_dram_bytes(layer: &LayerSpec, cand: &MappingCandidate) -> u64 {
    let (m, n, k, e) = (layer.m as usize, layer.n as usize, layer.k as usize, layer.elem_bytes);
    let f = cand.loop_table.factors;
    let (tm, tn, tk) = (f.tm as usize, f.tn as usize, f.tk as usize);
    let (nm, nn, nk) = (m.div_ceil(tm), n.div_ceil(tn), k.div_ceil(tk));
    let order: Vec<usize> = match cand.loop_table.order {
        LoopOrder::OutputStationary => vec![0, 1, 2],
        LoopOrder::WeightStationary => vec![1, 2, 0],
        LoopOrder::InputStationary => vec![0, 2, 1],
    };
    let trips = [nm, nn, nk];
    let mut steps = Vec::new();
    for a in 0..trips[order[0]] {
        for b in 0..trips[order[1]] {
            for c in 0..trips[order[2]] {
                let mut idx = [0usize; 3];
                idx[order[0]] = a;
                idx[order[1]] = b;
                idx[order[2]] = c;
                steps.push(idx);
            }
        }
    }
    let map = |r: TensorRole| cand.cmap.get(r);
    let mut in_cache = [vec![false; m * k], vec![false; k * n], vec![false; m * n]];
    let mut visited_out = vec![false; nm * nn];
    let mut dram = 0u64;
    let span = |i: usize, t: usize, d: usize| (i * t)..((i + 1) * t).min(d);

    let load = |role: TensorRole, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, width: usize, cache: &mut Vec<bool>| -> u64 {
        let mp = map(role);
        if mp.intermediate {
            return 0;
        }
        let mut bytes = 0;
        for r in rows {
            for c in cols.clone() {
                let at = r * width + c;
                match mp.placement {
                    Placement::Bypassed => bytes += e,
                    Placement::Cached => {
                        if !cache[at] {
                            cache[at] = true;
                            bytes += e;
                        }
                    }
                }
            }
        }
        bytes
    };

    // loop counters in nesting order, outermost first
    let counters = |idx: &[usize; 3]| [idx[order[0]], idx[order[1]], idx[order[2]]];
    let pos = |d: usize| order.iter().position(|x| *x == d).unwrap();
    let depth = |a: usize, b: usize| pos(a).max(pos(b));
    let (d_in, d_w, d_out) = (depth(0, 2), depth(2, 1), depth(0, 1));
    let moved = |prev: &Option<[usize; 3]>, cur: &[usize; 3], depth: usize| match prev {
        None => true,
        Some(p) => counters(p)[..=depth] != counters(cur)[..=depth],
    };
    let mut prev: Option<[usize; 3]> = None;
    for (s, idx) in steps.iter().enumerate() {
        let [im, inn, ik] = *idx;
        if moved(&prev, idx, d_in) {
            dram += load(TensorRole::Input, span(im, tm, m), span(ik, tk, k), k, &mut in_cache[0]);
        }
        if moved(&prev, idx, d_w) {
            dram += load(TensorRole::Weights, span(ik, tk, k), span(inn, tn, n), n, &mut in_cache[1]);
        }
        let slot = im * nn + inn;
        let out = map(TensorRole::Output);
        let tile_bytes = (span(im, tm, m).len() * span(inn, tn, n).len()) as u64 * e;
        if moved(&prev, idx, d_out) {
            if visited_out[slot] && !out.intermediate && out.placement == Placement::Bypassed {
                dram += tile_bytes;
            }
            visited_out[slot] = true;
        }
        let leaving = steps.get(s + 1).map_or(true, |nx| moved(&Some(*idx), nx, d_out));
        if leaving && !out.intermediate && out.placement == Placement::Bypassed {
            dram += tile_bytes;
        }
        prev = Some(*idx);
    }
    let out = map(TensorRole::Output);
    if !out.intermediate && out.placement == Placement::Cached {
        dram += layer.output_bytes();
    }
    dram
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    Input,
    Weights,
    Output,
}

/// One tile transfer: operand, whether it writes, and the element rectangle
/// `rows x cols` in the operand's row-major matrix.
#[derive(Debug, Clone)]
pub struct Access {
    pub operand: Operand,
    pub write: bool,
    pub rows: std::ops::Range<usize>,
    pub cols: std::ops::Range<usize>,
}

/// Access stream of one layer: per step input read, weight read, partial-sum
/// read on output revisits, then the output write when the output block is
/// left. Transfers repeat whenever the loop they sit in is re-entered.
pub fn access_stream(layer: &LayerSpec, order: LoopOrder, tm: usize, tn: usize, tk: usize) -> Vec<Access> {
    let (m, n, k) = (layer.m as usize, layer.n as usize, layer.k as usize);
    let perm: [usize; 3] = match order {
        LoopOrder::OutputStationary => [0, 1, 2],
        LoopOrder::WeightStationary => [1, 2, 0],
        LoopOrder::InputStationary => [0, 2, 1],
    };
    let trips = [m.div_ceil(tm), n.div_ceil(tn), k.div_ceil(tk)];
    let mut iters: Vec<([usize; 3], [usize; 3])> = Vec::new();
    for a in 0..trips[perm[0]] {
        for b in 0..trips[perm[1]] {
            for c in 0..trips[perm[2]] {
                let mut idx = [0; 3];
                idx[perm[0]] = a;
                idx[perm[1]] = b;
                idx[perm[2]] = c;
                iters.push((idx, [a, b, c]));
            }
        }
    }
    let level = |dims: [usize; 2]| {
        let p = |d: usize| perm.iter().position(|x| *x == d).unwrap();
        p(dims[0]).max(p(dims[1]))
    };
    let (li, lw, lo) = (level([0, 2]), level([2, 1]), level([0, 1]));
    let r = |i: usize, t: usize, d: usize| (i * t)..((i + 1) * t).min(d);
    let mut seen_out = std::collections::HashSet::new();
    let mut out = Vec::new();
    for s in 0..iters.len() {
        let (idx, ctr) = iters[s];
        let changed = |lvl: usize| s == 0 || iters[s - 1].1[..=lvl] != ctr[..=lvl];
        if changed(li) {
            out.push(Access { operand: Operand::Input, write: false, rows: r(idx[0], tm, m), cols: r(idx[2], tk, k) });
        }
        if changed(lw) {
            out.push(Access { operand: Operand::Weights, write: false, rows: r(idx[2], tk, k), cols: r(idx[1], tn, n) });
        }
        if changed(lo) && !seen_out.insert((idx[0], idx[1])) {
            out.push(Access { operand: Operand::Output, write: false, rows: r(idx[0], tm, m), cols: r(idx[1], tn, n) });
        }
        let leaving = s + 1 == iters.len() || iters[s + 1].1[..=lo] != ctr[..=lo];
        if leaving {
            out.push(Access { operand: Operand::Output, write: true, rows: r(idx[0], tm, m), cols: r(idx[1], tn, n) });
        }
    }
    out
}

const KINDS: [LayerKind; 4] = [LayerKind::Conv, LayerKind::DwConv, LayerKind::MatMul, LayerKind::LstmCell];

fn random_model(rng: &mut ChaCha8Rng, name: String) -> ModelSpec {
    let kind = KINDS[rng.random_range(0..KINDS.len())];
    let m = 64 * rng.random_range(1..=8u64);
    let mut dims = vec![64 * rng.random_range(1..=8u64)];
    for _ in 0..rng.random_range(2..=6) {
        dims.push(64 * rng.random_range(1..=12u64));
    }
    let layers = dims.windows(2).enumerate().map(|(i, w)| LayerSpec::new(i, kind, m, w[1], w[0])).collect();
    ModelSpec::new(name, layers, None).unwrap()
}

/// Randomized instrumented multi-tenant scenario.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hw = HardwareConfig::default();
    hw.cache_bytes = [4u64, 8, 16][rng.random_range(0..3)] << 20;
    let models = (0..rng.random_range(2..=6)).map(|i| random_model(&mut rng, format!("r{i}"))).collect::<Vec<_>>();
    let entries = models.iter().map(|m| ModelEntry::map(m, &hw, rng.random_range(1..=3))).collect();
    let mode = [SchedulerMode::CamdnFull, SchedulerMode::CamdnHwOnly][rng.random_range(0..2)];
    let mut sc = Scenario::new(format!("conservation-{seed}"), hw, entries, mode, seed);
    sc.replication = [1, 1, 2, 4][rng.random_range(0..4)];
    sc.colocated = Some(rng.random_range(1..=16 / sc.replication as usize));
    sc.lbm = rng.random_bool(0.8);
    sc.stop.inferences_per_instance = 20;
    sc.instrumented = true;
    sc
}
