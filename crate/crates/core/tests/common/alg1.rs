//! Line-by-line transcription of the candidate selection algorithm over plain
//! arrays, plus a generator of random allocation snapshots.

use camdn_core::mapper::{generate_mct, CandidateKind, MappingCandidate, MappingCandidateTable};
use camdn_core::scheduler::{Choice, RuntimeAllocationTables, SelectionResult, TaskView};
use camdn_core::workload::{LayerKind, LayerSpec};
use camdn_core::HardwareConfig;
use rand::{Rng, RngCore};

pub const INF: u64 = u64::MAX;

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t_next: Vec<u64>,
    pub p_next: Vec<u64>,
    pub p_alloc: Vec<u64>,
    pub running: Vec<bool>,
    pub idle: u64,
    pub total: u64,
    pub t_cur: usize,
    pub now: u64,
    pub lbm_enabled: bool,
    pub head: bool,
    pub block_t_est: u64,
    pub layer_t_est: u64,
    pub lwm_needs: Vec<u64>,
    pub lbm_need: u64,
}

/// `predAvailPages(T_ahead, t_cur)`.
pub fn pred_avail_pages(s: &Snapshot, t_ahead: u64, t_cur: usize) -> i64 {
    let mut p_ahead = s.idle as i64;
    for t_i in 0..s.running.len() {
        if !s.running[t_i] {
            continue;
        }
        if t_i != t_cur && s.t_next[t_i] < t_ahead {
            p_ahead += s.p_alloc[t_i] as i64 - s.p_next[t_i] as i64;
        }
    }
    p_ahead
}

/// `T_cur + T_est x 0.2`, rounded up to a whole cycle.
fn threshold(now: u64, t_est: u64) -> u64 {
    now + (t_est * 2).div_ceil(10)
}

/// Oracle result: `(lbm?, lwm index, P_cur, T_ahead, P_ahead)`; `T_ahead` is
/// `INF` and `P_ahead` is `None` on the early return.
pub type Selection = (bool, usize, u64, u64, Option<i64>);

pub fn select(s: &Snapshot) -> Selection {
    if s.lbm_enabled {
        return (true, 0, s.lbm_need, INF, None);
    } else if s.head {
        let t_ahead = threshold(s.now, s.block_t_est);
        let p_ahead = pred_avail_pages(s, t_ahead, s.t_cur);
        if (s.lbm_need as i64) < p_ahead {
            return (true, 0, s.lbm_need, t_ahead, Some(p_ahead));
        }
    }
    let t_ahead = threshold(s.now, s.layer_t_est);
    let p_ahead = pred_avail_pages(s, t_ahead, s.t_cur);
    let mut m_cur = 0usize;
    for i in 0..s.lwm_needs.len() {
        if s.lwm_needs[m_cur] < s.lwm_needs[i] && (s.lwm_needs[i] as i64) <= p_ahead {
            m_cur = i;
        }
    }
    (false, m_cur, s.lwm_needs[m_cur], t_ahead, Some(p_ahead))
}

pub fn to_selection(r: &SelectionResult) -> Selection {
    let (lbm, idx) = match r.choice {
        Choice::Lbm => (true, 0),
        Choice::Lwm(i) => (false, i),
    };
    (lbm, idx, r.p_cur, r.t_ahead.unwrap_or(INF), r.p_ahead)
}

/// Random snapshot with at most `max_tasks` tasks over `total` pages.
pub fn random_snapshot(rng: &mut impl RngCore, max_tasks: usize, total: u64) -> Snapshot {
    let tasks = rng.random_range(1..=max_tasks);
    let now = rng.random_range(0..1_000_000u64);
    let mut p_alloc = vec![0u64; tasks];
    let mut left = total;
    for p in p_alloc.iter_mut() {
        if rng.random_bool(0.7) {
            *p = rng.random_range(0..=left.min(total / 2));
            left -= *p;
        }
    }
    let running: Vec<bool> = (0..tasks).map(|t| p_alloc[t] > 0 || rng.random_bool(0.5)).collect();
    let t_next = (0..tasks).map(|_| now.saturating_sub(5_000) + rng.random_range(0..40_000)).collect();
    let p_next = (0..tasks).map(|_| rng.random_range(0..=total / 2)).collect();
    let mut needs: Vec<u64> = (0..rng.random_range(1..=6)).map(|_| rng.random_range(0..=total)).collect();
    needs[0] = 0;
    needs.sort_unstable();
    Snapshot {
        t_next,
        p_next,
        p_alloc,
        running,
        idle: left,
        total,
        t_cur: rng.random_range(0..tasks),
        now,
        lbm_enabled: rng.random_bool(0.15),
        head: rng.random_bool(0.5),
        block_t_est: rng.random_range(0..200_000),
        layer_t_est: rng.random_range(0..50_000),
        lwm_needs: needs,
        lbm_need: rng.random_range(0..=total),
    }
}

/// The snapshot in the implementation's types.
pub fn to_tables(s: &Snapshot) -> (RuntimeAllocationTables, TaskView, MappingCandidateTable) {
    let mut t = RuntimeAllocationTables::new(s.running.len(), s.total);
    t.t_next.clone_from(&s.t_next);
    t.p_next.clone_from(&s.p_next);
    t.p_alloc.clone_from(&s.p_alloc);
    t.running.clone_from(&s.running);
    t.idle_pages = s.idle;
    let view = TaskView { lbm_enabled: s.lbm_enabled, is_block_head: s.head, block_t_est: s.block_t_est, layer_t_est: s.layer_t_est };
    (t, view, table_with_needs(&s.lwm_needs, s.lbm_need))
}

pub fn table_with_needs(needs: &[u64], lbm: u64) -> MappingCandidateTable {
    let hw = HardwareConfig::default();
    let mut t = generate_mct(&LayerSpec::new(0, LayerKind::MatMul, 64, 64, 64), &hw, &[0]);
    let proto = t.lwms[0].clone();
    t.lwms = needs.iter().map(|&p| MappingCandidate { p_need: p, ..proto.clone() }).collect();
    t.lbm = MappingCandidate { p_need: lbm, kind: CandidateKind::Lbm, ..proto };
    t
}
