mod common;

use common::alg1;
use camdn_core::scheduler::{select_candidate, timeout_threshold};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn selection_matches_transcription_on_random_snapshots() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let s = alg1::random_snapshot(&mut rng, 16, 384);
        let (tables, view, mct) = alg1::to_tables(&s);
        let got = select_candidate(&tables, s.t_cur, &view, &mct, s.now, 0.2);
        if alg1::to_selection(&got) != alg1::select(&s) {
            mismatches += 1;
        }
        for t_ahead in [s.now, s.now + 1_000, s.now + 20_000, u64::MAX] {
            if tables.pred_avail_pages(Some(t_ahead), s.t_cur) != alg1::pred_avail_pages(&s, t_ahead, s.t_cur) {
                mismatches += 1;
            }
        }
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn unbounded_prediction_counts_every_other_running_task() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1_000 {
        let s = alg1::random_snapshot(&mut rng, 16, 384);
        let (tables, _, _) = alg1::to_tables(&s);
        let expect = s.idle as i64
            + (0..s.running.len())
                .filter(|&t| s.running[t] && t != s.t_cur)
                .map(|t| s.p_alloc[t] as i64 - s.p_next[t] as i64)
                .sum::<i64>();
        assert_eq!(tables.pred_avail_pages(None, s.t_cur), expect);
    }
}

#[test]
fn selected_lwm_fits_prediction_or_is_the_smallest() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2_000 {
        let mut s = alg1::random_snapshot(&mut rng, 16, 384);
        s.lbm_enabled = false;
        s.head = false;
        let (tables, view, mct) = alg1::to_tables(&s);
        let r = select_candidate(&tables, s.t_cur, &view, &mct, s.now, 0.2);
        let p_ahead = r.p_ahead.unwrap();
        assert!(r.p_cur as i64 <= p_ahead || r.p_cur == 0);
        assert_eq!(r.t_ahead, Some(timeout_threshold(s.now, s.layer_t_est, 0.2)));
        let bigger_fit = s.lwm_needs.iter().any(|&n| n > r.p_cur && n as i64 <= p_ahead);
        assert!(!bigger_fit);
    }
}
