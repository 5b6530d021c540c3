//! Instrumented runs: the engine checks page conservation, page
//! exclusivity, bypass purity and multicast byte conservation after every
//! event and aborts with an invariant error on the first violation.

mod common;

use camdn_core::scheduler::SchedulerMode;
use camdn_core::sim::run;

#[test]
fn ten_million_instrumented_events_without_violation() {
    let mut events = 0u64;
    let mut multicast = false;
    let mut seed = 0;
    while events < 10_000_000 {
        let sc = common::random_scenario(seed);
        multicast |= sc.replication > 1;
        let out = run(&sc).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert!(out.report.inferences > 0);
        events += out.report.events;
        seed += 1;
    }
    assert!(multicast);
}

#[test]
fn transparent_runs_close_their_counters() {
    for seed in 0..3 {
        let mut sc = common::random_scenario(100 + seed);
        sc.mode = SchedulerMode::Transparent;
        sc.stop.inferences_per_instance = 3;
        run(&sc).unwrap();
    }
}
