use camdn_core::scheduler::SchedulerMode;
use camdn_core::sim::{model_queue, run, ModelEntry, Scenario};
use camdn_core::workload::{LayerKind, LayerSpec, ModelSpec};
use camdn_core::HardwareConfig;
use proptest::prelude::*;

fn chain(name: &str, kind: LayerKind, m: u64, dims: &[u64]) -> ModelSpec {
    let layers = dims.windows(2).enumerate().map(|(i, w)| LayerSpec::new(i, kind, m, w[1], w[0])).collect();
    ModelSpec::new(name, layers, None).unwrap()
}

fn scenario(mode: SchedulerMode, seed: u64) -> Scenario {
    let hw = HardwareConfig { cache_bytes: 4 << 20, ..HardwareConfig::default() };
    let models = [
        chain("a", LayerKind::Conv, 256, &[128, 512, 128, 512]),
        chain("b", LayerKind::DwConv, 512, &[64, 256, 64]),
        chain("c", LayerKind::MatMul, 128, &[512, 512, 512]),
    ];
    let entries = models.iter().map(|m| ModelEntry::map(m, &hw, 2)).collect();
    let mut sc = Scenario::new("det", hw, entries, mode, seed);
    sc.stop.inferences_per_instance = 4;
    sc.decision_log = true;
    sc.trace = true;
    sc
}

#[test]
fn repeated_runs_are_identical_in_every_mode() {
    for mode in SchedulerMode::ALL {
        let sc = scenario(mode, 9);
        let a = run(&sc).unwrap();
        let b = run(&sc).unwrap();
        assert_eq!(a, b, "{mode:?}");
        assert!(a.report.inferences > 0);
    }
}

#[test]
fn dispatch_order_depends_on_seed_only() {
    let a = scenario(SchedulerMode::CamdnFull, 1);
    let b = scenario(SchedulerMode::Transparent, 1);
    let c = scenario(SchedulerMode::CamdnFull, 2);
    assert_eq!(model_queue(&a, 50), model_queue(&b, 50));
    assert_ne!(model_queue(&a, 50), model_queue(&c, 50));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn reruns_match_for_any_seed(seed in any::<u64>(), colocated in 1usize..=16) {
        let mut sc = scenario(SchedulerMode::CamdnFull, seed);
        sc.colocated = Some(colocated);
        sc.stop.inferences_per_instance = 2;
        prop_assert_eq!(run(&sc).unwrap(), run(&sc).unwrap());
    }
}
