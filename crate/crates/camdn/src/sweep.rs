//! Sweeps over cache size, co-located task count and scheduler mode.
//!
//! Cells run on a bounded pool of threads and share nothing mutable; results
//! are stored by cell index, so the output order never depends on timing.
//! Models are mapped once per distinct cache size.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use camdn_core::config::MIB;
use camdn_core::scheduler::SchedulerMode;
use camdn_core::sim::{compare, derive_seed, run, ModelEntry, MetricsReport};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::files::ScenarioPlan;

pub const THREADS_ENV: &str = "CAMDN_SIM_THREADS";

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub mode: SchedulerMode,
    pub cache_bytes: u64,
    pub colocated: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub cell: Cell,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Cells in row-major order: cache size, then co-located count, then mode.
/// The seed of a cell mixes the base seed with its co-located index only,
/// so cells differing in cache size or mode replay the same dispatch order.
pub fn cells(plan: &ScenarioPlan) -> Vec<Cell> {
    let caches: Vec<u64> =
        if plan.sweep.cache_mb.is_empty() { vec![plan.hw.cache_bytes] } else { plan.sweep.cache_mb.iter().map(|mb| mb * MIB).collect() };
    let colocated: Vec<Option<usize>> =
        if plan.sweep.colocated.is_empty() { vec![plan.colocated] } else { plan.sweep.colocated.iter().map(|c| Some(*c)).collect() };
    let modes = if plan.sweep.modes.is_empty() { vec![plan.mode] } else { plan.sweep.modes.clone() };
    let mut out = Vec::new();
    for &cache_bytes in &caches {
        for (ci, &c) in colocated.iter().enumerate() {
            for &mode in &modes {
                let seed = derive_seed(plan.seed, ci as u64);
                out.push(Cell { index: out.len(), mode, cache_bytes, colocated: c, seed });
            }
        }
    }
    out
}

/// Worker count: `CAMDN_SIM_THREADS` if set and positive, else the available
/// parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every cell. Configuration errors (an invalid cache size, say) stop
/// the sweep before any cell runs; a failing cell only records its error.
pub fn run_sweep(plan: &ScenarioPlan, threads: usize) -> Result<Vec<CellOutcome>> {
    let grid = cells(plan);
    let mut mapped: BTreeMap<u64, Vec<ModelEntry>> = BTreeMap::new();
    for c in &grid {
        if !mapped.contains_key(&c.cache_bytes) {
            let mut hw = plan.hw.clone();
            hw.cache_bytes = c.cache_bytes;
            hw.validate().map_err(|e| CliError::Config(format!("sweep cache size {} bytes: {e}", c.cache_bytes)))?;
            mapped.insert(c.cache_bytes, plan.entries(&hw));
        }
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CellOutcome>>> = Mutex::new(vec![None; grid.len()]);
    let workers = threads.clamp(1, grid.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = grid.get(i).copied() else { break };
                let mut hw = plan.hw.clone();
                hw.cache_bytes = cell.cache_bytes;
                let mut sc = plan.scenario(hw, mapped[&cell.cache_bytes].clone(), cell.mode, cell.seed);
                sc.colocated = cell.colocated;
                let outcome = match run(&sc) {
                    Ok(out) => CellOutcome { cell, report: Some(out.report), error: None },
                    Err(e) => CellOutcome { cell, report: None, error: Some(e.to_string()) },
                };
                results.lock().unwrap()[i] = Some(outcome);
            });
        }
    });
    Ok(results.into_inner().unwrap().into_iter().map(|o| o.expect("every cell ran")).collect())
}

/// The transparent-baseline cell sharing cache size and co-located count
/// with `cell`, if the sweep ran one.
pub fn reference_of<'a>(outcomes: &'a [CellOutcome], cell: &Cell) -> Option<&'a MetricsReport> {
    outcomes
        .iter()
        .find(|o| {
            o.cell.mode == SchedulerMode::Transparent && o.cell.cache_bytes == cell.cache_bytes && o.cell.colocated == cell.colocated
        })
        .and_then(|o| o.report.as_ref())
}

pub const SUMMARY_HEADER: [&str; 12] = [
    "cell",
    "mode",
    "cache_mb",
    "colocated",
    "seed",
    "status",
    "cycles",
    "inferences",
    "dram_bytes",
    "hit_rate",
    "mean_latency",
    "geomean_speedup",
];

/// One summary row per cell; `geomean_speedup` is against the matching
/// transparent-baseline cell when present.
pub fn summary_rows(outcomes: &[CellOutcome]) -> Vec<Vec<String>> {
    outcomes
        .iter()
        .map(|o| {
            let c = &o.cell;
            let mut row = vec![
                c.index.to_string(),
                c.mode.name().to_string(),
                (c.cache_bytes / MIB).to_string(),
                c.colocated.map_or(String::new(), |v| v.to_string()),
                c.seed.to_string(),
            ];
            match (&o.report, &o.error) {
                (Some(r), _) => {
                    let speedup = reference_of(outcomes, c)
                        .and_then(|reference| compare(r, reference).ok())
                        .map_or(String::new(), |cmp| format!("{:.6}", cmp.geomean_speedup));
                    row.extend([
                        "ok".to_string(),
                        r.cycles.to_string(),
                        r.inferences.to_string(),
                        r.dram_bytes().to_string(),
                        format!("{:.6}", r.hit_rate),
                        format!("{:.3}", r.mean_latency()),
                        speedup,
                    ]);
                }
                (None, err) => {
                    row.push(format!("error: {}", err.as_deref().unwrap_or("unknown")));
                    row.extend(std::iter::repeat_n(String::new(), 6));
                }
            }
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use camdn_core::workload::{LayerKind, LayerSpec, ModelSpec};
    use camdn_core::HardwareConfig;

    fn plan() -> ScenarioPlan {
        let model = ModelSpec::new("m", vec![LayerSpec::new(0, LayerKind::MatMul, 64, 64, 64)], None).unwrap();
        let mut p = ScenarioPlan::from_models("t", HardwareConfig::default(), vec![model], SchedulerMode::CamdnFull, 5);
        p.stop.inferences_per_instance = 2;
        p
    }

    #[test]
    fn grid_is_cartesian_and_seeds_follow_colocated_axis() {
        let mut p = plan();
        p.sweep.cache_mb = vec![4, 16];
        p.sweep.colocated = vec![1, 2];
        p.sweep.modes = vec![SchedulerMode::CamdnFull, SchedulerMode::Transparent];
        let g = cells(&p);
        assert_eq!(g.len(), 8);
        assert!(g.iter().enumerate().all(|(i, c)| c.index == i));
        assert_eq!(g[0].seed, g[4].seed);
        assert_ne!(g[0].seed, g[2].seed);
        assert_eq!(g[0].cache_bytes, 4 * MIB);
        assert_eq!(g[7].colocated, Some(2));
    }

    #[test]
    fn empty_axes_run_the_base_cell() {
        let p = plan();
        let g = cells(&p);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].cache_bytes, p.hw.cache_bytes);
        assert_eq!(g[0].mode, SchedulerMode::CamdnFull);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let mut p = plan();
        p.sweep.cache_mb = vec![4, 8];
        p.sweep.modes = vec![SchedulerMode::CamdnFull, SchedulerMode::Transparent];
        let a = run_sweep(&p, 1).unwrap();
        let b = run_sweep(&p, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|o| o.report.is_some()));
        assert!(reference_of(&a, &a[0].cell).is_some());
        assert_eq!(summary_rows(&a).len(), 4);
    }

    #[test]
    fn bad_cache_size_is_a_config_error() {
        let mut p = plan();
        p.sweep.cache_mb = vec![0];
        assert!(matches!(run_sweep(&p, 1), Err(CliError::Config(_))));
    }
}
