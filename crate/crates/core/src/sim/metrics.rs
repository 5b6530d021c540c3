use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::scheduler::SchedulerMode;
use crate::{Cycle, Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: String,
    pub inferences: u64,
    /// Dispatch to completion, in cycles.
    pub mean_latency: f64,
    pub total_latency: u64,
    pub dram_read: u64,
    pub dram_write: u64,
    pub intermediate_dram: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub hit_rate: f64,
    pub lbm_layers: u64,
    pub lwm_layers: u64,
    pub downgrades: u64,
    pub wait_cycles: u64,
}

impl ModelMetrics {
    pub fn dram_bytes(&self) -> u64 {
        self.dram_read + self.dram_write
    }

    pub(crate) fn finish(&mut self) {
        self.mean_latency = if self.inferences == 0 { 0.0 } else { self.total_latency as f64 / self.inferences as f64 };
        self.hit_rate = hit_rate(self.cache_hits, self.cache_misses);
    }
}

fn hit_rate(hits: u64, misses: u64) -> f64 {
    if hits + misses == 0 {
        0.0
    } else {
        hits as f64 / (hits + misses) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub mode: SchedulerMode,
    pub seed: u64,
    pub cache_bytes: u64,
    pub colocated: usize,
    pub cycles: Cycle,
    pub events: u64,
    pub inferences: u64,
    pub dram_read: u64,
    pub dram_write: u64,
    pub intermediate_dram: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub hit_rate: f64,
    pub models: Vec<ModelMetrics>,
}

impl MetricsReport {
    pub fn dram_bytes(&self) -> u64 {
        self.dram_read + self.dram_write
    }

    /// Mean latency over all completed inferences.
    pub fn mean_latency(&self) -> f64 {
        let (lat, n) = self.models.iter().fold((0u64, 0u64), |(l, n), m| (l + m.total_latency, n + m.inferences));
        if n == 0 {
            0.0
        } else {
            lat as f64 / n as f64
        }
    }

    pub(crate) fn finish(&mut self) {
        for m in self.models.iter_mut() {
            m.finish();
        }
        self.inferences = self.models.iter().map(|m| m.inferences).sum();
        self.hit_rate = hit_rate(self.cache_hits, self.cache_misses);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    /// Reference mean latency over measured mean latency.
    pub speedup: f64,
    /// Percent of the reference's DRAM bytes saved.
    pub dram_reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub measured: SchedulerMode,
    pub reference: SchedulerMode,
    pub rows: Vec<ComparisonRow>,
    pub geomean_speedup: f64,
    pub dram_reduction_pct: f64,
}

fn reduction(reference: u64, measured: u64) -> f64 {
    if reference == 0 {
        0.0
    } else {
        100.0 * (reference as f64 - measured as f64) / reference as f64
    }
}

pub fn geometric_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    libm::exp(values.iter().map(|v| libm::log(*v)).sum::<f64>() / values.len() as f64)
}

/// Per-model speedups and DRAM reductions of `report` against `reference`.
/// Models without completed inferences in both runs are skipped.
pub fn compare(report: &MetricsReport, reference: &MetricsReport) -> Result<Comparison> {
    let names = |r: &MetricsReport| r.models.iter().map(|m| m.model.clone()).collect::<Vec<_>>();
    if names(report) != names(reference) {
        return Err(Error::ShapeMismatch("the two reports cover different models".into()));
    }
    let mut rows = Vec::new();
    for (m, r) in report.models.iter().zip(&reference.models) {
        if m.inferences == 0 || r.inferences == 0 {
            if m.inferences != r.inferences {
                return Err(Error::ShapeMismatch(alloc::format!("model {} completed in only one run", m.model)));
            }
            continue;
        }
        rows.push(ComparisonRow {
            model: m.model.clone(),
            speedup: r.mean_latency / m.mean_latency,
            dram_reduction_pct: reduction(r.dram_bytes(), m.dram_bytes()),
        });
    }
    let speedups: Vec<f64> = rows.iter().map(|r| r.speedup).collect();
    Ok(Comparison {
        measured: report.mode,
        reference: reference.mode,
        geomean_speedup: geometric_mean(&speedups),
        dram_reduction_pct: reduction(reference.dram_bytes(), report.dram_bytes()),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(lat: &[(u64, u64)], dram: u64) -> MetricsReport {
        let mut r = MetricsReport {
            scenario: "s".into(),
            mode: SchedulerMode::CamdnFull,
            seed: 1,
            cache_bytes: 0,
            colocated: 1,
            cycles: 0,
            events: 0,
            inferences: 0,
            dram_read: dram,
            dram_write: 0,
            intermediate_dram: 0,
            cache_hits: 0,
            cache_misses: 0,
            hit_rate: 0.0,
            models: lat
                .iter()
                .enumerate()
                .map(|(i, &(n, total))| ModelMetrics {
                    model: alloc::format!("m{i}"),
                    inferences: n,
                    total_latency: total,
                    dram_read: dram,
                    ..Default::default()
                })
                .collect(),
        };
        r.finish();
        r
    }

    #[test]
    fn identical_reports() {
        let a = report(&[(2, 400), (1, 50)], 100);
        let c = compare(&a, &a).unwrap();
        assert!(c.rows.iter().all(|r| r.speedup == 1.0));
        assert_eq!(c.geomean_speedup, 1.0);
    }

    #[test]
    fn halved_latency_is_2x() {
        let reference = report(&[(1, 200)], 100);
        let measured = report(&[(1, 100)], 60);
        let c = compare(&measured, &reference).unwrap();
        assert_eq!(c.rows[0].speedup, 2.0);
        assert!((c.dram_reduction_pct - 40.0).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        assert!(compare(&report(&[(1, 1)], 0), &report(&[(1, 1), (1, 1)], 0)).is_err());
    }

    #[test]
    fn geomean() {
        assert!((geometric_mean(&[2.0, 8.0]) - 4.0).abs() < 1e-12);
    }
}
