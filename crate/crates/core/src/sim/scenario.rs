use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::mapper::{map_model, MappingOptions, ModelMapping};
use crate::scheduler::SchedulerMode;
use crate::workload::ModelSpec;
use crate::{Error, HardwareConfig, Result};

/// When a run ends: after the dispatch queue drains or at `max_cycles`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopRule {
    pub inferences_per_instance: u64,
    /// Overrides `inferences_per_instance * instances` when set.
    pub total_inferences: Option<u64>,
    pub max_cycles: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self { inferences_per_instance: 100, total_inferences: None, max_cycles: 1_000_000_000 }
    }
}

/// A model of the pool with its precomputed mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEntry {
    pub model: ModelSpec,
    pub mapping: ModelMapping,
    pub instances: u32,
}

impl ModelEntry {
    pub fn map(model: &ModelSpec, hw: &HardwareConfig, instances: u32) -> Self {
        let (model, mapping) = map_model(model, hw, &MappingOptions::defaults(hw));
        Self { model, mapping, instances }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub hw: HardwareConfig,
    pub models: Vec<ModelEntry>,
    pub mode: SchedulerMode,
    pub seed: u64,
    pub stop: StopRule,
    /// Tasks running at once; defaults to every core group, and is capped by
    /// the number of core groups. Each task draws its models from the pool.
    pub colocated: Option<usize>,
    /// Cores per task. Above one, a task's cores run in lockstep and share
    /// reads by multicast.
    pub replication: u32,
    /// Allows layer-block mappings.
    pub lbm: bool,
    /// Checks conservation invariants at every event.
    pub instrumented: bool,
    pub trace: bool,
    pub decision_log: bool,
}

impl Scenario {
    pub fn new(name: impl Into<String>, hw: HardwareConfig, models: Vec<ModelEntry>, mode: SchedulerMode, seed: u64) -> Self {
        Self {
            name: name.into(),
            hw,
            models,
            mode,
            seed,
            stop: StopRule::default(),
            colocated: None,
            replication: 1,
            lbm: true,
            instrumented: false,
            trace: false,
            decision_log: false,
        }
    }

    pub fn total_instances(&self) -> u64 {
        self.models.iter().map(|m| m.instances as u64).sum()
    }

    pub fn slots(&self) -> usize {
        let groups = self.hw.num_npus / self.replication.max(1) as usize;
        let want = self.colocated.unwrap_or(groups);
        want.min(groups)
    }

    pub fn total_inferences(&self) -> u64 {
        self.stop.total_inferences.unwrap_or(self.stop.inferences_per_instance * self.total_instances())
    }

    pub fn validate(&self) -> Result<()> {
        self.hw.validate()?;
        let bad = |s: &str| Err(Error::InvalidScenario(s.into()));
        if self.total_instances() == 0 {
            return bad("at least one model instance is required");
        }
        if self.replication == 0 || self.replication as usize > self.hw.num_npus {
            return bad("replication must be between 1 and the number of NPUs");
        }
        if self.slots() == 0 {
            return bad("no task slot fits the NPU count");
        }
        for e in &self.models {
            if e.mapping.tables.len() != e.model.num_layers() {
                return bad("model mapping does not match its model");
            }
            if e.mapping.page_bytes != self.hw.page_bytes {
                return bad("model mapping was produced for a different page size");
            }
            let npu_pages = self.hw.npu_pages();
            let worst = e.mapping.tables.iter().flat_map(|t| t.lwms.iter().chain([&t.lbm])).map(|c| c.p_need).max().unwrap_or(0);
            if worst > npu_pages {
                return bad("model mapping needs more pages than the NPU subspace holds");
            }
            if e.mapping.tables.iter().any(|t| t.lwms.first().map_or(true, |c| c.p_need != 0)) {
                return bad("every layer needs a candidate that uses no cache");
            }
        }
        Ok(())
    }
}
