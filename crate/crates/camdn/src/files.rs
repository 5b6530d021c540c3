//! JSON file formats: models, hardware and scenarios.

use std::fs;
use std::path::{Path, PathBuf};

use camdn_core::scheduler::SchedulerMode;
use camdn_core::sim::{ModelEntry, Scenario, StopRule};
use camdn_core::workload::{LayerKind, LayerSpec, ModelSpec};
use camdn_core::HardwareConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// One layer of a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub kind: LayerKind,
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elem_bytes: Option<u64>,
}

/// Model description file. Blocks are computed, not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qos_ms: Option<f64>,
    pub layers: Vec<LayerFile>,
}

impl ModelFile {
    pub fn into_spec(self) -> camdn_core::Result<ModelSpec> {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| LayerSpec::new(i, l.kind, l.m, l.n, l.k).with_elem_bytes(l.elem_bytes.unwrap_or(1)))
            .collect();
        ModelSpec::new(self.name, layers, self.qos_ms)
    }

    pub fn from_spec(model: &ModelSpec) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|l| LayerFile {
                kind: l.kind,
                m: l.m,
                n: l.n,
                k: l.k,
                elem_bytes: (l.elem_bytes != 1).then_some(l.elem_bytes),
            })
            .collect();
        Self { name: model.name.clone(), qos_ms: model.qos_ms, layers }
    }
}

/// Reads and deserializes a JSON file, reporting parse errors with their
/// line and column.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })
}

pub fn load_model(path: &Path) -> Result<ModelSpec> {
    let file: ModelFile = read_json(path)?;
    file.into_spec().map_err(|source| CliError::Invalid { path: path.to_path_buf(), source })
}

pub fn load_hw(path: &Path) -> Result<HardwareConfig> {
    let hw: HardwareConfig = read_json(path)?;
    hw.validate().map_err(|source| CliError::Invalid { path: path.to_path_buf(), source })?;
    Ok(hw)
}

/// Hardware given inline or as a path relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HardwareRef {
    File(PathBuf),
    Inline(HardwareConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRef {
    pub file: PathBuf,
    #[serde(default = "one")]
    pub instances: u32,
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

fn default_name() -> String {
    "scenario".into()
}

/// Sweep axes. An empty axis keeps the scenario's own value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub cache_mb: Vec<u64>,
    pub colocated: Vec<usize>,
    pub modes: Vec<SchedulerMode>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.cache_mb.is_empty() && self.colocated.is_empty() && self.modes.is_empty()
    }
}

/// Scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub hardware: Option<HardwareRef>,
    pub models: Vec<ModelRef>,
    #[serde(default = "default_mode")]
    pub mode: SchedulerMode,
    pub seed: u64,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default)]
    pub colocated: Option<usize>,
    #[serde(default = "one")]
    pub replication: u32,
    #[serde(default = "yes")]
    pub lbm: bool,
    #[serde(default)]
    pub instrumented: bool,
    #[serde(default)]
    pub sweep: Option<SweepAxes>,
}

fn default_mode() -> SchedulerMode {
    SchedulerMode::CamdnFull
}

/// A scenario with every referenced file loaded; mapping happens per
/// hardware configuration in [`ScenarioPlan::build`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPlan {
    pub name: String,
    pub hw: HardwareConfig,
    pub models: Vec<(ModelSpec, u32)>,
    pub mode: SchedulerMode,
    pub seed: u64,
    pub stop: StopRule,
    pub colocated: Option<usize>,
    pub replication: u32,
    pub lbm: bool,
    pub instrumented: bool,
    pub sweep: SweepAxes,
}

impl ScenarioPlan {
    /// One instance of each model with default settings.
    pub fn from_models(name: &str, hw: HardwareConfig, models: Vec<ModelSpec>, mode: SchedulerMode, seed: u64) -> Self {
        Self {
            name: name.into(),
            hw,
            models: models.into_iter().map(|m| (m, 1)).collect(),
            mode,
            seed,
            stop: StopRule::default(),
            colocated: None,
            replication: 1,
            lbm: true,
            instrumented: false,
            sweep: SweepAxes::default(),
        }
    }

    /// Maps every model for `hw`.
    pub fn entries(&self, hw: &HardwareConfig) -> Vec<ModelEntry> {
        self.models.iter().map(|(m, n)| ModelEntry::map(m, hw, *n)).collect()
    }

    /// A runnable scenario over already mapped models.
    pub fn scenario(&self, hw: HardwareConfig, entries: Vec<ModelEntry>, mode: SchedulerMode, seed: u64) -> Scenario {
        let mut sc = Scenario::new(self.name.clone(), hw, entries, mode, seed);
        sc.stop = self.stop;
        sc.colocated = self.colocated;
        sc.replication = self.replication;
        sc.lbm = self.lbm;
        sc.instrumented = self.instrumented;
        sc
    }

    /// Maps the models and builds the scenario for the plan's own settings.
    pub fn build(&self) -> Scenario {
        self.scenario(self.hw.clone(), self.entries(&self.hw), self.mode, self.seed)
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioPlan> {
    let file: ScenarioFile = read_json(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let hw = match file.hardware {
        None => HardwareConfig::default(),
        Some(HardwareRef::File(p)) => load_hw(&dir.join(p))?,
        Some(HardwareRef::Inline(hw)) => {
            hw.validate().map_err(|source| CliError::Invalid { path: path.to_path_buf(), source })?;
            hw
        }
    };
    if file.models.is_empty() {
        return Err(CliError::Config(format!("{}: at least one model is required", path.display())));
    }
    let mut models = Vec::with_capacity(file.models.len());
    for r in &file.models {
        models.push((load_model(&dir.join(&r.file))?, r.instances));
    }
    Ok(ScenarioPlan {
        name: file.name,
        hw,
        models,
        mode: file.mode,
        seed: file.seed,
        stop: file.stop,
        colocated: file.colocated,
        replication: file.replication,
        lbm: file.lbm,
        instrumented: file.instrumented,
        sweep: file.sweep.unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_file_round_trip() {
        let text = r#"{"name":"t","layers":[{"kind":"Conv","M":4,"N":8,"K":2},{"kind":"LSTMCell","M":4,"N":3,"K":8,"elem_bytes":2}]}"#;
        let f: ModelFile = serde_json::from_str(text).unwrap();
        assert!(f.clone().into_spec().is_err());
        let ok = r#"{"name":"t","layers":[{"kind":"Conv","M":4,"N":8,"K":2},{"kind":"LSTMCell","M":4,"N":3,"K":8}]}"#;
        let f: ModelFile = serde_json::from_str(ok).unwrap();
        let spec = f.clone().into_spec().unwrap();
        assert_eq!(spec.layers[1].kind, LayerKind::LstmCell);
        assert_eq!(ModelFile::from_spec(&spec), f);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"name":"t","layers":[],"extra":1}"#;
        assert!(serde_json::from_str::<ModelFile>(text).is_err());
    }

    #[test]
    fn scenario_defaults() {
        let text = r#"{"models":[{"file":"a.json"}],"seed":3}"#;
        let f: ScenarioFile = serde_json::from_str(text).unwrap();
        assert_eq!(f.mode, SchedulerMode::CamdnFull);
        assert_eq!(f.models[0].instances, 1);
        assert!(f.lbm);
        assert_eq!(f.stop, StopRule::default());
        assert!(serde_json::from_str::<ScenarioFile>(r#"{"models":[]}"#).is_err());
    }

    #[test]
    fn hardware_inline_or_path() {
        let a: HardwareRef = serde_json::from_str(r#""hw.json""#).unwrap();
        assert_eq!(a, HardwareRef::File("hw.json".into()));
        let b: HardwareRef = serde_json::from_str(r#"{"cache_bytes": 4194304}"#).unwrap();
        match b {
            HardwareRef::Inline(hw) => assert_eq!(hw.cache_bytes, 4 << 20),
            _ => panic!("expected inline hardware"),
        }
    }
}
