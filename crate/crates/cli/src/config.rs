//! The run configuration document and its validation.

use std::path::Path;

use dispinn::experiments::{NetworkConfig, RomTaskConfig};
use dispinn::fom::FomTrainConfig;
use dispinn::fv::{build_grid, Grid, TransportConfig};
use dispinn::rom::RomTrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { nx: 21, ny: 21, lx: 1.0, ly: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FomRunConfig {
    /// Solver steps after the initial condition.
    pub n_steps: usize,
}

impl Default for FomRunConfig {
    fn default() -> Self {
        FomRunConfig { n_steps: 350 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub fom: FomTrainConfig,
    pub rom: RomTrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DaemonConfig {
    /// `host:port` or `unix:PATH`.
    pub endpoint: String,
    pub timeout_secs: f64,
    pub max_frame_bytes: usize,
}

impl Default for DaemonConfig {
    fn default() -> Self {
        DaemonConfig {
            endpoint: "127.0.0.1:7878".into(),
            timeout_secs: 30.0,
            max_frame_bytes: dispinn::daemon::DEFAULT_MAX_FRAME_BYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub transport: TransportConfig,
    pub fom: FomRunConfig,
    pub network: NetworkConfig,
    pub training: TrainingConfig,
    pub pod: RomTaskConfig,
    pub daemon: DaemonConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            grid: GridConfig::default(),
            transport: TransportConfig::default(),
            fom: FomRunConfig::default(),
            network: NetworkConfig::default(),
            training: TrainingConfig::default(),
            pod: RomTaskConfig::default(),
            daemon: DaemonConfig::default(),
        }
    }
}

/// All problems found in a configuration, one message per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "invalid configuration ({} problems):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigErrors(vec![format!("{}: {e}", path.display())]))?;
        Self::parse(&text)
    }

    /// Parses and validates a document, collecting every unknown key, type
    /// error and out-of-range value before failing.
    pub fn parse(text: &str) -> Result<Self, ConfigErrors> {
        let doc: Value = serde_json::from_str(text).map_err(|e| ConfigErrors(vec![format!("not valid JSON: {e}")]))?;
        let defaults = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
        let mut errors = Vec::new();
        if !doc.is_object() {
            return Err(ConfigErrors(vec!["the configuration must be a JSON object".into()]));
        }
        check_keys(&doc, &defaults, &defaults, "", &mut errors);
        if !errors.is_empty() {
            return Err(ConfigErrors(errors));
        }
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| ConfigErrors(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut errors = Vec::new();
        let mut push = |section: &str, r: dispinn::error::Result<()>| {
            if let Err(e) = r {
                errors.push(format!("{section}: {e}"));
            }
        };
        push("grid", self.build_grid().map(|_| ()));
        push("transport", self.transport.validate());
        push("training.fom", self.training.fom.validate(usize::MAX));
        push("training.rom", self.training.rom.validate());
        push("pod", self.pod.validate());
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            errors.push("network.hidden: needs at least one layer and no empty layers".into());
        }
        if self.daemon.endpoint.parse::<dispinn::daemon::Endpoint>().is_err() {
            errors.push(format!("daemon.endpoint: {:?} is neither host:port nor unix:PATH", self.daemon.endpoint));
        }
        if !(self.daemon.timeout_secs > 0.0 && self.daemon.timeout_secs.is_finite()) {
            errors.push("daemon.timeout_secs: must be positive".into());
        }
        if self.daemon.max_frame_bytes == 0 {
            errors.push("daemon.max_frame_bytes: must be positive".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errors))
        }
    }

    pub fn build_grid(&self) -> dispinn::error::Result<Grid> {
        build_grid(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)
    }
}

/// Walks `doc` against the defaults. Unknown keys are reported by path;
/// each known leaf is type-checked by substituting it alone into the
/// default document.
fn check_keys(doc: &Value, default: &Value, root: &Value, path: &str, errors: &mut Vec<String>) {
    let (Value::Object(d), Value::Object(def)) = (doc, default) else {
        let mut trial = root.clone();
        *pointer_mut(&mut trial, path) = doc.clone();
        if let Err(e) = serde_json::from_value::<RunConfig>(trial) {
            errors.push(format!("{}: {}", dotted(path), strip_position(&e.to_string())));
        }
        return;
    };
    for (k, v) in d {
        let child = format!("{path}/{k}");
        match def.get(k) {
            None => errors.push(format!("{}: unknown key", dotted(&child))),
            Some(dv) if dv.is_object() && !v.is_object() => errors.push(format!("{}: expected a section object", dotted(&child))),
            Some(dv) => check_keys(v, dv, root, &child, errors),
        }
    }
}

fn pointer_mut<'a>(v: &'a mut Value, path: &str) -> &'a mut Value {
    v.pointer_mut(path).expect("path taken from the defaults")
}

fn dotted(path: &str) -> String {
    path.trim_start_matches('/').replace('/', ".")
}

fn strip_position(msg: &str) -> &str {
    msg.split(" at line ").next().unwrap_or(msg)
}
