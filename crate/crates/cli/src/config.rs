//! Run configuration: one JSON document per run, checked against the shipped
//! schema before it is deserialized.

use std::path::Path;
use std::sync::OnceLock;

use emergence_core::dynsys::{ParamPoint, SystemSpec};
use emergence_core::emergence::EmergenceQuery;
use emergence_core::sinks::SeedGrid;
use jsonschema::JSONSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const CONFIG_SCHEMA: &str = include_str!("../schemas/config.schema.json");
pub const MANIFEST_SCHEMA: &str = include_str!("../schemas/manifest.schema.json");

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
    #[serde(default)]
    pub param: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emergence: Option<EmergenceQuery>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sinks: Option<SinksConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbit: Option<OrbitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jets: Option<JetsConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinksConfig {
    pub max_period: usize,
    pub grid: SeedGrid,
    /// Initial points per sink for basin estimates; 0 skips them.
    pub basin_samples: usize,
    pub basin_steps: usize,
    pub seed: u64,
}

impl Default for SinksConfig {
    fn default() -> Self {
        SinksConfig {
            max_period: 1,
            grid: SeedGrid::default(),
            basin_samples: 0,
            basin_steps: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub start: Vec<f64>,
    #[serde(default = "default_orbit_steps")]
    pub steps: usize,
}

fn default_orbit_steps() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JetsConfig {
    pub d: usize,
    pub k: usize,
    #[serde(default)]
    pub subcritical: bool,
    #[serde(default = "default_orbit_samples")]
    pub orbit_samples: usize,
    #[serde(default = "default_jet_steps")]
    pub orbit_steps: usize,
}

fn default_orbit_samples() -> usize {
    100_000
}

fn default_jet_steps() -> usize {
    20
}

impl RunConfig {
    pub fn system(&self) -> Result<&SystemSpec, CliError> {
        self.system
            .as_ref()
            .ok_or_else(|| CliError::usage("config has no \"system\" section"))
    }

    pub fn param(&self) -> Result<ParamPoint, CliError> {
        let sys = self.system()?;
        if self.param.is_empty() {
            return Ok(ParamPoint::zeros(sys.param_dim()));
        }
        Ok(ParamPoint::new(self.param.clone())?)
    }
}

fn compiled(cell: &'static OnceLock<JSONSchema>, text: &str) -> &'static JSONSchema {
    cell.get_or_init(|| {
        let schema: Value = serde_json::from_str(text).expect("shipped schema is valid JSON");
        JSONSchema::compile(&schema).expect("shipped schema compiles")
    })
}

fn check(schema: &JSONSchema, doc: &Value, what: &str) -> Result<(), CliError> {
    if let Err(errors) = schema.validate(doc) {
        let msgs: Vec<String> = errors.map(|e| format!("{} (at '{}')", e, e.instance_path)).collect();
        return Err(CliError::usage(format!("{what} fails schema: {}", msgs.join("; "))));
    }
    Ok(())
}

pub fn validate_config(doc: &Value) -> Result<(), CliError> {
    static CELL: OnceLock<JSONSchema> = OnceLock::new();
    check(compiled(&CELL, CONFIG_SCHEMA), doc, "config")
}

pub fn validate_manifest(doc: &Value) -> Result<(), CliError> {
    static CELL: OnceLock<JSONSchema> = OnceLock::new();
    check(compiled(&CELL, MANIFEST_SCHEMA), doc, "manifest")
}

/// Read a config file. A run manifest is accepted too, in which case its
/// configuration snapshot is used.
pub fn load(path: &Path) -> Result<(RunConfig, Vec<u8>), CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut doc: Value = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    if doc.get("tool").and_then(Value::as_str) == Some("emergence") {
        validate_manifest(&doc)?;
        doc = doc["config"].take();
    }
    validate_config(&doc)?;
    let cfg = serde_json::from_value(doc).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
    Ok((cfg, bytes))
}
