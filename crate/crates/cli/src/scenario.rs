//! Scenario files.
//!
//! A scenario is a list of `section.key = value` lines. That is valid TOML,
//! so comments, integers, strings and inline arrays all work, but nested
//! `[table]` headers are never emitted.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use clap::ValueEnum;
use harvest_core::interface::{ControllerParams, EmulatedLoad, FixedParts, DEFAULT_SIZING_TOLERANCE};
use harvest_core::sim::{AccelProfile, BehavioralLoad, PnoConfig, Segment, SimConfig, SWITCHED_DT};
use harvest_core::{HarvesterParams, LoadSpec};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Malformed, inconsistent or unreadable configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// The PPA-4011 bimorph with its measured coupling and capacitance.
    Ppa4011,
    /// `ppa4011` plus the prototype emulation controller, with every part
    /// pinned for sizing.
    Table1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    Traces,
    Summary,
    Grids,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoadConfig {
    ParallelImpedance {
        r_load: f64,
        x_load: f64,
    },
    VoltageGenerator {
        v_load: f64,
        phi_load: f64,
    },
    /// Conjugate match of the configured harvester.
    Matched,
    /// Resistance in parallel with a negative capacitance.
    Emulated {
        r_e: f64,
        c_n: f64,
    },
    /// Voltage generator steered by two-variable perturb and observe.
    Pno(PnoConfig),
}

impl LoadConfig {
    /// `None` for the P&O tracker, which is not a fixed load.
    pub fn behavioral(&self, h: &HarvesterParams, drive_freq: f64) -> Option<BehavioralLoad> {
        Some(match *self {
            LoadConfig::ParallelImpedance { r_load, x_load } => {
                LoadSpec::ParallelImpedance { r_load, x_load }.into()
            }
            LoadConfig::VoltageGenerator { v_load, phi_load } => {
                LoadSpec::VoltageGenerator { v_load, phi_load }.into()
            }
            LoadConfig::Matched => LoadSpec::matched(h).into(),
            LoadConfig::Emulated { r_e, c_n } => EmulatedLoad::new(r_e, c_n, 2.0 * PI * drive_freq).into(),
            LoadConfig::Pno(_) => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileShape {
    Constant {
        amplitude: f64,
        duration: f64,
    },
    Step {
        a0: f64,
        a1: f64,
        t_step: f64,
        duration: f64,
    },
    /// Alternates `a_lo` and `a_hi`, each held for half of `period`.
    Square {
        a_lo: f64,
        a_hi: f64,
        period: f64,
        duration: f64,
    },
    Segments {
        amplitudes: Vec<f64>,
        durations: Vec<f64>,
    },
}

/// Acceleration amplitude over time. The drive frequency defaults to the
/// harvester resonance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive_freq_hz: Option<f64>,
    #[serde(flatten)]
    pub shape: ProfileShape,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            drive_freq_hz: None,
            shape: ProfileShape::Constant {
                amplitude: 1.0,
                duration: 1.0,
            },
        }
    }
}

impl ProfileConfig {
    pub fn build(&self, h: &HarvesterParams) -> Result<AccelProfile, ConfigError> {
        let f = self.drive_freq_hz.unwrap_or(h.f_res);
        let p = match &self.shape {
            &ProfileShape::Constant { amplitude, duration } => AccelProfile::constant(f, amplitude, duration),
            &ProfileShape::Step {
                a0,
                a1,
                t_step,
                duration,
            } => AccelProfile::step(f, a0, a1, t_step, duration),
            &ProfileShape::Square {
                a_lo,
                a_hi,
                period,
                duration,
            } => AccelProfile::periodic_square(f, a_lo, a_hi, period, duration),
            ProfileShape::Segments {
                amplitudes,
                durations,
            } => {
                if amplitudes.len() != durations.len() {
                    return err(format!(
                        "profile.amplitudes has {} entries but profile.durations has {}",
                        amplitudes.len(),
                        durations.len()
                    ));
                }
                AccelProfile {
                    drive_freq: f,
                    segments: amplitudes
                        .iter()
                        .zip(durations)
                        .map(|(&amplitude, &duration)| Segment { duration, amplitude })
                        .collect(),
                }
            }
        };
        p.validate().map_err(|e| ConfigError(format!("profile: {e}")))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeConfig {
    /// Tuning amplitude, g.
    pub a_max: f64,
    /// Amplitude ratios `A / a_max` for the wasted-power table.
    pub ratios: Vec<f64>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            a_max: 1.0,
            ratios: vec![0.5, 1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyConfig {
    /// Amplitudes of the synthetic surfaces, g.
    pub amplitudes: Vec<f64>,
    /// Relative uniform noise on synthetic power and current.
    pub noise: f64,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            amplitudes: vec![0.75, 1.0, 1.25],
            noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizingConfig {
    pub tolerance: f64,
    /// When present, only the listed parts are pinned.
    pub fixed: FixedParts,
}

impl Default for SizingConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_SIZING_TOLERANCE,
            fixed: FixedParts::prototype_core(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryConfig {
    /// Half-width of the settling band, relative to the final power.
    pub settle_fraction: f64,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        Self {
            settle_fraction: 0.05,
        }
    }
}

fn default_outputs() -> Vec<Output> {
    vec![Output::Summary]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub harvester: HarvesterParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<LoadConfig>,
    #[serde(default)]
    pub profile: ProfileConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub summary: SummaryConfig,
    #[serde(default)]
    pub analyze: AnalyzeConfig,
    #[serde(default)]
    pub identify: IdentifyConfig,
    #[serde(default)]
    pub sizing: SizingConfig,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Output>,
}

/// Dotted key to scalar or array value.
pub type FlatMap = BTreeMap<String, Value>;

const SECTION_ORDER: [&str; 10] = [
    "harvester",
    "controller",
    "load",
    "profile",
    "sim",
    "summary",
    "analyze",
    "identify",
    "sizing",
    "outputs",
];

fn flatten_into(prefix: &str, table: &Table, out: &mut FlatMap) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten_into(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn unflatten(map: &FlatMap) -> Result<Table, ConfigError> {
    let mut root = Table::new();
    for (key, value) in map {
        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts.pop().unwrap_or_default();
        let mut node = &mut root;
        for (depth, part) in parts.iter().enumerate() {
            let entry = node
                .entry(part.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
            node = match entry {
                Value::Table(t) => t,
                _ => {
                    return err(format!(
                        "`{}` is a value but `{key}` uses it as a section",
                        parts[..=depth].join(".")
                    ))
                }
            };
        }
        if node.contains_key(leaf) {
            return err(format!("`{key}` is a section and cannot take a value"));
        }
        node.insert(leaf.to_string(), value.clone());
    }
    Ok(root)
}

/// Parses scenario text into dotted keys. `origin` names the source in
/// error messages.
pub fn parse_flat(text: &str, origin: &str) -> Result<FlatMap, ConfigError> {
    let table: Table = toml::from_str(text).map_err(|e| ConfigError(format!("{origin}: {e}")))?;
    let mut out = FlatMap::new();
    flatten_into("", &table, &mut out);
    Ok(out)
}

pub fn preset_map(p: Preset) -> FlatMap {
    let mut text = format!(
        "harvester = {}\n",
        toml::Value::try_from(HarvesterParams::ppa4011()).expect("harvester serializes")
    );
    if p == Preset::Table1 {
        let cp = ControllerParams::prototype();
        text += &format!(
            "controller = {}\n",
            toml::Value::try_from(cp).expect("controller serializes")
        );
        text += &format!(
            "sizing.fixed = {}\n",
            toml::Value::try_from(FixedParts::from_params(&cp)).expect("fixed parts serialize")
        );
    }
    parse_flat(&text, "preset").expect("preset parses")
}

impl Scenario {
    /// Builds a scenario from dotted keys.
    ///
    /// A scenario with controller keys defaults to the switched engine and
    /// its finer step. Keys that do not map to any field are rejected.
    pub fn from_flat(map: &FlatMap) -> Result<Self, ConfigError> {
        let mut map = map.clone();
        let has_controller = map.keys().any(|k| k.starts_with("controller."));
        if has_controller && !map.contains_key("sim.fidelity") {
            map.insert("sim.fidelity".into(), Value::String("switched".into()));
        }
        if map.get("sim.fidelity").and_then(Value::as_str) == Some("switched") {
            let sw = SimConfig::switched();
            map.entry("sim.dt".into()).or_insert(Value::Float(SWITCHED_DT));
            map.entry("sim.record_decimation".into())
                .or_insert(Value::Integer(sw.record_decimation as i64));
        }

        let table = unflatten(&map)?;
        let scenario: Scenario = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(format!("scenario: {}", e.to_string().trim())))?;

        let known = scenario.to_flat();
        if let Some(k) = map.keys().find(|k| !known.contains_key(*k)) {
            return err(format!("unknown or inapplicable key `{k}`"));
        }
        Ok(scenario)
    }

    pub fn to_flat(&self) -> FlatMap {
        let v = Value::try_from(self).expect("scenario serializes");
        let mut out = FlatMap::new();
        if let Value::Table(t) = v {
            flatten_into("", &t, &mut out);
        }
        out
    }

    /// Text that [`Scenario::parse`] maps back to `self`.
    pub fn to_config_string(&self) -> String {
        let flat = self.to_flat();
        let rank = |k: &str| {
            let head = k.split('.').next().unwrap_or(k);
            SECTION_ORDER
                .iter()
                .position(|s| *s == head)
                .unwrap_or(SECTION_ORDER.len())
        };
        let mut keys: Vec<&String> = flat.keys().collect();
        keys.sort_by(|a, b| rank(a).cmp(&rank(b)).then_with(|| a.cmp(b)));
        let mut s = String::new();
        let mut section = "";
        for k in keys {
            let head = k.split('.').next().unwrap_or(k);
            if head != section && !s.is_empty() {
                s.push('\n');
            }
            section = head;
            s += &format!("{k} = {}\n", flat[k]);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_flat(&parse_flat(text, "config")?)
    }

    /// Preset keys overlaid by the config file. Without either, the
    /// `ppa4011` preset is used.
    pub fn resolve(preset: Option<Preset>, config: Option<(&str, &str)>) -> Result<Self, ConfigError> {
        let preset = match (preset, config) {
            (None, None) => Some(Preset::Ppa4011),
            (p, _) => p,
        };
        let mut map = preset.map(preset_map).unwrap_or_default();
        if let Some((text, origin)) = config {
            map.extend(parse_flat(text, origin)?);
        }
        Self::from_flat(&map)
    }

    /// Semantic checks shared by every command.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |section: &str, r: harvest_core::Result<()>| {
            r.map_err(|e| ConfigError(format!("{section}: {e}")))
        };
        wrap("harvester", self.harvester.validate())?;
        if let Some(cp) = &self.controller {
            wrap("controller", cp.validate())?;
        }
        wrap("sim", self.sim.validate())?;
        self.profile.build(&self.harvester)?;
        Ok(())
    }

    pub fn wants(&self, o: Output) -> bool {
        self.outputs.contains(&o)
    }
}
