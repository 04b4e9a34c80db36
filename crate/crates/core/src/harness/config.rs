//! Experiment configuration and its JSON schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Sampling;
use crate::plgame::GeneratorConfig;
use crate::solvers::{PlMode, RestartPick};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gda,
    Agda,
    SvrgGda,
    SpiderGda,
    AccSpider,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gda => "gda",
            Algorithm::Agda => "agda",
            Algorithm::SvrgGda => "svrg_gda",
            Algorithm::SpiderGda => "spider_gda",
            Algorithm::AccSpider => "acc_spider",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    #[default]
    Theory,
    Manual,
}

/// Where the game comes from: generated on the fly or loaded from a file.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum InstanceSource {
    File { file: PathBuf },
    Generate(GeneratorConfig),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSource {
    file: PathBuf,
}

impl<'de> Deserialize<'de> for InstanceSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let v = serde_json::Value::deserialize(d)?;
        let is_file = v.as_object().is_some_and(|o| o.contains_key("file"));
        if is_file {
            let f: FileSource = serde_json::from_value(v).map_err(|e| D::Error::custom(format!("instance: {e}")))?;
            Ok(InstanceSource::File { file: f.file })
        } else {
            let g: GeneratorConfig =
                serde_json::from_value(v).map_err(|e| D::Error::custom(format!("instance: {e}")))?;
            Ok(InstanceSource::Generate(g))
        }
    }
}

/// Overrides for manual schedules. Unset entries fall back to per-algorithm
/// defaults; in theory mode only `alpha` and `g0_gap` are consulted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(rename = "K_outer", default, skip_serializing_if = "Option::is_none")]
    pub k_outer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restart_pick: Option<RestartPick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<Sampling>,
    /// Upper bound on `g(x_0) − g*` when no reference is available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0_gap: Option<f64>,
}

/// Keys accepted inside `manual`.
pub const MANUAL_KEYS: &[&str] = &[
    "tau_x", "tau_y", "lambda", "T", "K", "M", "B", "S", "beta", "gamma", "K_outer", "alpha", "restart_pick",
    "sampling", "g0_gap",
];

/// Top-level keys.
pub const TOP_KEYS: &[&str] = &[
    "instance",
    "algorithm",
    "schedule",
    "manual",
    "pl_mode",
    "eps",
    "seed",
    "snapshot_every",
    "max_sfo",
    "init_scale",
    "record_wall_time",
    "stop_at_gap",
];

/// Keys of a generated instance.
pub const INSTANCE_KEYS: &[&str] = &["n", "d", "r", "mu", "L", "scale", "seed", "well_posed", "file"];

fn default_eps() -> f64 {
    1e-2
}

fn default_init_scale() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub schedule: ScheduleMode,
    #[serde(default)]
    pub manual: ManualOverrides,
    #[serde(default)]
    pub pl_mode: PlMode,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Seeds the initial point and the solver's sampling.
    #[serde(default)]
    pub seed: u64,
    /// Snapshot interval in SFO; defaults to `n`.
    #[serde(default)]
    pub snapshot_every: Option<u64>,
    pub max_sfo: u64,
    /// Standard deviation of the Gaussian initial point.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    /// Record wall-clock nanoseconds; off by default so traces are
    /// byte-reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
    /// Stop once a snapshot's primal gap is at or below this value.
    #[serde(default)]
    pub stop_at_gap: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_value(v: serde_json::Value) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("eps: must be positive");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale: must be non-negative");
        }
        if self.snapshot_every == Some(0) {
            return bad("snapshot_every: must be positive");
        }
        if let Some(g) = self.stop_at_gap {
            if !(g > 0.0) {
                return bad("stop_at_gap: must be positive");
            }
        }
        if let InstanceSource::Generate(g) = &self.instance {
            g.validate().map_err(|e| Error::Config(format!("instance: {e}")))?;
        }
        let m = &self.manual;
        for (name, v) in [
            ("manual.tau_x", m.tau_x),
            ("manual.tau_y", m.tau_y),
            ("manual.lambda", m.lambda),
            ("manual.beta", m.beta),
            ("manual.alpha", m.alpha),
            ("manual.g0_gap", m.g0_gap),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("{name}: must be positive, got {v}")));
                }
            }
        }
        for (name, v) in [("manual.T", m.t), ("manual.K", m.k), ("manual.M", m.m), ("manual.B", m.b), ("manual.S", m.s), ("manual.K_outer", m.k_outer)] {
            if v == Some(0) {
                return Err(Error::Config(format!("{name}: must be positive")));
            }
        }
        if let Some(g) = m.gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::Config(format!("manual.gamma: must lie in [0, 1), got {g}")));
            }
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
