//! `key=value` overrides and Cartesian sweeps over config JSON.

use serde_json::Value;

use crate::error::{Error, Result};

use super::config::{ExperimentConfig, INSTANCE_KEYS, MANUAL_KEYS, TOP_KEYS};

/// Resolves a bare or dotted key to a JSON path. Bare keys are looked up at
/// the top level first, then in `instance`, then in `manual`; so `seed` is
/// the run seed and `instance.seed` the generator seed.
pub fn resolve_key(key: &str) -> Result<Vec<String>> {
    let parts: Vec<&str> = key.split('.').collect();
    let known = match parts.as_slice() {
        [k] if TOP_KEYS.contains(k) => vec![k.to_string()],
        [k] if INSTANCE_KEYS.contains(k) => vec!["instance".into(), k.to_string()],
        [k] if MANUAL_KEYS.contains(k) => vec!["manual".into(), k.to_string()],
        ["instance", k] if INSTANCE_KEYS.contains(k) => vec!["instance".into(), k.to_string()],
        ["manual", k] if MANUAL_KEYS.contains(k) => vec!["manual".into(), k.to_string()],
        _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
    };
    Ok(known)
}

/// Parses an override value as JSON, falling back to a plain string.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `key` to `value` in a config document.
pub fn set_key(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let path = resolve_key(key)?;
    let mut cur = doc;
    for (i, p) in path.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("cannot set `{key}`: parent is not an object")))?;
        if i + 1 == path.len() {
            obj.insert(p.clone(), value);
            return Ok(());
        }
        cur = obj.entry(p.clone()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("paths are non-empty")
}

/// Applies `k=v` overrides and validates the result.
pub fn apply_overrides(doc: &Value, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut doc = doc.clone();
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
        set_key(&mut doc, k.trim(), parse_value(v.trim()))?;
    }
    ExperimentConfig::from_value(doc)
}

/// One sweep axis: `key=v1,v2,...`.
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (k, vs) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("vary `{s}` is not key=v1,v2,...")))?;
        resolve_key(k.trim())?;
        let values: Vec<String> = vs.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        Ok(Axis { key: k.trim().to_string(), values })
    }
}

/// Parses `s1..s2` (inclusive) or a single seed.
pub fn parse_seed_range(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("seeds `{s}` is not s1..s2"));
    match s.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            Ok((a..=b).collect())
        }
        None => Ok(vec![s.trim().parse().map_err(|_| bad())?]),
    }
}

/// A sweep cell with a file-name-safe label.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub name: String,
    pub config: ExperimentConfig,
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

/// Cartesian product of all axes and seeds.
pub fn sweep_cells(base: &Value, axes: &[Axis], seeds: &[u64]) -> Result<Vec<Cell>> {
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::new();
        for c in &combos {
            for v in &axis.values {
                let mut c = c.clone();
                c.push((axis.key.clone(), v.clone()));
                next.push(c);
            }
        }
        combos = next;
    }
    let mut cells = Vec::new();
    for combo in &combos {
        for &seed in seeds {
            let mut doc = base.clone();
            let mut name = Vec::new();
            for (k, v) in combo {
                set_key(&mut doc, k, parse_value(v))?;
                name.push(format!("{}-{}", sanitize(k), sanitize(v)));
            }
            set_key(&mut doc, "seed", Value::from(seed))?;
            name.push(format!("seed-{seed}"));
            cells.push(Cell { name: name.join("_"), config: ExperimentConfig::from_value(doc)? });
        }
    }
    if cells.is_empty() {
        return Err(Error::Config("sweep is empty".into()));
    }
    Ok(cells)
}
