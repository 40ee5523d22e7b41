//! Run configuration: built-in defaults, then the `--config` JSON file, then
//! command-line overrides, each layer merged over the previous one.

use std::path::Path;

use lagvae::surrogate::{default_params, SurrogateParams};
use lagvae::trainer::TrainConfig;
use lagvae::trajectory::DEFAULT_T0;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 20181211;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// The single seed of a run; commands derive their sub-seeds from it.
    pub seed: u64,
    /// Timestep assumed when reading trajectory CSVs.
    pub t0: f64,
    pub surrogate: SurrogateParams,
    pub train: TrainConfig,
    pub sample: SampleSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Histogram bins of the velocity distributions.
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub w_list: Vec<f64>,
    /// Concurrent trainings; 0 uses every available core.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            t0: DEFAULT_T0,
            surrogate: default_params(),
            train: TrainConfig::default(),
            sample: SampleSection::default(),
            eval: EvalSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl Default for SampleSection {
    fn default() -> Self {
        Self { count: 15 }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { bins: 50 }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { w_list: vec![1e-2, 1e-3, 10f64.powf(-3.5), 1e-4, 1e-5, 1e-6], threads: 0 }
    }
}

/// Section seeds are owned by the top-level `seed`. They may appear (a
/// manifest's resolved config carries them) but must agree with it.
const SEED_KEYS: [&str; 2] = ["surrogate.seed", "train.seed"];

fn merge(base: &mut Value, layer: Value) {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn lookup<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(value, |v, k| v.get(k))
}

/// Parses `key.path=value`; the value is read as JSON when it parses,
/// otherwise as a string.
pub fn parse_override(spec: &str) -> Result<(String, Value), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{spec}` must look like key.path=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Usage(format!("override `{spec}` has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn set_path(root: &mut Value, key: &str, value: Value) {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut node = root;
    for p in parts {
        if !node.get(p).is_some_and(Value::is_object) {
            node[p] = Value::Object(Map::new());
        }
        node = &mut node[p];
    }
    node[last] = value;
}

/// Resolves the configuration: defaults < file < overrides.
pub fn resolve(file: Option<&Path>, overrides: &[(String, Value)]) -> Result<RunConfig, CliError> {
    let mut user = Value::Object(Map::new());
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let parsed: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: invalid JSON: {e}", path.display())))?;
        if !parsed.is_object() {
            return Err(CliError::Usage(format!("{}: top level must be an object", path.display())));
        }
        merge(&mut user, parsed);
    }
    for (key, value) in overrides {
        set_path(&mut user, key, value.clone());
    }
    let section_seeds: Vec<(&str, Value)> =
        SEED_KEYS.iter().filter_map(|&k| lookup(&user, k).map(|v| (k, v.clone()))).collect();

    let mut merged = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    merge(&mut merged, user);
    let mut cfg: RunConfig = serde_path_to_error::deserialize(merged).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::Usage(format!("config: {inner}"))
        } else {
            CliError::Usage(format!("config key `{path}`: {inner}"))
        }
    })?;
    for (key, value) in section_seeds {
        if value.as_u64() != Some(cfg.seed) {
            return Err(CliError::Usage(format!(
                "config key `{key}` = {value} differs from the top-level seed {}; set `seed` instead",
                cfg.seed
            )));
        }
    }
    cfg.surrogate.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    if !(cfg.t0 > 0.0 && cfg.t0.is_finite()) {
        return Err(CliError::Usage(format!("config key `t0` must be positive, got {}", cfg.t0)));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_overrides_then_file_then_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"train": {"w": 0.001, "iterations": 7}, "seed": 3}"#).unwrap();
        let cfg = resolve(Some(&path), &[parse_override("train.w=0.01").unwrap()]).unwrap();
        assert_eq!(cfg.train.w, 0.01);
        assert_eq!(cfg.train.iterations, 7);
        assert_eq!(cfg.train.minibatch_size, 5);
        assert_eq!((cfg.seed, cfg.train.seed, cfg.surrogate.seed), (3, 3, 3));
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = resolve(None, &[parse_override("train.wieght=0.1").unwrap()]).unwrap_err();
        assert!(err.to_string().contains("wieght"), "{err}");
        let err = resolve(None, &[parse_override("surrogate.seed=1").unwrap()]).unwrap_err();
        assert!(err.to_string().contains("surrogate.seed"));
        let ok = resolve(None, &[parse_override("seed=1").unwrap(), parse_override("train.seed=1").unwrap()]);
        assert_eq!(ok.unwrap().train.seed, 1);
    }

    #[test]
    fn override_values_parse_as_json_or_string() {
        assert_eq!(parse_override("a.b=3").unwrap().1, Value::from(3));
        assert_eq!(parse_override("a=standard").unwrap().1, Value::from("standard"));
        assert!(parse_override("novalue").is_err());
        let cfg = resolve(None, &[parse_override("train.kl_form=standard").unwrap()]).unwrap();
        assert_eq!(cfg.train.kl_form, lagvae::KlForm::Standard);
    }
}
