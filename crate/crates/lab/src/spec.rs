//! Experiment configs: parsing, validation and typed access.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::schema::{Kind, ParamDef};
use crate::LabError;

/// Keys accepted at the top level of every config besides the kind's own.
const RESERVED: [&str; 3] = ["kind", "seed", "out"];

/// A validated experiment with every parameter filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub kind: Kind,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub params: BTreeMap<String, Value>,
}

/// Reads a config from a file path, or treats the argument as inline JSON
/// when it starts with `{`.
pub fn parse_config(path_or_text: &str) -> Result<ExperimentSpec, LabError> {
    let trimmed = path_or_text.trim_start();
    if trimmed.starts_with('{') {
        return parse_config_text(trimmed);
    }
    let text = std::fs::read_to_string(Path::new(path_or_text))
        .map_err(|e| LabError::Config(format!("cannot read config {path_or_text}: {e}")))?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> Result<ExperimentSpec, LabError> {
    let value: Value = serde_json::from_str(text).map_err(|e| LabError::Config(format!("invalid JSON: {e}")))?;
    let Value::Object(map) = value else {
        return Err(LabError::Config("config must be a JSON object".into()));
    };
    from_object(map, None)
}

/// Validates `map`; `kind` overrides (and must agree with) a `kind` key.
pub fn from_object(mut map: Map<String, Value>, kind: Option<Kind>) -> Result<ExperimentSpec, LabError> {
    let kind = match (map.remove("kind"), kind) {
        (Some(Value::String(name)), expected) => {
            let parsed = Kind::from_name(&name).ok_or_else(|| {
                let names: Vec<_> = Kind::ALL.iter().map(|k| k.name()).collect();
                LabError::Config(format!("unknown kind `{name}`; expected one of {}", names.join(", ")))
            })?;
            if let Some(expected) = expected.filter(|&e| e != parsed) {
                return Err(LabError::Config(format!(
                    "config kind `{name}` does not match subcommand `{}`",
                    expected.name()
                )));
            }
            parsed
        }
        (Some(other), _) => return Err(LabError::Config(format!("`kind` must be a string, got {other}"))),
        (None, Some(k)) => k,
        (None, None) => return Err(LabError::Config("missing `kind`".into())),
    };
    let seed = match map.remove("seed") {
        None => 0,
        Some(v) => {
            v.as_u64().ok_or_else(|| LabError::Config(format!("`seed` expects an unsigned 64-bit integer, got {v}")))?
        }
    };
    let out = match map.remove("out") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(v) => return Err(LabError::Config(format!("`out` expects a path string, got {v}"))),
    };
    let defs = kind.params();
    if let Some(unknown) = map.keys().find(|k| !defs.iter().any(|d| d.key == k.as_str())) {
        let mut known: Vec<&str> = defs.iter().map(|d| d.key).chain(RESERVED).collect();
        known.sort_unstable();
        return Err(LabError::Config(format!(
            "unknown key `{unknown}` for kind {}; accepted keys: {}",
            kind.name(),
            known.join(", ")
        )));
    }
    let mut params = BTreeMap::new();
    for ParamDef { key, ty, default, .. } in defs {
        let value = map.remove(key).unwrap_or(default);
        if !ty.accepts(&value) {
            return Err(LabError::Config(format!("`{key}` must be {}, got {value}", ty.describe())));
        }
        params.insert(key.to_string(), value);
    }
    Ok(ExperimentSpec { kind, seed, out, params })
}

impl ExperimentSpec {
    /// Default spec for `kind`.
    pub fn defaults(kind: Kind) -> ExperimentSpec {
        from_object(Map::new(), Some(kind)).expect("defaults validate")
    }

    /// Replaces one parameter, re-validating it.
    pub fn set(&mut self, key: &str, value: Value) -> Result<(), LabError> {
        let def = self
            .kind
            .params()
            .into_iter()
            .find(|d| d.key == key)
            .ok_or_else(|| LabError::Config(format!("unknown key `{key}` for kind {}", self.kind.name())))?;
        if !def.ty.accepts(&value) {
            return Err(LabError::Config(format!("`{key}` must be {}, got {value}", def.ty.describe())));
        }
        self.params.insert(key.to_string(), value);
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        map.insert("kind".into(), Value::String(self.kind.name().into()));
        map.insert("seed".into(), Value::from(self.seed));
        if let Some(out) = &self.out {
            map.insert("out".into(), Value::String(out.display().to_string()));
        }
        for (k, v) in &self.params {
            map.insert(k.clone(), v.clone());
        }
        Value::Object(map)
    }

    fn get(&self, key: &str) -> &Value {
        self.params.get(key).unwrap_or_else(|| panic!("parameter `{key}` is not in the {} schema", self.kind.name()))
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.get(key).as_f64().expect("validated number")
    }

    pub fn opt_f64(&self, key: &str) -> Option<f64> {
        self.get(key).as_f64()
    }

    pub fn usize(&self, key: &str) -> usize {
        self.get(key).as_u64().expect("validated integer") as usize
    }

    pub fn bool(&self, key: &str) -> bool {
        self.get(key).as_bool().expect("validated bool")
    }

    pub fn str(&self, key: &str) -> &str {
        self.get(key).as_str().expect("validated string")
    }

    pub fn f64_list(&self, key: &str) -> Vec<f64> {
        self.opt_f64_list(key).expect("validated list")
    }

    pub fn opt_f64_list(&self, key: &str) -> Option<Vec<f64>> {
        self.get(key).as_array().map(|xs| xs.iter().map(|x| x.as_f64().expect("validated number")).collect())
    }

    pub fn usize_list(&self, key: &str) -> Vec<usize> {
        self.get(key)
            .as_array()
            .expect("validated list")
            .iter()
            .map(|x| x.as_u64().expect("validated integer") as usize)
            .collect()
    }

    pub fn point(&self, key: &str) -> [f64; 2] {
        self.opt_point(key).expect("validated point")
    }

    pub fn opt_point(&self, key: &str) -> Option<[f64; 2]> {
        self.get(key).as_array().map(|xs| [xs[0].as_f64().expect("number"), xs[1].as_f64().expect("number")])
    }
}
