use std::collections::BTreeMap;
use std::path::Path;

use bbm_core::engine::{Pruning, DEFAULT_PRUNE_LAG};
use bbm_core::experiments::parse_pairs;
use bbm_core::{Error, Result};
use serde::Serialize;
use serde_json::Value;

/// Option values merged from a config file and command-line flags; flags win.
#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, Value>,
}

impl Settings {
    pub fn load(config: Option<&Path>) -> Result<Self> {
        let mut settings = Settings::default();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            for (key, value) in parse_pairs(&text)? {
                // `y` and `y_grid` name the same option.
                let key = if key == "y_grid" { "y".to_string() } else { key };
                settings.values.insert(key, value);
            }
        }
        Ok(settings)
    }

    /// Records a command-line flag if it was given.
    pub fn flag<T: Serialize>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            let v = serde_json::to_value(v).expect("flag values serialize");
            self.values.insert(key.to_string(), v);
        }
    }

    /// Fails on any key the subcommand does not understand.
    pub fn only(&self, allowed: &[&str], command: &str) -> Result<()> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("'{k}' is not an option of '{command}'"))),
            None => Ok(()),
        }
    }

    pub fn take(&mut self, key: &str) -> Option<Value> {
        self.values.remove(key)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    fn bad(key: &str, value: &Value) -> Error {
        Error::Config(format!("bad value for '{key}': {value}"))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), |v| v.as_f64().ok_or_else(|| Self::bad(key, v)))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        self.get(key).map_or(Ok(default), |v| v.as_u64().ok_or_else(|| Self::bad(key, v)))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        self.u64_or(key, default as u64).map(|n| n as usize)
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        self.get(key).map_or(Ok(default), |v| v.as_bool().ok_or_else(|| Self::bad(key, v)))
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> Result<&'a str> {
        self.get(key).map_or(Ok(default), |v| v.as_str().ok_or_else(|| Self::bad(key, v)))
    }

    pub fn list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::Number(n)) => Ok(vec![n.as_f64().expect("json numbers are finite")]),
            Some(v @ Value::Array(items)) => {
                items.iter().map(|x| x.as_f64().ok_or_else(|| Self::bad(key, v))).collect()
            }
            Some(v) => Err(Self::bad(key, v)),
        }
    }

    pub fn pruning(&self) -> Result<Pruning> {
        match self.get("prune") {
            None => Ok(Pruning::None),
            Some(v) => parse_pruning(v).ok_or_else(|| Self::bad("prune", v)),
        }
    }
}

/// `none`/`false`, `true` (default lag) or a numeric lag.
pub fn parse_pruning(v: &Value) -> Option<Pruning> {
    match v {
        Value::String(s) if s == "none" => Some(Pruning::None),
        Value::String(s) => s.parse().ok().map(|lag| Pruning::Barrier { lag }),
        Value::Bool(false) => Some(Pruning::None),
        Value::Bool(true) => Some(Pruning::Barrier { lag: DEFAULT_PRUNE_LAG }),
        Value::Number(n) => n.as_f64().map(|lag| Pruning::Barrier { lag }),
        _ => None,
    }
}
