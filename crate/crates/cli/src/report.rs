use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::config::ScenarioConfig;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    /// human-readable acceptance band
    pub limit: String,
}

impl Assertion {
    pub fn at_most(name: &str, measured: f64, limit: f64) -> Assertion {
        Assertion {
            name: name.into(),
            passed: measured <= limit,
            measured,
            limit: format!("<= {limit:e}"),
        }
    }

    pub fn below(name: &str, measured: f64, limit: f64) -> Assertion {
        Assertion {
            name: name.into(),
            passed: measured < limit,
            measured,
            limit: format!("< {limit:e}"),
        }
    }

    pub fn within(name: &str, measured: f64, lo: f64, hi: f64) -> Assertion {
        Assertion {
            name: name.into(),
            passed: (lo..=hi).contains(&measured),
            measured,
            limit: format!("in [{lo}, {hi}]"),
        }
    }

    /// `measured` is 1 for true, 0 for false
    pub fn holds(name: &str, ok: bool, what: &str) -> Assertion {
        Assertion {
            name: name.into(),
            passed: ok,
            measured: if ok { 1.0 } else { 0.0 },
            limit: what.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub config: ScenarioConfig,
    pub assertions: Vec<Assertion>,
    /// seconds per stage
    pub timings: BTreeMap<String, f64>,
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text + "\n")
    }
}
