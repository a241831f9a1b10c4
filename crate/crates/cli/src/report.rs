//! Validation report: named checks with measured value, tolerance and the
//! oracle they were compared against.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    /// Passes when `measured <= tolerance`.
    AtMost,
    /// Passes when `measured >= tolerance`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub oracle: String,
    pub measured: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Pass,
    Fail,
    ConfigError,
    Error,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::ConfigError => 2,
            Status::Error => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::ConfigError => "config_error",
            Status::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub module: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub pipeline: String,
    pub config: Map<String, Value>,
    pub checks: Vec<Check>,
    pub disabled: Vec<String>,
    pub results: Map<String, Value>,
    pub artifacts: Vec<String>,
    pub error: Option<Failure>,
    disabled_names: Vec<String>,
    scale: f64,
}

/// Converts a configuration value for the echo section.
pub fn toml_to_json(v: &toml::Value) -> Value {
    match v {
        toml::Value::String(s) => json!(s),
        toml::Value::Integer(i) => json!(i),
        toml::Value::Float(x) => json!(x),
        toml::Value::Boolean(b) => json!(b),
        toml::Value::Datetime(d) => json!(d.to_string()),
        toml::Value::Array(a) => Value::Array(a.iter().map(toml_to_json).collect()),
        toml::Value::Table(t) => Value::Object(t.iter().map(|(k, v)| (k.clone(), toml_to_json(v))).collect()),
    }
}

impl Report {
    pub fn new(
        pipeline: &str,
        entries: &BTreeMap<String, toml::Value>,
        disabled: &[String],
        tolerance_scale: f64,
    ) -> Self {
        Self {
            pipeline: pipeline.to_string(),
            config: entries.iter().map(|(k, v)| (k.clone(), toml_to_json(v))).collect(),
            disabled_names: disabled.to_vec(),
            scale: tolerance_scale,
            ..Self::default()
        }
    }

    /// Records a check; `tolerance` is multiplied by the tolerance scale.
    /// Disabled checks are only listed by name.
    pub fn check(&mut self, name: &str, oracle: &str, measured: f64, tolerance: f64, comparison: Comparison) -> bool {
        if self.disabled_names.iter().any(|d| d == name) {
            self.disabled.push(name.to_string());
            return true;
        }
        let tolerance = match comparison {
            Comparison::AtMost => tolerance * self.scale,
            // lower bounds are loosened by moving them down
            Comparison::AtLeast if tolerance < 0.0 => tolerance * self.scale,
            Comparison::AtLeast => tolerance,
        };
        let pass = match comparison {
            Comparison::AtMost => measured <= tolerance,
            Comparison::AtLeast => measured >= tolerance,
        };
        self.checks.push(Check {
            name: name.to_string(),
            oracle: oracle.to_string(),
            measured,
            tolerance,
            comparison,
            pass,
        });
        pass
    }

    pub fn result(&mut self, key: &str, value: Value) {
        self.results.insert(key.to_string(), value);
    }

    pub fn status(&self) -> Status {
        if self.error.is_some() {
            Status::Error
        } else if self.checks.iter().all(|c| c.pass) {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn to_json(&self) -> Value {
        let checks: Vec<Value> = self
            .checks
            .iter()
            .map(|c| {
                json!({
                    "name": c.name,
                    "oracle": c.oracle,
                    "measured": c.measured,
                    "tolerance": c.tolerance,
                    "comparison": match c.comparison {
                        Comparison::AtMost => "<=",
                        Comparison::AtLeast => ">=",
                    },
                    "pass": c.pass,
                })
            })
            .collect();
        let mut out = json!({
            "tool": { "name": "kostin", "cli_version": env!("CARGO_PKG_VERSION"), "library_version": kostin::VERSION },
            "pipeline": self.pipeline,
            "status": self.status().name(),
            "config": self.config,
            "tolerance_scale": self.scale,
            "checks": checks,
            "disabled_checks": self.disabled,
            "results": self.results,
            "artifacts": self.artifacts,
        });
        if let Some(f) = &self.error {
            out["error"] = json!({ "module": f.module, "message": f.message });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> Report {
        Report::new("moments", &BTreeMap::new(), &["skipped".to_string()], 10.0)
    }

    #[test]
    fn scale_loosens_both_directions() {
        let mut r = report();
        assert!(r.check("a", "o", 5e-9, 1e-9, Comparison::AtMost));
        assert!(r.check("b", "o", -5e-12, -1e-12, Comparison::AtLeast));
        assert!(!r.check("c", "o", f64::NAN, 1.0, Comparison::AtMost));
        assert_eq!(r.status(), Status::Fail);
        assert_eq!(r.status().exit_code(), 1);
    }

    #[test]
    fn disabled_checks_are_listed_not_run() {
        let mut r = report();
        assert!(r.check("skipped", "o", 1.0, 0.0, Comparison::AtMost));
        assert!(r.checks.is_empty());
        assert_eq!(r.disabled, vec!["skipped"]);
        assert_eq!(r.status(), Status::Pass);
    }

    #[test]
    fn json_names_oracle_and_tolerance() {
        let mut r = report();
        r.check("x", "closed form", 1e-10, 1e-9, Comparison::AtMost);
        let v = r.to_json();
        assert_eq!(v["checks"][0]["oracle"], "closed form");
        assert_eq!(v["checks"][0]["tolerance"], 1e-8);
        assert_eq!(v["status"], "pass");
        assert!(v.get("error").is_none());
        r.error = Some(Failure {
            module: "pde".into(),
            message: "boom".into(),
        });
        assert_eq!(r.to_json()["error"]["module"], "pde");
        assert_eq!(r.status().exit_code(), 3);
    }
}
