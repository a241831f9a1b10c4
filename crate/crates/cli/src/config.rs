//! Scenario files: TOML restricted to dotted keys, e.g.
//!
//! ```toml
//! pipeline = "pde"
//! params.nu = 1.0
//! potential.family = "harmonic"
//! potential.stiffness = 1.0
//! initial.a = 1.0
//! grid.t_end = 5.0
//! ```
//!
//! The file is flattened into `key path -> value` before anything is read,
//! so every diagnostic can name the offending path.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use kostin::{GridSpec, PacketState, PhysicalParams, Polynomial, Potential, TimeFunction};
use toml::Value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    Moments,
    Perturbation,
    Pde,
    Wigner,
    CrossValidate,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Moments => "moments",
            Pipeline::Perturbation => "perturbation",
            Pipeline::Pde => "pde",
            Pipeline::Wigner => "wigner",
            Pipeline::CrossValidate => "cross-validate",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "moments" => Pipeline::Moments,
            "perturbation" => Pipeline::Perturbation,
            "pde" => Pipeline::Pde,
            "wigner" => Pipeline::Wigner,
            "cross-validate" | "cross_validate" => Pipeline::CrossValidate,
            _ => return None,
        })
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Integrator tolerances.
    pub rtol: f64,
    pub atol: f64,
    /// Multiplies every check tolerance.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: Format,
    pub snapshots: Vec<f64>,
    pub gnuplot: bool,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub pipeline: Pipeline,
    pub params: PhysicalParams,
    pub potential: Potential,
    pub initial: PacketState,
    pub grid: GridSpec,
    pub tolerances: Tolerances,
    pub output: OutputConfig,
    pub disabled_checks: Vec<String>,
    /// The flattened entries the configuration was built from.
    pub entries: BTreeMap<String, Value>,
}

const KEYS: &[&str] = &[
    "pipeline",
    "params.hbar",
    "params.mass",
    "params.nu",
    "potential.family",
    "potential.stiffness",
    "potential.omega0",
    "potential.force",
    "potential.coefficients",
    "initial.t",
    "initial.q",
    "initial.qdot",
    "initial.a",
    "initial.adot",
    "grid.x_min",
    "grid.x_max",
    "grid.n_points",
    "grid.dt",
    "grid.t_end",
    "tolerances.rtol",
    "tolerances.atol",
    "tolerances.scale",
    "output.dir",
    "output.format",
    "output.snapshots",
    "output.gnuplot",
    "checks.disable",
];

/// Sub-keys of a time-dependent coefficient such as `potential.stiffness`.
const TIME_KEYS: &[&str] = &["offset", "amplitude", "angular_frequency", "phase", "times", "values"];

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&path, t, out),
            other => {
                out.insert(path, other.clone());
            }
        }
    }
}

/// Parses scenario text into flattened entries.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, Value>, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| err("<file>", e.message().trim()))?;
    let mut out = BTreeMap::new();
    flatten("", &table, &mut out);
    Ok(out)
}

struct Reader<'a> {
    entries: &'a BTreeMap<String, Value>,
}

impl Reader<'_> {
    fn float(&self, path: &str) -> Result<Option<f64>, ConfigError> {
        match self.entries.get(path) {
            None => Ok(None),
            Some(v) => {
                let x = match v {
                    Value::Float(x) => *x,
                    Value::Integer(i) => *i as f64,
                    _ => return Err(err(path, "expected a number")),
                };
                if !x.is_finite() {
                    return Err(err(path, format!("must be finite, got {x}")));
                }
                Ok(Some(x))
            }
        }
    }

    fn float_or(&self, path: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.float(path)?.unwrap_or(default))
    }

    fn required(&self, path: &str) -> Result<f64, ConfigError> {
        self.float(path)?.ok_or_else(|| err(path, "required"))
    }

    fn positive(&self, path: &str, value: f64) -> Result<f64, ConfigError> {
        if value > 0.0 {
            Ok(value)
        } else {
            Err(err(path, format!("must be > 0, got {value}")))
        }
    }

    fn string(&self, path: &str) -> Result<Option<&str>, ConfigError> {
        match self.entries.get(path) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(err(path, "expected a string")),
        }
    }

    fn count(&self, path: &str) -> Result<Option<usize>, ConfigError> {
        match self.entries.get(path) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(Value::Float(x)) if *x >= 0.0 && x.fract() == 0.0 && *x < 1e15 => Ok(Some(*x as usize)),
            Some(_) => Err(err(path, "expected a non-negative integer")),
        }
    }

    fn floats(&self, path: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.entries.get(path) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, v)| match v {
                    Value::Float(x) if x.is_finite() => Ok(*x),
                    Value::Integer(n) => Ok(*n as f64),
                    _ => Err(err(&format!("{path}[{i}]"), "expected a finite number")),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(err(path, "expected an array of numbers")),
        }
    }

    fn strings(&self, path: &str) -> Result<Vec<String>, ConfigError> {
        match self.entries.get(path) {
            None => Ok(Vec::new()),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, v)| match v {
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(err(&format!("{path}[{i}]"), "expected a string")),
                })
                .collect(),
            Some(_) => Err(err(path, "expected an array of strings")),
        }
    }

    /// A coefficient given either as a number or as `path.offset`,
    /// `path.amplitude`, ... (sinusoid) or `path.times` / `path.values`.
    fn time_function(&self, path: &str) -> Result<Option<TimeFunction>, ConfigError> {
        if let Some(x) = self.float(path)? {
            return Ok(Some(TimeFunction::Constant(x)));
        }
        let sub = |k: &str| format!("{path}.{k}");
        if let Some(times) = self.floats(&sub("times"))? {
            let values = self
                .floats(&sub("values"))?
                .ok_or_else(|| err(&sub("values"), "required with times"))?;
            return TimeFunction::tabulated(times, values)
                .map(Some)
                .map_err(|e| err(path, e.to_string()));
        }
        let keys = ["offset", "amplitude", "angular_frequency", "phase"];
        if keys.iter().all(|k| !self.entries.contains_key(&sub(k))) {
            return Ok(None);
        }
        Ok(Some(TimeFunction::Sinusoid {
            offset: self.float_or(&sub("offset"), 0.0)?,
            amplitude: self.float_or(&sub("amplitude"), 0.0)?,
            angular_frequency: self.float_or(&sub("angular_frequency"), 0.0)?,
            phase: self.float_or(&sub("phase"), 0.0)?,
        }))
    }
}

fn check_keys(entries: &BTreeMap<String, Value>) -> Result<(), ConfigError> {
    for key in entries.keys() {
        let known = KEYS.contains(&key.as_str())
            || ["potential.stiffness.", "potential.force."].iter().any(|p| {
                key.strip_prefix(p).is_some_and(|rest| TIME_KEYS.contains(&rest))
            });
        if !known {
            return Err(err(key, "unknown key"));
        }
    }
    Ok(())
}

fn potential(r: &Reader, params: &PhysicalParams) -> Result<Potential, ConfigError> {
    let family = r.string("potential.family")?.unwrap_or("free");
    let pot = match family {
        "free" => Potential::Free,
        "harmonic" => {
            let stiffness = match (r.time_function("potential.stiffness")?, r.float("potential.omega0")?) {
                (Some(_), Some(_)) => {
                    return Err(err("potential.omega0", "give either stiffness or omega0, not both"))
                }
                (Some(k), None) => k,
                (None, Some(w)) => TimeFunction::Constant(params.mass * w * w),
                (None, None) => return Err(err("potential.stiffness", "required for the harmonic family")),
            };
            Potential::Harmonic { stiffness }
        }
        "uniform_force" => Potential::UniformForce {
            force: r
                .time_function("potential.force")?
                .ok_or_else(|| err("potential.force", "required for the uniform_force family"))?,
        },
        "polynomial" => {
            let c = r
                .floats("potential.coefficients")?
                .ok_or_else(|| err("potential.coefficients", "required for the polynomial family"))?;
            Potential::Polynomial(Polynomial::new(&c).map_err(|e| err("potential.coefficients", e.to_string()))?)
        }
        other => {
            return Err(err(
                "potential.family",
                format!("unknown family {other:?} (free, harmonic, uniform_force, polynomial)"),
            ))
        }
    };
    Ok(pot)
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_entries(parse_entries(text)?)
    }

    pub fn from_entries(entries: BTreeMap<String, Value>) -> Result<Self, ConfigError> {
        check_keys(&entries)?;
        let r = Reader { entries: &entries };

        let pipeline = match r.string("pipeline")? {
            None => return Err(err("pipeline", "required")),
            Some(s) => Pipeline::parse(s).ok_or_else(|| {
                err(
                    "pipeline",
                    format!("unknown pipeline {s:?} (moments, perturbation, pde, wigner, cross-validate)"),
                )
            })?,
        };

        let hbar = r.positive("params.hbar", r.float_or("params.hbar", 1.0)?)?;
        let mass = r.positive("params.mass", r.float_or("params.mass", 1.0)?)?;
        let nu = r.float_or("params.nu", 0.0)?;
        if nu < 0.0 {
            return Err(err("params.nu", format!("must be >= 0, got {nu}")));
        }
        let params = PhysicalParams::new(hbar, mass, nu).map_err(|e| err("params", e.to_string()))?;

        let potential = potential(&r, &params)?;

        let a = r.required("initial.a")?;
        r.positive("initial.a", a)?;
        let initial = PacketState::new(
            r.float_or("initial.t", 0.0)?,
            r.float_or("initial.q", 0.0)?,
            r.float_or("initial.qdot", 0.0)?,
            a,
            r.float_or("initial.adot", 0.0)?,
        )
        .map_err(|e| err("initial", e.to_string()))?;

        let t_end = r.required("grid.t_end")?;
        if !(t_end > initial.t) {
            return Err(err("grid.t_end", format!("must exceed initial.t = {}", initial.t)));
        }
        let n_points = r.count("grid.n_points")?.unwrap_or(1024);
        if n_points < 16 {
            return Err(err("grid.n_points", format!("need at least 16, got {n_points}")));
        }
        let auto = GridSpec::for_packet(&params, &initial, t_end, n_points).map_err(|e| err("grid", e.to_string()))?;
        let (x_min, x_max) = match (r.float("grid.x_min")?, r.float("grid.x_max")?) {
            (Some(lo), Some(hi)) if hi > lo => (lo, hi),
            (Some(_), Some(_)) => return Err(err("grid.x_max", "must exceed grid.x_min")),
            (None, None) => (auto.x_min, auto.x_max),
            (Some(_), None) => return Err(err("grid.x_max", "required with grid.x_min")),
            (None, Some(_)) => return Err(err("grid.x_min", "required with grid.x_max")),
        };
        let dt = match r.float("grid.dt")? {
            Some(dt) => r.positive("grid.dt", dt)?,
            None => GridSpec::default_dt(&params, (x_max - x_min) / n_points as f64),
        };
        let grid = GridSpec::new(x_min, x_max, n_points, dt, t_end).map_err(|e| err("grid", e.to_string()))?;

        let rtol = r.positive("tolerances.rtol", r.float_or("tolerances.rtol", 1e-10)?)?;
        let atol = r.positive("tolerances.atol", r.float_or("tolerances.atol", 1e-12)?)?;
        let scale = r.positive("tolerances.scale", r.float_or("tolerances.scale", 1.0)?)?;

        let format = match r.string("output.format")? {
            None | Some("csv") => Format::Csv,
            Some("json") => Format::Json,
            Some(other) => return Err(err("output.format", format!("expected csv or json, got {other:?}"))),
        };
        let gnuplot = match entries.get("output.gnuplot") {
            None => false,
            Some(Value::Boolean(b)) => *b,
            Some(_) => return Err(err("output.gnuplot", "expected a boolean")),
        };
        let snapshots = r.floats("output.snapshots")?.unwrap_or_default();
        for (i, &t) in snapshots.iter().enumerate() {
            if t < initial.t || t > t_end {
                return Err(err(
                    &format!("output.snapshots[{i}]"),
                    format!("{t} lies outside [{}, {t_end}]", initial.t),
                ));
            }
        }
        let output = OutputConfig {
            dir: PathBuf::from(r.string("output.dir")?.unwrap_or("kostin-out")),
            format,
            snapshots,
            gnuplot,
        };
        let disabled_checks = r.strings("checks.disable")?;

        match pipeline {
            Pipeline::Perturbation => {
                if nu <= 0.0 {
                    return Err(err("params.nu", "the perturbation pipeline needs nu > 0"));
                }
                if !matches!(potential, Potential::Free | Potential::UniformForce { .. }) {
                    return Err(err(
                        "potential.family",
                        "the perturbation pipeline needs free or uniform_force",
                    ));
                }
            }
            Pipeline::CrossValidate => {
                if !potential.is_quadratic_or_lower() {
                    return Err(err(
                        "potential.family",
                        "cross-validate needs a potential of degree two or lower",
                    ));
                }
            }
            _ => {}
        }

        Ok(Self {
            pipeline,
            params,
            potential,
            initial,
            grid,
            tolerances: Tolerances { rtol, atol, scale },
            output,
            disabled_checks,
            entries,
        })
    }
}

/// Replaces one entry with a number, as `sweep --vary` does.
pub fn with_override(entries: &BTreeMap<String, Value>, key: &str, value: f64) -> BTreeMap<String, Value> {
    let mut out = entries.clone();
    let v = match entries.get(key) {
        Some(Value::Integer(_)) if value.fract() == 0.0 => Value::Integer(value as i64),
        _ if key == "grid.n_points" && value.fract() == 0.0 => Value::Integer(value as i64),
        _ => Value::Float(value),
    };
    out.insert(key.to_string(), v);
    out
}

/// `key=start:stop:count`, evenly spaced and inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct Vary {
    pub key: String,
    pub values: Vec<f64>,
}

impl std::str::FromStr for Vary {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (key, range) = s.split_once('=').ok_or("expected key=start:stop:count")?;
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err("expected key=start:stop:count".into());
        }
        let start: f64 = parts[0].parse().map_err(|_| format!("bad start {:?}", parts[0]))?;
        let stop: f64 = parts[1].parse().map_err(|_| format!("bad stop {:?}", parts[1]))?;
        let count: usize = parts[2].parse().map_err(|_| format!("bad count {:?}", parts[2]))?;
        if count == 0 || !start.is_finite() || !stop.is_finite() {
            return Err("count must be >= 1 and the range finite".into());
        }
        let values = (0..count)
            .map(|i| {
                if count == 1 {
                    start
                } else {
                    start + (stop - start) * i as f64 / (count - 1) as f64
                }
            })
            .collect();
        Ok(Vary {
            key: key.trim().to_string(),
            values,
        })
    }
}
