use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kostin_cli::config::{parse_entries, with_override};
use kostin_cli::{run_scenario, ConfigError, Format, ScenarioConfig, Status, Vary};
use serde_json::json;

#[derive(Parser)]
#[command(name = "kostin", version, about = "Dissipative quantum dynamics scenarios")]
struct Cli {
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of the data tables (overrides output.format).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Multiplies every check tolerance.
    #[arg(long, global = true)]
    tol_scale: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario.
    Run { config: PathBuf },
    /// Parse and validate a scenario without running it.
    Validate { config: PathBuf },
    /// Run a scenario once per value of one key.
    Sweep {
        config: PathBuf,
        /// key=start:stop:count
        #[arg(long)]
        vary: Vary,
    },
}

fn read_entries(path: &Path) -> Result<std::collections::BTreeMap<String, toml::Value>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_entries(&text)
}

impl Cli {
    fn apply(&self, cfg: &mut ScenarioConfig) -> Result<(), ConfigError> {
        if let Some(dir) = &self.out {
            cfg.output.dir = dir.clone();
        }
        if let Some(f) = self.format {
            cfg.output.format = f;
        }
        if let Some(s) = self.tol_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(ConfigError {
                    path: "--tol-scale".into(),
                    message: format!("must be finite and > 0, got {s}"),
                });
            }
            cfg.tolerances.scale *= s;
        }
        Ok(())
    }

    fn load(&self, path: &Path) -> Result<ScenarioConfig, ConfigError> {
        let mut cfg = ScenarioConfig::from_entries(read_entries(path)?)?;
        self.apply(&mut cfg)?;
        Ok(cfg)
    }
}

fn config_error(e: &ConfigError) -> ExitCode {
    eprintln!("config error: {e}");
    ExitCode::from(Status::ConfigError.exit_code())
}

fn summarize(report: &kostin_cli::Report) {
    for c in &report.checks {
        let op = match c.comparison {
            kostin_cli::report::Comparison::AtMost => "<=",
            kostin_cli::report::Comparison::AtLeast => ">=",
        };
        println!(
            "{} {:<28} {:.3e} {op} {:.3e}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.tolerance
        );
    }
    if let Some(f) = &report.error {
        println!("ERROR {}: {}", f.module, f.message);
    }
    println!("status: {}", report.status().name());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Validate { config } => match cli.load(config) {
            Ok(cfg) => {
                println!("{}: valid {} scenario", config.display(), cfg.pipeline);
                ExitCode::SUCCESS
            }
            Err(e) => config_error(&e),
        },
        Command::Run { config } => match cli.load(config) {
            Ok(cfg) => {
                let report = run_scenario(&cfg);
                summarize(&report);
                ExitCode::from(report.status().exit_code())
            }
            Err(e) => config_error(&e),
        },
        Command::Sweep { config, vary } => {
            let base = match cli.load(config) {
                Ok(cfg) => cfg,
                Err(e) => return config_error(&e),
            };
            let root = base.output.dir.clone();
            let mut runs = Vec::new();
            let mut worst = Status::Pass;
            for (i, &value) in vary.values.iter().enumerate() {
                let entries = with_override(&base.entries, &vary.key, value);
                let dir = root.join(format!("sweep_{i:03}"));
                let status = match ScenarioConfig::from_entries(entries).and_then(|mut cfg| {
                    cli.apply(&mut cfg)?;
                    cfg.output.dir = dir.clone();
                    Ok(cfg)
                }) {
                    Ok(cfg) => {
                        let report = run_scenario(&cfg);
                        let checks: serde_json::Map<String, serde_json::Value> =
                            report.checks.iter().map(|c| (c.name.clone(), json!(c.pass))).collect();
                        runs.push(json!({
                            "value": value,
                            "dir": format!("sweep_{i:03}"),
                            "status": report.status().name(),
                            "checks": checks,
                        }));
                        report.status()
                    }
                    Err(e) => {
                        eprintln!("config error for {} = {value}: {e}", vary.key);
                        runs.push(json!({ "value": value, "status": Status::ConfigError.name(), "message": e.to_string() }));
                        Status::ConfigError
                    }
                };
                println!("{} = {value}: {}", vary.key, status.name());
                worst = worst.max(status);
            }
            let summary = json!({ "key": vary.key, "status": worst.name(), "runs": runs });
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
            if let Err(e) = fs::create_dir_all(&root).and_then(|_| fs::write(root.join("sweep.json"), text)) {
                eprintln!("cannot write sweep summary: {e}");
                return ExitCode::from(Status::Error.exit_code());
            }
            ExitCode::from(worst.exit_code())
        }
    }
}
