//! The `impact-pair` command line: `simulate`, `hysteresis`, `fit` and `process`.
//!
//! Settings are layered: preset values, then a flat JSON config file
//! (`--config`), then command-line flags. The resolved [`RunConfig`] is embedded
//! as a `# config {...}` comment in every output file.

mod commands;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::error::Error;

pub use commands::{run, scenario_for};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Failure of a command, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io { .. } | Error::Parse { .. } | Error::NonUniformSampling { .. } => {
                CliError::Io(msg)
            }
            Error::Chattering { .. }
            | Error::NonFiniteState { .. }
            | Error::ModeInconsistent { .. }
            | Error::InadmissibleTransition { .. } => CliError::Numerical(msg),
            _ => CliError::Config(msg),
        }
    }
}

/// Everything a run depends on. Unset parameter overrides fall back to the preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: String,
    pub preset: String,
    pub scenario: String,
    pub k: Option<f64>,
    pub alpha: Option<f64>,
    pub n: Option<f64>,
    pub xc: Option<f64>,
    pub b: Option<f64>,
    /// Initial approach speed of the idle-impulse scenario; only its magnitude is used.
    pub v2: Option<f64>,
    pub v_platform: Option<f64>,
    /// Initial distance between the passive body and the frame [m].
    pub gap: f64,
    pub t_end: Option<f64>,
    /// Integrator base step [s].
    pub dt: f64,
    /// Output sample rate [Hz].
    pub fs: Option<f64>,
    /// Low-pass cutoff for velocity reconstruction [Hz].
    pub fc: f64,
    pub seed: u64,
    /// Position noise for `simulate`, as a fraction of the position range.
    pub noise: f64,
    pub alphas: Vec<f64>,
    pub amplitude: f64,
    pub frequency: f64,
    pub decay: f64,
    pub cycles: u32,
    pub profile_dt: f64,
    pub input: Option<PathBuf>,
    pub free: Vec<String>,
    /// `name=lo:hi` search windows.
    pub bounds: Vec<String>,
    /// `name=value` starting points.
    pub init: Vec<String>,
    pub starts: usize,
    pub max_evals: usize,
    pub velocity_weight: Option<f64>,
    /// Grid size of the (k, alpha) objective surface written by `fit`; 0 disables it.
    pub profile: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let profile = crate::contact::CycleProfile::default();
        let fit = crate::ident::FitConfig::default();
        Self {
            command: String::new(),
            preset: "steel".into(),
            scenario: "idle-impulse".into(),
            k: None,
            alpha: None,
            n: None,
            xc: None,
            b: None,
            v2: None,
            v_platform: None,
            gap: 0.01,
            t_end: None,
            dt: crate::hybrid::IntegratorConfig::default().dt,
            fs: None,
            fc: crate::signal::FC_DEFAULT,
            seed: 0,
            noise: 0.0,
            alphas: vec![0.1, 1.0],
            amplitude: profile.amplitude,
            frequency: profile.frequency,
            decay: profile.decay,
            cycles: profile.cycles,
            profile_dt: profile.dt,
            input: None,
            free: vec!["k".into(), "alpha".into()],
            bounds: Vec::new(),
            init: Vec::new(),
            starts: fit.starts,
            max_evals: fit.max_evals,
            velocity_weight: None,
            profile: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Single-line JSON form used in output headers.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }

    /// Resolves defaults < `file` < `flags`.
    pub fn layered(command: &str, file: Option<&Path>, flags: &Flags) -> Result<Self, CliError> {
        let Value::Object(mut map) = to_value(&RunConfig::default())? else {
            unreachable!("RunConfig serializes to an object");
        };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let parsed: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let Value::Object(file_map) = parsed else {
                return Err(CliError::Config(format!(
                    "{}: config must be a flat JSON object",
                    path.display()
                )));
            };
            merge(&mut map, file_map)?;
        }
        let Value::Object(flag_map) = to_value(flags)? else {
            unreachable!("flags serialize to an object");
        };
        merge(&mut map, flag_map)?;
        map.insert("command".into(), Value::String(command.into()));
        serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Config(e.to_string()))
    }
}

fn to_value(v: &impl Serialize) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Config(e.to_string()))
}

fn merge(base: &mut Map<String, Value>, layer: Map<String, Value>) -> Result<(), CliError> {
    for (key, value) in layer {
        if !base.contains_key(&key) {
            return Err(CliError::Config(format!("unknown config key {key:?}")));
        }
        if value.is_object() {
            return Err(CliError::Config(format!("config key {key:?} must not be nested")));
        }
        base.insert(key, value);
    }
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "impact-pair", version, about = "Friction-coupled impact pair: simulation, hysteresis maps, filtering and fitting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write trajectory.csv and events.txt.
    Simulate(Flags),
    /// Write (p, p_dot, f) maps for several alpha values and their loop energies.
    Hysteresis(Flags),
    /// Fit contact parameters to a measured position trace.
    Fit(Flags),
    /// Reconstruct velocity from a position trace.
    Process(Flags),
}

impl Command {
    fn split(&self) -> (&'static str, &Flags) {
        match self {
            Command::Simulate(f) => ("simulate", f),
            Command::Hysteresis(f) => ("hysteresis", f),
            Command::Fit(f) => ("fit", f),
            Command::Process(f) => ("process", f),
        }
    }
}

/// Command-line overrides; every field maps onto the [`RunConfig`] key of the same name.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct Flags {
    /// Flat JSON file with RunConfig keys.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// steel or aluminium.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// idle-impulse or constant-drag.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xc: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_platform: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fs: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fc: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    /// Comma-separated alpha values for `hysteresis`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycles: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile_dt: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Comma-separated free parameters out of k, alpha, x_c, b, n.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub free: Option<Vec<String>>,
    /// Search window `name=lo:hi`; repeatable.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<String>>,
    /// Starting value `name=value`; repeatable.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<String>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_evals: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub velocity_weight: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<usize>,
    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (name, flags) = cli.command.split();
    let result = RunConfig::layered(name, flags.config.as_deref(), flags).and_then(|cfg| run(&cfg));
    match result {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    main_with(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"k": 2000, "alpha": 0.3, "seed": 7}"#).unwrap();
        let flags = Flags {
            alpha: Some(0.5),
            ..Flags::default()
        };
        let cfg = RunConfig::layered("simulate", Some(&path), &flags).unwrap();
        assert_eq!(cfg.k, Some(2000.0));
        assert_eq!(cfg.alpha, Some(0.5));
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.preset, "steel");
        assert_eq!(cfg.command, "simulate");
    }

    #[test]
    fn unknown_and_nested_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"stiffness": 1}"#).unwrap();
        let e = RunConfig::layered("simulate", Some(&path), &Flags::default()).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_CONFIG);
        std::fs::write(&path, r#"{"k": {"v": 1}}"#).unwrap();
        let e = RunConfig::layered("simulate", Some(&path), &Flags::default()).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_CONFIG);
        let e = RunConfig::layered("simulate", Some(&dir.path().join("nope.json")), &Flags::default())
            .unwrap_err();
        assert_eq!(e.exit_code(), EXIT_IO);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig {
            command: "fit".into(),
            k: Some(1.5e4),
            free: vec!["x_c".into()],
            ..RunConfig::default()
        };
        let back: RunConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(CliError::from(Error::Chattering { t: 0.0, cap: 1 }).exit_code(), EXIT_NUMERICAL);
        assert_eq!(CliError::from(Error::invalid("x")).exit_code(), EXIT_CONFIG);
        let io = Error::io("p", std::io::Error::other("x"));
        assert_eq!(CliError::from(io).exit_code(), EXIT_IO);
    }
}
