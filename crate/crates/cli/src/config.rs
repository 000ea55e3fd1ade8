use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "MONOCHAIN_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Spectral,
    Toda,
    Nahm,
}

impl std::str::FromStr for Stage {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "spectral" => Ok(Stage::Spectral),
            "toda" => Ok(Stage::Toda),
            "nahm" => Ok(Stage::Nahm),
            other => Err(CliError::Config(format!("unknown stage '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Vtk,
    Json,
}

impl std::str::FromStr for Format {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "vtk" => Ok(Format::Vtk),
            "json" => Ok(Format::Json),
            other => Err(CliError::Config(format!("unknown format '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub k: i64,
    pub l: i64,
    pub c_abs: f64,
    pub c_phase: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Half-length L of the cylinder; max(6/β, 3k/β) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_length: Option<f64>,
    pub n_r: usize,
    pub n_t: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TodaSettings {
    pub tol: f64,
    pub max_steps: usize,
    /// Step size as a fraction of the explicit stability limit.
    pub dt_factor: f64,
    /// Residual below which Newton polishing takes over.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_switch: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Half-width of the (y₁, y₂) square; 3k/β when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    pub n12: usize,
    pub n3: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
    pub checkpoint: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsConfig,
    pub grid: GridConfig,
    pub toda: TodaSettings,
    pub scan: ScanConfig,
    pub stages: Vec<Stage>,
    pub output: OutputConfig,
    /// Scan workers; machine parallelism when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub seed: u64,
}

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("monochain-out"))
}

impl Default for RunConfig {
    fn default() -> Self {
        let toda = monochain::toda::TodaConfig::default();
        Self {
            params: ParamsConfig {
                k: 2,
                l: 1,
                c_abs: 1.0,
                c_phase: 0.0,
                beta: 2.0 * std::f64::consts::PI,
            },
            grid: GridConfig {
                half_length: None,
                n_r: 48,
                n_t: 48,
            },
            toda: TodaSettings {
                tol: toda.tol,
                max_steps: toda.max_steps,
                dt_factor: toda.dt_factor,
                newton_switch: toda.newton_switch,
            },
            scan: ScanConfig {
                half_width: None,
                n12: 33,
                n3: 16,
            },
            stages: vec![Stage::Spectral, Stage::Toda, Stage::Nahm],
            output: OutputConfig {
                directory: default_output_dir(),
                formats: vec![Format::Json],
                checkpoint: false,
            },
            threads: None,
            seed: 7,
        }
    }
}

impl RunConfig {
    /// Reads TOML or JSON, chosen by the file extension.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn has(&self, s: Stage) -> bool {
        self.stages.contains(&s)
    }

    /// Stages sorted in pipeline order without duplicates.
    pub fn ordered_stages(&self) -> Vec<Stage> {
        let mut s = self.stages.clone();
        s.sort();
        s.dedup();
        s
    }

    pub fn thread_count(&self) -> usize {
        self.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.stages.is_empty() {
            return bad("no stages requested");
        }
        if self.has(Stage::Nahm) && !self.has(Stage::Toda) {
            return bad("stage 'nahm' requires stage 'toda'");
        }
        if self.params.k < 1 {
            return bad("k must be positive");
        }
        if !(self.params.beta > 0.0 && self.params.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(self.params.c_abs > 0.0 && self.params.c_abs.is_finite()) {
            return bad("c-abs must be positive");
        }
        if !self.params.c_phase.is_finite() {
            return bad("c-phase must be finite");
        }
        if let Some(l) = self.grid.half_length {
            if !(l > 0.0 && l.is_finite()) {
                return bad("domain half-length must be positive");
            }
        }
        if self.grid.n_r < 4 || self.grid.n_r % 2 != 0 || self.grid.n_t < 3 {
            return bad("grid needs an even n_r >= 4 and n_t >= 3");
        }
        if !(self.toda.tol > 0.0) || self.toda.max_steps == 0 || !(self.toda.dt_factor > 0.0) {
            return bad("toda tolerance, step budget and dt factor must be positive");
        }
        if let Some(w) = self.scan.half_width {
            if !(w > 0.0 && w.is_finite()) {
                return bad("y extent must be positive");
            }
        }
        if self.scan.n12 < 3 || self.scan.n3 < 3 {
            return bad("need at least 3 y-points per axis");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        Ok(())
    }
}
