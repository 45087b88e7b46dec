//! Run and sweep settings. Files are TOML: flat `key = value` pairs under
//! `[run]` and `[sweep]` headers. Every command-line flag has a key of the
//! same name in `[run]`, and flags win over the file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lcap_core::process::Lattice;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DESK_REGION: f64 = 2000.0;
pub const DESK_SAMPLES: usize = 1000;
pub const FULL_REGION: f64 = 10_000.0;
pub const FULL_SAMPLES: usize = 10_000;
pub const DEFAULT_D: f64 = 25.0;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_GRID_SAMPLES: usize = 4;

/// Carrier-sense threshold at `alpha = 4` when none is given. At other
/// exponents the default keeps the same single-interferer radius.
pub const REFERENCE_THETA: f64 = 1e-5;

/// Radius at which one interferer alone reaches [`REFERENCE_THETA`] at
/// `alpha = 4`.
pub fn sense_radius() -> f64 {
    REFERENCE_THETA.powf(-0.25)
}

/// Scheme names as typed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SchemeName {
    Grid(Lattice),
    /// Closed form.
    Aloha,
    /// Poisson sets with traced contours.
    AlohaMc,
    Coloring,
    Csma,
}

impl SchemeName {
    pub const ALL: [SchemeName; 7] = [
        SchemeName::Grid(Lattice::Triangular),
        SchemeName::Grid(Lattice::Square),
        SchemeName::Grid(Lattice::Hexagonal),
        SchemeName::Coloring,
        SchemeName::Csma,
        SchemeName::Aloha,
        SchemeName::AlohaMc,
    ];

    pub const TRIANGULAR: SchemeName = SchemeName::Grid(Lattice::Triangular);
}

impl fmt::Display for SchemeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SchemeName::Grid(Lattice::Square) => "grid:square",
            SchemeName::Grid(Lattice::Hexagonal) => "grid:hex",
            SchemeName::Grid(Lattice::Triangular) => "grid:tri",
            SchemeName::Aloha => "aloha",
            SchemeName::AlohaMc => "aloha-mc",
            SchemeName::Coloring => "coloring",
            SchemeName::Csma => "csma",
        };
        f.write_str(s)
    }
}

impl FromStr for SchemeName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "grid:square" => SchemeName::Grid(Lattice::Square),
            "grid:hex" | "grid:hexagonal" => SchemeName::Grid(Lattice::Hexagonal),
            "grid:tri" | "grid:triangular" => SchemeName::Grid(Lattice::Triangular),
            "aloha" => SchemeName::Aloha,
            "aloha-mc" => SchemeName::AlohaMc,
            "coloring" => SchemeName::Coloring,
            "csma" => SchemeName::Csma,
            other => {
                return Err(format!(
                    "unknown scheme {other:?} (expected grid:square, grid:hex, grid:tri, aloha, aloha-mc, coloring or csma)"
                ))
            }
        })
    }
}

impl TryFrom<String> for SchemeName {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SchemeName> for String {
    fn from(s: SchemeName) -> String {
        s.to_string()
    }
}

/// Settings shared by all commands. Unset keys fall back to defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Grid spacing, coloring distance and `lambda^-1/2` for ALOHA.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Side of the square region in meters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full_scale: Option<bool>,
}

impl RunConfig {
    /// `self` with every key set in `top` replaced.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        RunConfig {
            scheme: top.scheme.or(self.scheme),
            beta: top.beta.or(self.beta),
            beta_db: top.beta_db.or(self.beta_db),
            alpha: top.alpha.or(self.alpha),
            d: top.d.or(self.d),
            theta: top.theta.or(self.theta),
            dt: top.dt.or(self.dt),
            samples: top.samples.or(self.samples),
            seed: top.seed.or(self.seed),
            region: top.region.or(self.region),
            out: top.out.or(self.out),
            full_scale: top.full_scale.or(self.full_scale),
        }
    }

    pub fn full_scale(&self) -> bool {
        self.full_scale.unwrap_or(false)
    }

    pub fn samples(&self) -> usize {
        self.samples
            .unwrap_or(if self.full_scale() { FULL_SAMPLES } else { DESK_SAMPLES })
    }

    pub fn region(&self) -> f64 {
        self.region
            .unwrap_or(if self.full_scale() { FULL_REGION } else { DESK_REGION })
    }

    pub fn d(&self) -> f64 {
        self.d.unwrap_or(DEFAULT_D)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    /// Carrier-sense threshold for path-loss exponent `alpha`.
    pub fn theta(&self, alpha: f64) -> f64 {
        self.theta.unwrap_or_else(|| sense_radius().powf(-alpha))
    }

    /// Linear SIR threshold from `beta` or `beta_db`.
    pub fn beta(&self) -> Result<Option<f64>, CliError> {
        match (self.beta, self.beta_db) {
            (Some(_), Some(_)) => Err(CliError::Usage("give either beta or beta_db, not both".into())),
            (Some(b), None) => Ok(Some(b)),
            (None, Some(db)) => Ok(Some(10f64.powf(db / 10.0))),
            (None, None) => Ok(None),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x.is_finite() && x > 0.0) => Err(CliError::Usage(format!("{name} must be positive, got {x}"))),
            _ => Ok(()),
        };
        positive("beta", self.beta)?;
        positive("d", self.d)?;
        positive("theta", self.theta)?;
        positive("dt", self.dt)?;
        positive("region", self.region)?;
        if let Some(db) = self.beta_db {
            if !db.is_finite() {
                return Err(CliError::Usage(format!("beta_db must be finite, got {db}")));
            }
        }
        if let Some(a) = self.alpha {
            if !(a.is_finite() && a > 2.0) {
                return Err(CliError::Usage(format!("alpha must exceed 2, got {a}")));
            }
        }
        if self.samples == Some(0) {
            return Err(CliError::Usage("samples must be at least 1".into()));
        }
        self.beta()?;
        Ok(())
    }
}

fn default_fixed_beta() -> f64 {
    10.0
}

fn default_fixed_alpha() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub schemes: Vec<SchemeName>,
    /// Linear thresholds swept at `fixed_alpha`.
    pub beta_values: Vec<f64>,
    /// Exponents swept at `fixed_beta`.
    pub alpha_values: Vec<f64>,
    #[serde(default = "default_fixed_beta")]
    pub fixed_beta: f64,
    #[serde(default = "default_fixed_alpha")]
    pub fixed_alpha: f64,
    /// Samples for grid schemes, which differ only by their random offset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_samples: Option<usize>,
    #[serde(default)]
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub sweep: SweepSection,
    #[serde(default)]
    pub run: RunConfig,
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.sweep;
        if s.schemes.is_empty() || s.beta_values.is_empty() || s.alpha_values.is_empty() {
            return Err(CliError::Usage(
                "schemes, beta_values and alpha_values must be nonempty".into(),
            ));
        }
        for &b in s.beta_values.iter().chain([&s.fixed_beta]) {
            if !(b.is_finite() && b > 0.0) {
                return Err(CliError::Usage(format!("beta values must be positive, got {b}")));
            }
        }
        for &a in s.alpha_values.iter().chain([&s.fixed_alpha]) {
            if !(a.is_finite() && a > 2.0) {
                return Err(CliError::Usage(format!("alpha values must exceed 2, got {a}")));
            }
        }
        if s.grid_samples == Some(0) {
            return Err(CliError::Usage("grid_samples must be at least 1".into()));
        }
        self.run.validate()
    }

    /// The settings that determine the results, as TOML. The output path is
    /// left out so a run can be repeated elsewhere.
    pub fn echo(&self) -> String {
        let mut cfg = self.clone();
        cfg.run.out = None;
        toml::to_string(&cfg).expect("config serializes")
    }

    pub fn grid_samples(&self) -> usize {
        self.sweep
            .grid_samples
            .unwrap_or(DEFAULT_GRID_SAMPLES)
            .min(self.run.samples())
    }
}

/// Reads a `[run]`-only file for the single-run commands.
pub fn load_run(path: &Path) -> Result<RunConfig, CliError> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct RunFile {
        #[serde(default)]
        run: RunConfig,
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let f: RunFile = toml::from_str(&text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    Ok(f.run)
}

/// Recovers the config echoed between the marker lines of a results file.
pub fn config_from_header(text: &str) -> Result<SweepConfig, CliError> {
    let mut body = String::new();
    let mut inside = false;
    for line in text.lines() {
        match line {
            crate::output::CONFIG_BEGIN => inside = true,
            crate::output::CONFIG_END => break,
            _ if inside => {
                let l = line.strip_prefix('#').unwrap_or(line);
                body.push_str(l.strip_prefix(' ').unwrap_or(l));
                body.push('\n');
            }
            _ => {}
        }
    }
    if !inside {
        return Err(CliError::Usage("no echoed config in file".into()));
    }
    SweepConfig::parse(&body)
}
