//! Run configuration: a TOML document naming one experiment, the noise
//! environment, named grids and the experiment's own section.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Spanned;
use trispin::device::DeviceParams;
use trispin::experiments::b_calibration::BCalibrationParams;
use trispin::experiments::free_evolution::{FreeEvolutionParams, PowerLawWindow, T2StarOptions};
use trispin::experiments::levels::SweptPair;
use trispin::experiments::lpi_sweep::LpiSweepParams;
use trispin::experiments::spectroscopy::SpectroscopyParams;
use trispin::experiments::{GaugePolicy, NoiseEnv};
use trispin::hamiltonian::DEFAULT_G_MU_B_MHZ_PER_T;
use trispin::noise::{ChargeNoiseModel, HyperfineModel};

/// Experiments in listing order, with one-line descriptions.
pub const EXPERIMENTS: [(&str, &str); 7] = [
    ("spectrum", "eigenvalues of the noiseless Hamiltonian along one swept coupling"),
    ("lpi-sweep", "RB-interleaved P0 map over two gate voltages with LPI disc detection"),
    ("leakage-spectroscopy", "leakage after a long dwell versus uniform field, with Gaussian fits"),
    ("free-evolution", "P0, P0->1, PL and P+ traces at one exchange configuration"),
    ("t2star-scan", "coherence time versus qubit-leakage gap at the LPI, with power-law fits"),
    ("leakage-vs-gap", "leakage at fixed dwell versus gap at the LPI, with a log-log slope"),
    ("b-calibration", "coil calibration from leakage crossings and exchange oscillations"),
];

/// Schema violation, with the line of the offending key when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub scale: Scale,
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        if self.points == 0 {
            return Err("points must be >= 1".into());
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err("start and stop must be finite".into());
        }
        if self.points == 1 {
            return Ok(vec![self.start]);
        }
        let n = (self.points - 1) as f64;
        match self.scale {
            Scale::Linear => Ok((0..self.points)
                .map(|k| self.start + (self.stop - self.start) * k as f64 / n)
                .collect()),
            Scale::Log => {
                if !(self.start > 0.0 && self.stop > 0.0) {
                    return Err("log grids need start > 0 and stop > 0".into());
                }
                let (a, b) = (self.start.ln(), self.stop.ln());
                Ok((0..self.points).map(|k| (a + (b - a) * k as f64 / n).exp()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    pub g_mu_b_mhz_per_t: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            g_mu_b_mhz_per_t: DEFAULT_G_MU_B_MHZ_PER_T,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub j12_mhz: f64,
    pub j23_mhz: f64,
    pub j13_mhz: f64,
    #[serde(default)]
    pub bz_mhz: f64,
    /// Coupling replaced by the grid values.
    #[serde(default)]
    pub swept: SweptPair,
    pub axis: Spanned<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpiSweepConfig {
    /// Grid offsets (V) added to the ideal-device estimate `V0·ln(J/J0)`.
    pub x_axis: Spanned<String>,
    pub y_axis: Spanned<String>,
    #[serde(flatten)]
    pub params: LpiSweepParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageSpectroscopyConfig {
    /// Uniform-field grid (MHz).
    pub axis: Spanned<String>,
    #[serde(flatten)]
    pub params: SpectroscopyParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEvolutionConfig {
    /// Dwell-time grid (µs).
    pub axis: Spanned<String>,
    #[serde(flatten)]
    pub params: FreeEvolutionParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeCalibration {
    pub gap_mhz: f64,
    /// T2* at `gap_mhz` as a fraction of the exchange-off value.
    pub fraction: f64,
    pub bracket_volts: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct T2StarScanConfig {
    /// Gap grid (MHz).
    pub axis: Spanned<String>,
    /// Prepend gap 0, the exchange-off baseline, to the grid.
    #[serde(default = "yes")]
    pub include_baseline: bool,
    #[serde(default)]
    pub bz_mhz: f64,
    #[serde(default)]
    pub gauge: GaugePolicy,
    #[serde(default = "default_prep_j")]
    pub prep_j_mhz: f64,
    #[serde(default)]
    pub options: T2StarOptions,
    #[serde(default)]
    pub low_window: Option<PowerLawWindow>,
    #[serde(default)]
    pub high_window: Option<PowerLawWindow>,
    /// Rescale the hyperfine width so the exchange-off T2* equals this (µs).
    #[serde(default)]
    pub calibrate_hyperfine_us: Option<f64>,
    #[serde(default)]
    pub calibrate_charge: Option<ChargeCalibration>,
}

fn yes() -> bool {
    true
}

fn default_prep_j() -> f64 {
    200.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeakageVsGapConfig {
    pub axis: Spanned<String>,
    #[serde(default)]
    pub bz_mhz: f64,
    pub dwell_us: f64,
    #[serde(default)]
    pub gauge: GaugePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Spanned<String>,
    pub shots: usize,
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub constants: Constants,
    #[serde(default)]
    pub device: DeviceParams,
    #[serde(default)]
    pub hyperfine: HyperfineModel,
    #[serde(default)]
    pub charge: ChargeNoiseModel,
    #[serde(default)]
    pub grids: BTreeMap<String, GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lpi_sweep: Option<LpiSweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leakage_spectroscopy: Option<LeakageSpectroscopyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_evolution: Option<FreeEvolutionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2star_scan: Option<T2StarScanConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leakage_vs_gap: Option<LeakageVsGapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_calibration: Option<BCalibrationParams>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Section key of an experiment name (`lpi-sweep` -> `lpi_sweep`).
pub fn section_key(experiment: &str) -> String {
    experiment.replace('-', "_")
}

impl RunConfig {
    /// Parses and validates a config document.
    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| toml_error(src, &e))?;
        // flattened sections cannot deny unknown keys; every key given must
        // survive a round trip through the typed config
        let raw: toml::Table = toml::from_str(src).map_err(|e| toml_error(src, &e))?;
        let typed: toml::Table = toml::from_str(&cfg.to_toml()).expect("serialized config parses");
        if let Some(path) = unknown_key(&raw, &typed, "") {
            let leaf = path.rsplit('.').next().unwrap_or(&path);
            return Err(err(key_line(src, leaf), format!("unknown key `{path}`")));
        }
        cfg.validate(Some(src))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| err(None, format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&src)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn experiment(&self) -> &str {
        self.experiment.get_ref()
    }

    fn at(&self, src: Option<&str>, span: std::ops::Range<usize>) -> Option<usize> {
        src.map(|s| line_of(s, span.start))
    }

    /// Checks invariants serde cannot express. `src` enables line numbers.
    pub fn validate(&self, src: Option<&str>) -> Result<(), ConfigError> {
        let name = self.experiment();
        if !EXPERIMENTS.iter().any(|(n, _)| *n == name) {
            let valid: Vec<&str> = EXPERIMENTS.iter().map(|(n, _)| *n).collect();
            return Err(err(
                self.at(src, self.experiment.span()),
                format!("unknown experiment `{name}`; valid names: {}", valid.join(", ")),
            ));
        }
        if self.shots == 0 {
            return Err(err(None, "`shots` must be >= 1"));
        }
        for (k, g) in &self.grids {
            g.values().map_err(|m| err(None, format!("grid `{k}`: {m}")))?;
        }
        let env = self.noise_env(None);
        env.validate().map_err(|e| err(None, e.to_string()))?;
        let key = section_key(name);
        let axes: Vec<&Spanned<String>> = match name {
            "spectrum" => self.spectrum.as_ref().map(|s| vec![&s.axis]),
            "lpi-sweep" => self.lpi_sweep.as_ref().map(|s| vec![&s.x_axis, &s.y_axis]),
            "leakage-spectroscopy" => self.leakage_spectroscopy.as_ref().map(|s| vec![&s.axis]),
            "free-evolution" => self.free_evolution.as_ref().map(|s| vec![&s.axis]),
            "t2star-scan" => self.t2star_scan.as_ref().map(|s| vec![&s.axis]),
            "leakage-vs-gap" => self.leakage_vs_gap.as_ref().map(|s| vec![&s.axis]),
            _ => self.b_calibration.as_ref().map(|_| vec![]),
        }
        .ok_or_else(|| err(None, format!("missing key `{key}`: experiment `{name}` needs a [{key}] section")))?;
        for a in axes {
            if !self.grids.contains_key(a.get_ref()) {
                return Err(err(
                    self.at(src, a.span()),
                    format!("axis `{}` is not defined under [grids]", a.get_ref()),
                ));
            }
        }
        Ok(())
    }

    pub fn grid(&self, axis: &Spanned<String>) -> Vec<f64> {
        self.grids[axis.get_ref()].values().expect("validated grid")
    }

    /// Noise environment, with the hyperfine width optionally replaced.
    pub fn noise_env(&self, hyperfine_sigma: Option<f64>) -> NoiseEnv {
        let mut h = self.hyperfine;
        if let Some(s) = hyperfine_sigma {
            h.sigma_mhz = s;
        }
        NoiseEnv {
            hyperfine: h,
            charge: self.charge,
            device: self.device,
        }
    }
}

fn unknown_key(raw: &toml::Table, typed: &toml::Table, prefix: &str) -> Option<String> {
    for (k, v) in raw {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (v, typed.get(k)) {
            (_, None) => return Some(path),
            (toml::Value::Table(a), Some(toml::Value::Table(b))) => {
                if let Some(p) = unknown_key(a, b, &path) {
                    return Some(p);
                }
            }
            _ => {}
        }
    }
    None
}

/// First line assigning `key`, or a table header ending in it.
fn key_line(src: &str, key: &str) -> Option<usize> {
    src.lines().position(|l| {
        let l = l.trim_start();
        let assigns = l
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='));
        let header = l.starts_with('[') && l.trim_end().trim_end_matches(']').ends_with(key);
        assigns || header
    })
    .map(|i| i + 1)
}

fn toml_error(src: &str, e: &toml::de::Error) -> ConfigError {
    err(e.span().map(|s| line_of(src, s.start)), e.message().to_string())
}
