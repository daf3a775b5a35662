//! Run configuration, read from TOML. See `docs/config.md` for the schema.

use std::path::{Path, PathBuf};

use eaq_core::{make_preset, ModelParams, Preset, PresetRates};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("malformed config: {0}")]
    Parse(String),

    #[error("`{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, reason: reason.into() }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub preset: String,
    #[serde(rename = "lambda_A")]
    pub lambda_a: f64,
    #[serde(rename = "mu_A")]
    pub mu_a: f64,
    #[serde(rename = "lambda_B")]
    pub lambda_b: f64,
    #[serde(rename = "mu_B")]
    pub mu_b: f64,
    #[serde(rename = "M")]
    pub speedup: f64,
    pub n: u64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub t_end: f64,
    pub grid_points: usize,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_dt_fluid")]
    pub dt_fluid: f64,
    /// Defaults to `dt_fluid`.
    pub dt_fclt: Option<f64>,
    /// Defaults to the truncation floor for the largest fast-queue mean.
    #[serde(rename = "K_truncation")]
    pub k_truncation: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(rename = "lambda_B_min", default = "default_sweep_min")]
    pub lambda_b_min: f64,
    #[serde(rename = "lambda_B_max", default = "default_sweep_max")]
    pub lambda_b_max: f64,
    #[serde(default = "default_sweep_points")]
    pub points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { lambda_b_min: default_sweep_min(), lambda_b_max: default_sweep_max(), points: default_sweep_points() }
    }
}

fn default_dt_fluid() -> f64 {
    1e-3
}
fn default_alpha() -> f64 {
    0.01
}
fn default_sweep_min() -> f64 {
    0.5
}
fn default_sweep_max() -> f64 {
    6.0
}
fn default_sweep_points() -> usize {
    21
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub sim: SimSection,
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

impl RunConfig {
    pub fn preset(&self) -> Preset {
        self.model.preset.parse().expect("validated on load")
    }

    pub fn rates(&self) -> PresetRates {
        let m = &self.model;
        PresetRates { lambda_a: m.lambda_a, mu_a: m.mu_a, lambda_b: m.lambda_b, mu_b: m.mu_b, speedup: m.speedup }
    }

    pub fn params(&self) -> eaq_core::Result<ModelParams> {
        self.params_at(self.model.n)
    }

    pub fn params_at(&self, n: u64) -> eaq_core::Result<ModelParams> {
        make_preset(self.preset(), self.rates(), n)
    }

    pub fn dt_fclt(&self) -> f64 {
        self.sim.dt_fclt.unwrap_or(self.sim.dt_fluid)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.model.preset.parse::<Preset>().map_err(|_| {
            invalid(
                "model.preset",
                format!("expected constant_arrivals or regulated_arrivals, got {:?}", self.model.preset),
            )
        })?;
        let m = &self.model;
        let s = &self.sim;
        let positives = [
            ("model.lambda_A", m.lambda_a),
            ("model.mu_A", m.mu_a),
            ("model.lambda_B", m.lambda_b),
            ("model.mu_B", m.mu_b),
            ("model.M", m.speedup),
            ("sim.t_end", s.t_end),
            ("sim.dt_fluid", s.dt_fluid),
            ("sim.dt_fclt", self.dt_fclt()),
            ("sweep.lambda_B_min", self.sweep.lambda_b_min),
            ("sweep.lambda_B_max", self.sweep.lambda_b_max),
        ];
        for (key, v) in positives {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(key, format!("must be positive and finite, got {v}")));
            }
        }
        let counts = [
            ("model.n", m.n as usize),
            ("sim.grid_points", s.grid_points),
            ("sim.replications", s.replications),
            ("sim.K_truncation", s.k_truncation.unwrap_or(1)),
            ("sweep.points", self.sweep.points),
        ];
        for (key, v) in counts {
            if v == 0 {
                return Err(invalid(key, "must be positive"));
            }
        }
        if s.grid_points < 2 {
            return Err(invalid("sim.grid_points", "need at least 2 points"));
        }
        if s.replications < 2 {
            return Err(invalid("sim.replications", "need at least 2 replications"));
        }
        if !(s.alpha > 0.0 && s.alpha < 1.0) {
            return Err(invalid("sim.alpha", format!("must lie in (0, 1), got {}", s.alpha)));
        }
        if s.dt_fluid > s.t_end {
            return Err(invalid("sim.dt_fluid", "must not exceed sim.t_end"));
        }
        let ratio = s.dt_fluid / self.dt_fclt();
        if (ratio - ratio.round()).abs() > 1e-6 * ratio || ratio.round() < 1.0 {
            return Err(invalid("sim.dt_fclt", "must divide sim.dt_fluid"));
        }
        if self.sweep.lambda_b_max < self.sweep.lambda_b_min {
            return Err(invalid("sweep.lambda_B_max", "must be at least sweep.lambda_B_min"));
        }
        Ok(())
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<(RunConfig, String), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
    Ok((parse_config(&text)?, text))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FIGURE: &str = include_str!("../../../configs/fig2.toml");

    #[test]
    fn figure_config() {
        let cfg = parse_config(FIGURE).unwrap();
        assert_eq!(cfg.model.n, 100_000);
        assert_eq!(cfg.rates(), PresetRates::FIGURE);
        assert_eq!(cfg.preset(), Preset::ConstantArrivals);
        assert_eq!(cfg.sim.dt_fluid, 1e-3);
        assert_eq!(cfg.sim.alpha, 0.01);
        assert_eq!(cfg.sweep, SweepSection::default());
    }

    #[test]
    fn negative_rate_names_key() {
        let text = FIGURE.replace("mu_A = 2.0", "mu_A = -1.0");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("model.mu_A"), "{err}");
    }

    #[test]
    fn seed_is_mandatory() {
        let text: String = FIGURE.lines().filter(|l| !l.starts_with("seed")).collect::<Vec<_>>().join("\n");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = FIGURE.replace("[sim]", "[sim]\nspeed = 3");
        assert!(matches!(parse_config(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn bad_preset_rejected() {
        let text = FIGURE.replace("constant_arrivals", "bursty");
        assert!(parse_config(&text).unwrap_err().to_string().contains("model.preset"));
    }
}
