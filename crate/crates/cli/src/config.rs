//! JSON run configuration and flag merging.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stratcomm::{ChannelParams, LinearStrategyPair, ModelParams};

use crate::CliError;

/// Model fields as they appear in a config file. Every key is optional here
/// so flags can fill the gaps; completeness is checked when the model is
/// built.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_x2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_xtheta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_xw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_thetaw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_w: Option<f64>,
}

impl ModelSpec {
    /// Fields set in `other` replace those in `self`.
    pub fn overlay(self, other: ModelSpec) -> ModelSpec {
        ModelSpec {
            sigma_x2: other.sigma_x2.or(self.sigma_x2),
            rho_xtheta: other.rho_xtheta.or(self.rho_xtheta),
            r_theta: other.r_theta.or(self.r_theta),
            rho_xw: other.rho_xw.or(self.rho_xw),
            rho_thetaw: other.rho_thetaw.or(self.rho_thetaw),
            r_w: other.r_w.or(self.r_w),
        }
    }

    /// `sigma_x2` defaults to 1. `r_theta` and `rho_xtheta` are required.
    pub fn with_defaults(mut self) -> ModelSpec {
        self.sigma_x2.get_or_insert(1.0);
        self
    }

    pub fn build(&self) -> Result<ModelParams, CliError> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| {
                CliError::Config(format!(
                    "model is missing `{name}` (flag --{})",
                    flag_name(name)
                ))
            })
        };
        let p = ModelParams::new(
            need(self.sigma_x2, "sigma_x2")?,
            need(self.rho_xtheta, "rho_xtheta")?,
            need(self.r_theta, "r_theta")?,
        );
        match (self.rho_xw, self.rho_thetaw, self.r_w) {
            (None, None, None) => Ok(p),
            (Some(a), Some(b), Some(c)) => Ok(p.with_side_info(a, b, c)),
            _ => Err(CliError::Config(
                "rho_xw, rho_thetaw and r_w must be given together or not at all".into(),
            )),
        }
    }
}

fn flag_name(key: &str) -> &'static str {
    match key {
        "sigma_x2" => "sigma-x2",
        "rho_xtheta" => "rho",
        "r_theta" => "r",
        "rho_xw" => "rho-xw",
        "rho_thetaw" => "rho-thetaw",
        _ => "r-w",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Theorem1,
    Theorem5,
    Lemma3,
    Goblick,
    Custom,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelParams>,
    /// Rate grid in bits (`rd-curve`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
    /// Rate in bits (`audit rate-loss`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    /// Encoder W-coefficients (`audit tx-si`, `audit rate-loss`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_grid: Option<Vec<f64>>,
    /// Monte Carlo sample count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Claimed equilibrium coefficient (`audit deviation`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Leader offsets (`audit deviation`); must contain 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategies: Option<StrategyKind>,
    /// Pair for `--strategies custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<LinearStrategyPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dither_variance: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub const DEFAULT_N: usize = 1_000_000;
pub const SEED_ENV: &str = "STRATCOMM_SEED";

/// Flag, then config, then `STRATCOMM_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

pub fn default_rates() -> Vec<f64> {
    (0..=16).map(|k| 0.25 * k as f64).collect()
}

pub fn default_b_grid() -> Vec<f64> {
    vec![-3.0, -1.0, 1.0, 3.0]
}

pub fn default_deltas() -> Vec<f64> {
    vec![0.0, -0.05, 0.05, -0.2, 0.2, -0.5, 0.5]
}
