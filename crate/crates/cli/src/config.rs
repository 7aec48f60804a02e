//! Experiment configuration files.
//!
//! A config is a TOML document with five sections:
//!
//! ```toml
//! [tree]
//! n = 6
//! J = 10
//! l = [0, 0, 0, 2, 10, 10]
//! B = 38
//!
//! [codebook]
//! frame_len = 600
//! max_delay = 0
//!
//! [channel]
//! model = "I"
//! active_devices = 10
//!
//! [lasso]
//! lambda_scale = 1.0
//!
//! [sweep]
//! snr_db = [-4.0, -2.0, 0.0]
//! trials = 1000
//! seed = 1
//! ```
//!
//! Unknown keys are rejected. Every optional key is filled with its default
//! and the fully resolved document is echoed into the run manifest.

use std::path::Path;

use ccs_core::tree_code::DEFAULT_MAX_PATHS;
use ccs_core::{
    CcsError, ExperimentConfig, FadeMetric, FadePruneConfig, FadingSpec, LassoConfig, RootPolicy,
    TreeCodeParams, TreeDecoderConfig,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

impl From<CcsError> for ConfigError {
    fn from(e: CcsError) -> Self {
        match e {
            CcsError::Config { key, reason } => ConfigError::Invalid { key, reason },
            other => ConfigError::Invalid {
                key: "<config>".into(),
                reason: other.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    tree: Option<RawTree>,
    codebook: Option<RawCodebook>,
    channel: Option<RawChannel>,
    #[serde(default)]
    lasso: RawLasso,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTree {
    n: usize,
    #[serde(rename = "J")]
    j: u32,
    l: Vec<u32>,
    #[serde(rename = "B")]
    b: u32,
    fade_prune: Option<bool>,
    fade_rel_tolerance: Option<f64>,
    fade_metric: Option<FadeMetric>,
    fade_max_outliers: Option<usize>,
    check_delay: Option<bool>,
    max_paths: Option<usize>,
    root_policy: Option<RootPolicy>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCodebook {
    frame_len: usize,
    max_delay: Option<usize>,
    per_slot_rows: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    model: String,
    active_devices: usize,
    h_lower: Option<f64>,
    eta: Option<f64>,
    alpha: Option<f64>,
    noise: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLasso {
    lambda_scale: Option<f64>,
    max_iters: Option<usize>,
    tol: Option<f64>,
    debias: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    snr_db: Vec<f64>,
    trials: usize,
    seed: Option<u64>,
}

/// Fully resolved configuration, in file layout. This is what the manifest
/// echoes; feeding it back through [`parse_config`] yields the same
/// experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub tree: ResolvedTree,
    pub codebook: ResolvedCodebook,
    pub channel: ResolvedChannel,
    pub lasso: LassoConfig,
    pub sweep: ResolvedSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedTree {
    pub n: usize,
    #[serde(rename = "J")]
    pub j: u32,
    pub l: Vec<u32>,
    #[serde(rename = "B")]
    pub b: u32,
    pub fade_prune: bool,
    pub fade_rel_tolerance: f64,
    pub fade_metric: FadeMetric,
    pub fade_max_outliers: usize,
    pub check_delay: bool,
    pub max_paths: usize,
    pub root_policy: RootPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedCodebook {
    pub frame_len: usize,
    pub max_delay: usize,
    pub per_slot_rows: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedChannel {
    pub model: String,
    pub active_devices: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSweep {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_H_LOWER: f64 = 1.0;

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

impl ResolvedConfig {
    pub fn to_experiment(&self) -> Result<ExperimentConfig, ConfigError> {
        let tree = TreeCodeParams::new(self.tree.n, self.tree.j, self.tree.l.clone(), self.tree.b)?;
        let fading = match self.channel.model.as_str() {
            "I" => FadingSpec::ModelI {
                h_lower: self.channel.h_lower.unwrap_or(DEFAULT_H_LOWER),
            },
            "II" => FadingSpec::ModelII {
                eta: self.channel.eta.ok_or(ConfigError::Missing("channel.eta"))?,
                alpha: self.channel.alpha.ok_or(ConfigError::Missing("channel.alpha"))?,
            },
            other => {
                return Err(invalid(
                    "channel.model",
                    format!("expected \"I\" or \"II\", got {other:?}"),
                ))
            }
        };
        let cfg = ExperimentConfig {
            tree,
            frame_len: self.codebook.frame_len,
            max_delay: self.codebook.max_delay,
            active_devices: self.channel.active_devices,
            fading,
            snr_db: self.sweep.snr_db.clone(),
            trials: self.sweep.trials,
            seed: self.sweep.seed,
            lasso: self.lasso,
            decoder: TreeDecoderConfig {
                fade: FadePruneConfig {
                    enabled: self.tree.fade_prune,
                    rel_tolerance: self.tree.fade_rel_tolerance,
                    check_delay: self.tree.check_delay,
                    metric: self.tree.fade_metric,
                    max_outliers: self.tree.fade_max_outliers,
                },
                max_paths: self.tree.max_paths,
                root_policy: self.tree.root_policy,
            },
            per_slot_codebooks: self.codebook.per_slot_rows,
            noise: self.channel.noise,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses and resolves a config document.
pub fn parse_config(text: &str) -> Result<ResolvedConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let tree = raw.tree.ok_or(ConfigError::Missing("tree"))?;
    let codebook = raw.codebook.ok_or(ConfigError::Missing("codebook"))?;
    let channel = raw.channel.ok_or(ConfigError::Missing("channel"))?;
    let sweep = raw.sweep.ok_or(ConfigError::Missing("sweep"))?;

    let model = channel.model.clone();
    match model.as_str() {
        "I" => {
            if channel.eta.is_some() || channel.alpha.is_some() {
                return Err(invalid("channel", "eta/alpha apply only to model \"II\""));
            }
        }
        "II" => {
            if channel.h_lower.is_some() {
                return Err(invalid("channel.h_lower", "applies only to model \"I\""));
            }
        }
        other => {
            return Err(invalid(
                "channel.model",
                format!("expected \"I\" or \"II\", got {other:?}"),
            ))
        }
    }
    // Soft fade information is only informative under heavy-tailed gains.
    let model_two = model == "II";
    let lasso_default = LassoConfig::default();
    let decoder_default = TreeDecoderConfig::default();

    let resolved = ResolvedConfig {
        tree: ResolvedTree {
            n: tree.n,
            j: tree.j,
            l: tree.l,
            b: tree.b,
            fade_prune: tree.fade_prune.unwrap_or(model_two),
            fade_rel_tolerance: tree
                .fade_rel_tolerance
                .unwrap_or(decoder_default.fade.rel_tolerance),
            fade_metric: tree.fade_metric.unwrap_or_default(),
            fade_max_outliers: tree.fade_max_outliers.unwrap_or(0),
            check_delay: tree.check_delay.unwrap_or(false),
            max_paths: tree.max_paths.unwrap_or(DEFAULT_MAX_PATHS),
            root_policy: tree.root_policy.unwrap_or_default(),
        },
        codebook: ResolvedCodebook {
            frame_len: codebook.frame_len,
            max_delay: codebook.max_delay.unwrap_or(0),
            per_slot_rows: codebook.per_slot_rows.unwrap_or(false),
        },
        channel: ResolvedChannel {
            h_lower: if model_two {
                None
            } else {
                Some(channel.h_lower.unwrap_or(DEFAULT_H_LOWER))
            },
            eta: channel.eta,
            alpha: channel.alpha,
            model,
            active_devices: channel.active_devices,
            noise: channel.noise.unwrap_or(true),
        },
        lasso: LassoConfig {
            lambda_scale: raw.lasso.lambda_scale.unwrap_or(lasso_default.lambda_scale),
            max_iters: raw.lasso.max_iters.unwrap_or(lasso_default.max_iters),
            tol: raw.lasso.tol.unwrap_or(lasso_default.tol),
            debias: raw.lasso.debias.unwrap_or(lasso_default.debias),
        },
        sweep: ResolvedSweep {
            snr_db: sweep.snr_db,
            trials: sweep.trials,
            seed: sweep.seed.unwrap_or(DEFAULT_SEED),
        },
    };
    resolved.to_experiment()?;
    Ok(resolved)
}

pub fn load_config(path: &Path) -> Result<ResolvedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

/// Command-line overrides applied after loading.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub snr_db: Option<Vec<f64>>,
    pub trials: Option<usize>,
}

impl ResolvedConfig {
    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(seed) = o.seed {
            self.sweep.seed = seed;
        }
        if let Some(snr) = &o.snr_db {
            self.sweep.snr_db = snr.clone();
        }
        if let Some(trials) = o.trials {
            self.sweep.trials = trials;
        }
        self.to_experiment().map(|_| ())
    }
}
