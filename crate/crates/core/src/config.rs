//! Experiment configuration (a single JSON object).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::de2mfw::EmptyFeedbackPolicy;
use crate::delmfw::InitPolicy;
use crate::error::{Error, Result};
use crate::geometry::SetKind;
use crate::network::{TopologyKind, DEFAULT_EDGE_PROBABILITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Centralized,
    Distributed,
    BaselineDofw,
    BaselineDgd,
}

impl Mode {
    pub fn is_distributed(self) -> bool {
        self == Mode::Distributed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetConfig {
    pub kind: SetKind,
    pub radius: f64,
    /// Must match the loss dimension when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Quadratic,
    SoftmaxXent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    #[serde(default)]
    pub source: DataSource,
    /// CSV dataset (`source = "csv"`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Samples per round per agent (softmax).
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Feature count `p` (synthetic softmax).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<usize>,
    /// Class count `C` (softmax).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    /// Decision dimension (quadratic).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Target spread (quadratic).
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Fixed data seed; derived from the run seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Shuffle CSV rows before dealing them out.
    #[serde(default)]
    pub shuffle: bool,
}

fn default_batch() -> usize {
    1
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dmax: Option<usize>,
    /// Single-column CSV schedule (header `d`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Distributed only: number of agents with delayed feedback (default: all).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delayed_agents: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    pub n: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_p() -> f64 {
    DEFAULT_EDGE_PROBABILITY
}

/// A constant given explicitly or estimated from the data (`"auto"`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(untagged)]
pub enum AutoOr {
    Value(f64),
    #[default]
    #[serde(with = "auto_tag")]
    Auto,
}

mod auto_tag {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(D::Error::custom(format!("expected \"auto\" or a number, found \"{s}\"")))
        }
    }
}

impl AutoOr {
    pub fn resolve(self, auto: f64) -> f64 {
        match self {
            AutoOr::Value(v) => v,
            AutoOr::Auto => auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    #[serde(rename = "G", default)]
    pub lipschitz: AutoOr,
    #[serde(default)]
    pub beta: AutoOr,
    #[serde(rename = "D", default)]
    pub diameter: AutoOr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZetaMode {
    /// `zeta = 1/(G sqrt B)` with the schedule's true `B`.
    #[default]
    #[serde(rename = "true_B")]
    TrueB,
    /// `B_est = dmax * T`.
    DmaxBound,
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparatorConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Per-round gap tolerance; defaults to `1e-6` times the loss scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl Default for ComparatorConfig {
    fn default() -> Self {
        Self { enabled: true, max_iters: default_max_iters(), tol: None }
    }
}

fn default_true() -> bool {
    true
}

fn default_max_iters() -> usize {
    5000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitConfig {
    #[default]
    ZeroVertex,
    PreviousDecision,
}

impl From<InitConfig> for InitPolicy {
    fn from(c: InitConfig) -> Self {
        match c {
            InitConfig::ZeroVertex => InitPolicy::ZeroVertex,
            InitConfig::PreviousDecision => InitPolicy::PreviousDecision,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmptyFeedbackConfig {
    #[default]
    FeedAlways,
    SkipOracle,
}

impl From<EmptyFeedbackConfig> for EmptyFeedbackPolicy {
    fn from(c: EmptyFeedbackConfig) -> Self {
        match c {
            EmptyFeedbackConfig::FeedAlways => EmptyFeedbackPolicy::FeedAlways,
            EmptyFeedbackConfig::SkipOracle => EmptyFeedbackPolicy::SkipOracle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub set: SetConfig,
    pub loss: LossConfig,
    pub delay: DelayConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyConfig>,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default)]
    pub zeta_mode: ZetaMode,
    /// Overrides `K = ceil(sqrt T)`.
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k_override: Option<usize>,
    /// Overrides the theoretical step constant `A`.
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a_override: Option<f64>,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub empty_feedback: EmptyFeedbackConfig,
    #[serde(default)]
    pub diagnostics: bool,
    #[serde(default)]
    pub comparator: ComparatorConfig,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(v: serde_json::Value) -> Result<Self> {
        let cfg: Self = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative data paths are resolved against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.loss.path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.delay.schedule.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.horizon == 0 {
            return bad("T must be >= 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        if !(self.set.radius > 0.0) {
            return bad("set.radius must be positive".into());
        }
        match (self.delay.dmax, &self.delay.schedule) {
            (Some(_), Some(_)) => return bad("delay.dmax and delay.schedule are mutually exclusive".into()),
            (None, None) => return bad("delay needs either dmax or schedule".into()),
            (Some(0), _) => return bad("delay.dmax must be >= 1".into()),
            _ => {}
        }
        match self.loss.kind {
            LossKind::Quadratic => {
                if self.loss.source != DataSource::Synthetic {
                    return bad("quadratic losses are synthetic only".into());
                }
                if self.loss.dim.unwrap_or(0) == 0 {
                    return bad("loss.dim is required for quadratic losses".into());
                }
            }
            LossKind::SoftmaxXent => {
                if self.loss.classes.unwrap_or(0) == 0 {
                    return bad("loss.classes is required for softmax_xent".into());
                }
                if self.loss.batch == 0 {
                    return bad("loss.batch must be >= 1".into());
                }
                match self.loss.source {
                    DataSource::Synthetic if self.loss.features.unwrap_or(0) == 0 => {
                        return bad("loss.features is required for synthetic softmax data".into())
                    }
                    DataSource::Csv if self.loss.path.is_none() => {
                        return bad("loss.path is required for csv data".into())
                    }
                    _ => {}
                }
            }
        }
        if let (Some(dim), Some(loss_dim)) = (self.set.dim, self.loss_dim()) {
            if dim != loss_dim {
                return bad(format!("set.dim {dim} does not match loss dimension {loss_dim}"));
            }
        }
        if self.mode.is_distributed() {
            let Some(topo) = &self.topology else {
                return bad("distributed mode needs a topology".into());
            };
            if topo.n == 0 {
                return bad("topology.n must be >= 1".into());
            }
            if let Some(f) = self.delay.delayed_agents {
                if f > topo.n {
                    return bad(format!("delay.delayed_agents = {f} exceeds topology.n = {}", topo.n));
                }
            }
        } else if self.delay.delayed_agents.is_some() {
            return bad("delay.delayed_agents applies to distributed mode only".into());
        }
        if self.k_override == Some(0) {
            return bad("K must be >= 1".into());
        }
        if let Some(a) = self.a_override {
            if !(a >= 3.0) {
                return bad("A must be >= 3".into());
            }
        }
        if let ZetaMode::Explicit(z) = self.zeta_mode {
            if !(z > 0.0) {
                return bad("explicit zeta must be positive".into());
            }
        }
        Ok(())
    }

    /// Decision dimension implied by the loss, when known without reading data.
    pub fn loss_dim(&self) -> Option<usize> {
        match self.loss.kind {
            LossKind::Quadratic => self.loss.dim,
            LossKind::SoftmaxXent => match self.loss.source {
                DataSource::Synthetic => Some(self.loss.features? * self.loss.classes?),
                DataSource::Csv => None,
            },
        }
    }

    pub fn agents(&self) -> usize {
        if self.mode.is_distributed() {
            self.topology.as_ref().map_or(1, |t| t.n)
        } else {
            1
        }
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = ExperimentConfig::from_json_str(&text)?;
    if let Some(base) = path.parent() {
        cfg.resolve_paths(base);
    }
    Ok(cfg)
}
