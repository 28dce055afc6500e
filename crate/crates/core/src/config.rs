//! Experiment configuration. Every section has defaults, so `{}` is a valid config.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{PrepareOptions, SplitSpec};
use crate::ensemble::{EnsembleConfig, Scheme};
use crate::error::{Result, VsfError};
use crate::forecast::ModelKind;
use crate::scalable::LooseningConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: Option<PathBuf>,
    pub scale: f64,
    pub header: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            path: None,
            scale: 1.0,
            header: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowingConfig {
    pub p: usize,
    pub q: usize,
    pub stride: usize,
    /// 1-based horizon step reported as the headline metric; defaults to `q`.
    pub horizon_step: Option<usize>,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        Self {
            p: 12,
            q: 12,
            stride: 1,
            horizon_step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub name: ModelKind,
    pub ridge_lambda: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            name: ModelKind::LinearAr,
            ridge_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetMode {
    Random,
    Correlated,
}

impl FromStr for SubsetMode {
    type Err = VsfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SubsetMode::Random),
            "correlated" => Ok(SubsetMode::Correlated),
            _ => Err(VsfError::InvalidConfig(format!("unknown subset mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsetConfig {
    pub mode: SubsetMode,
    pub k_percent: f64,
    /// Clusters to draw from in correlated mode.
    pub c: usize,
    pub eps: f64,
    pub min_pts: usize,
    pub seed: u64,
    pub draws: usize,
}

impl Default for SubsetConfig {
    fn default() -> Self {
        Self {
            mode: SubsetMode::Random,
            k_percent: 15.0,
            c: 1,
            eps: 0.3,
            min_pts: 2,
            seed: 0,
            draws: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Direct,
    Scalable,
}

impl FromStr for Engine {
    type Err = VsfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Engine::Direct),
            "scalable" => Ok(Engine::Scalable),
            _ => Err(VsfError::InvalidConfig(format!("unknown retrieval engine {s:?}"))),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Direct => "direct",
            Engine::Scalable => "scalable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub engine: Engine,
    pub exponent_b: f64,
    pub m: usize,
    pub fraction: f64,
    /// With the scalable engine, also run direct retrieval and report agreement.
    pub verify_direct: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            engine: Engine::Direct,
            exponent_b: 0.5,
            m: 5,
            fraction: 1.0,
            verify_direct: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub enabled: bool,
    pub scheme: Scheme,
    pub tau: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            enabled: true,
            scheme: Scheme::Fdw,
            tau: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    pub k_hat: usize,
    pub u: f64,
    pub max_rounds: usize,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            k_hat: 5,
            u: 1.5,
            max_rounds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Rank of the full-variable nearest neighbor under the subset distance.
    pub optimal_rank: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
    Text,
}

impl FromStr for OutputFormat {
    type Err = VsfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            "text" => Ok(OutputFormat::Text),
            _ => Err(VsfError::InvalidConfig(format!("unknown output format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub format: OutputFormat,
    pub path: Option<PathBuf>,
}

/// Complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub windowing: WindowingConfig,
    pub split: SplitSpec,
    pub model: ModelConfig,
    pub subset: SubsetConfig,
    pub retrieval: RetrievalConfig,
    pub ensemble: EnsembleSection,
    pub index: IndexConfig,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

fn invalid(msg: impl Into<String>) -> VsfError {
    VsfError::InvalidConfig(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn horizon_step(&self) -> usize {
        self.windowing.horizon_step.unwrap_or(self.windowing.q)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if !(d.scale > 0.0 && d.scale.is_finite()) {
            return Err(VsfError::InvalidFactor(d.scale));
        }
        let w = &self.windowing;
        if w.p == 0 || w.q == 0 || w.stride == 0 {
            return Err(invalid("p, q and stride must be positive"));
        }
        if !(1..=w.q).contains(&self.horizon_step()) {
            return Err(invalid(format!(
                "horizon_step must lie in [1, {}], got {}",
                w.q,
                self.horizon_step()
            )));
        }
        self.split.validate()?;
        if !(self.model.ridge_lambda >= 0.0 && self.model.ridge_lambda.is_finite()) {
            return Err(invalid("ridge_lambda must be non-negative"));
        }
        let s = &self.subset;
        if !(s.k_percent > 0.0 && s.k_percent < 100.0) {
            return Err(VsfError::InvalidPercent(s.k_percent));
        }
        if s.draws == 0 {
            return Err(invalid("draws must be at least 1"));
        }
        if s.c == 0 {
            return Err(invalid("c must be at least 1"));
        }
        if !(s.eps > 0.0 && s.eps.is_finite()) {
            return Err(invalid("eps must be positive"));
        }
        if s.min_pts == 0 {
            return Err(invalid("min_pts must be at least 1"));
        }
        let r = &self.retrieval;
        if !(r.exponent_b > 0.0 && r.exponent_b.is_finite()) {
            return Err(VsfError::InvalidExponent(r.exponent_b));
        }
        if r.m == 0 {
            return Err(invalid("m must be at least 1"));
        }
        if !(r.fraction > 0.0 && r.fraction <= 1.0) {
            return Err(invalid("retrieval fraction must lie in (0, 1]"));
        }
        if !(self.ensemble.tau > 0.0 && self.ensemble.tau.is_finite()) {
            return Err(invalid("tau must be positive"));
        }
        let i = &self.index;
        if i.k_hat == 0 {
            return Err(invalid("k_hat must be at least 1"));
        }
        if !(i.u > 1.0 && i.u.is_finite()) {
            return Err(invalid("u must exceed 1"));
        }
        if i.max_rounds == 0 {
            return Err(invalid("max_rounds must be at least 1"));
        }
        Ok(())
    }

    pub fn prepare_options(&self) -> PrepareOptions {
        PrepareOptions {
            scale: self.dataset.scale,
            split: self.split,
            p: self.windowing.p,
            q: self.windowing.q,
            stride: self.windowing.stride,
        }
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            scheme: self.ensemble.scheme,
            tau: self.ensemble.tau,
            m: self.retrieval.m,
            exponent_b: self.retrieval.exponent_b,
        }
    }

    pub fn loosening(&self) -> LooseningConfig {
        LooseningConfig {
            u: self.index.u,
            max_rounds: self.index.max_rounds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_settings() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!((cfg.windowing.p, cfg.windowing.q), (12, 12));
        assert_eq!(cfg.horizon_step(), 12);
        assert_eq!(cfg.retrieval.exponent_b, 0.5);
        assert_eq!(cfg.retrieval.m, 5);
        assert_eq!(cfg.ensemble.tau, 0.1);
        assert_eq!(cfg.subset.k_percent, 15.0);
        assert_eq!(cfg.subset.draws, 100);
        assert_eq!((cfg.split.train, cfg.split.val, cfg.split.test), (0.7, 0.1, 0.2));
        assert_eq!((cfg.index.k_hat, cfg.index.u, cfg.index.max_rounds), (5, 1.5, 10));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(RunConfig::from_json(r#"{"retrieval": {"k": 3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(RunConfig::from_json(r#"{"subset": {"draws": 0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"ensemble": {"tau": 0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"index": {"u": 1.0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"windowing": {"q": 3, "horizon_step": 4}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"split": {"train": 0.5, "val": 0.1, "test": 0.1}}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.model.name = ModelKind::CoupledLinear;
        cfg.ensemble.scheme = Scheme::Ddw;
        cfg.retrieval.engine = Engine::Scalable;
        cfg.subset.mode = SubsetMode::Correlated;
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }
}
