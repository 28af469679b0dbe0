//! Pipeline configuration, read from TOML. Every field has a default, so an
//! empty file is a complete configuration.

use crate::error::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use tabcurate_core::curation::{GbtConfig, SelectionParams};
use tabcurate_core::eval::{DEFAULT_FOLDS, DEFAULT_FRACTIONS};
use tabcurate_core::pfn::PfnConfig;
use tabcurate_core::procgen::PriorConfig;
use tabcurate_core::tabular::DomainLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub artifact_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { data_dir: "data".into(), artifact_dir: "artifacts".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Label of CSVs without a sidecar naming one.
    pub default_label: DomainLabel,
    /// Datasets with this label form the target domain.
    pub target_label: DomainLabel,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { default_label: DomainLabel::Engineering, target_label: DomainLabel::Engineering }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub count: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { count: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub count: usize,
    pub feature_count: usize,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig { count: 100, feature_count: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GbtMode {
    Search,
}

/// A fixed classifier configuration, or `"search"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GbtSetting {
    Mode(GbtMode),
    Fixed(GbtConfig),
}

impl Default for GbtSetting {
    fn default() -> Self {
        GbtSetting::Fixed(GbtConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpoConfig {
    pub trials: usize,
    pub folds: usize,
}

impl Default for HpoConfig {
    fn default() -> Self {
        HpoConfig { trials: 50, folds: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistinguishConfig {
    pub folds: usize,
}

impl Default for DistinguishConfig {
    fn default() -> Self {
        DistinguishConfig { folds: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub epochs: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig { epochs: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub fractions: Vec<f64>,
    pub folds: usize,
    pub split: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { fractions: DEFAULT_FRACTIONS.to_vec(), folds: DEFAULT_FOLDS, split: 0.7 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub master_seed: u64,
    pub paths: Paths,
    pub ingest: IngestConfig,
    pub synthetic: SyntheticConfig,
    pub control: ControlConfig,
    pub prior: PriorConfig,
    pub pfn: PfnConfig,
    pub gbt: GbtSetting,
    pub hpo: HpoConfig,
    pub distinguish: DistinguishConfig,
    pub selection: SelectionParams,
    pub finetune: FinetuneConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    /// Parse and validate a TOML file. Relative paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            for p in [&mut cfg.paths.data_dir, &mut cfg.paths.artifact_dir] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let wrap = |e: tabcurate_core::Error| CliError::Config(e.to_string());
        self.prior.validate().map_err(wrap)?;
        self.pfn.validate().map_err(wrap)?;
        if let GbtSetting::Fixed(g) = &self.gbt {
            g.validate().map_err(wrap)?;
        }
        if self.prior.feature_count_range[1] > self.pfn.max_features {
            return Err(CliError::Config(format!(
                "prior.feature_count_range reaches {} but pfn.max_features is {}",
                self.prior.feature_count_range[1], self.pfn.max_features
            )));
        }
        if self.synthetic.count <= self.selection.n_syn_train {
            return Err(CliError::Config(format!(
                "synthetic.count {} must exceed selection.n_syn_train {}",
                self.synthetic.count, self.selection.n_syn_train
            )));
        }
        if self.selection.k > self.synthetic.count - self.selection.n_syn_train {
            return Err(CliError::Config("selection.k exceeds the scorable synthetic tasks".into()));
        }
        if !(self.eval.split > 0.0 && self.eval.split < 1.0) {
            return Err(CliError::Config("eval.split must be in (0, 1)".into()));
        }
        if self.eval.folds < 2 || self.eval.fractions.is_empty() {
            return Err(CliError::Config("eval needs at least 2 folds and one fraction".into()));
        }
        if self.control.count > 0 && !(2..=100).contains(&self.control.feature_count) {
            return Err(CliError::Config("control.feature_count must be in [2, 100]".into()));
        }
        if self.hpo.trials == 0 {
            return Err(CliError::Config("hpo.trials must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = PipelineConfig::parse("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.synthetic.count, 10_000);
        assert_eq!(c.selection, SelectionParams { k: 200, n_syn_train: 250, target_train_fraction: 0.7 });
        assert_eq!(c.eval.fractions.len(), 9);
        assert_eq!(c.pfn.d_model, 192);
    }

    #[test]
    fn default_round_trips_through_toml() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn search_keyword_and_errors() {
        let c = PipelineConfig::parse("gbt = \"search\"\n").unwrap();
        assert_eq!(c.gbt, GbtSetting::Mode(GbtMode::Search));
        let c = PipelineConfig::parse("[gbt]\nn_estimators = 10\n").unwrap();
        assert!(matches!(c.gbt, GbtSetting::Fixed(GbtConfig { n_estimators: 10, .. })));
        assert!(PipelineConfig::parse("[pfn]\nheads = 5\n").is_err());
        assert!(PipelineConfig::parse("bogus = 1\n").is_err());
    }
}
