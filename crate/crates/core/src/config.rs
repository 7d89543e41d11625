//! Flat training configuration, dataset presets and `key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::{AdjacencyScaling, CompressionConfig};
use crate::error::{GipError, Result};
use crate::kernel::KernelConfig;
use crate::patterns::MsLossConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternInit {
    /// Class centroid of the initial coarsened training graphs plus noise.
    Centroid,
    /// Pure Gaussian noise.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,

    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub beta1: f64,
    pub beta2: f64,

    pub gcn_layers: usize,
    pub gcn_hidden: usize,
    pub embed_dim: usize,
    pub mlp1_hidden: usize,
    pub mlp2_hidden: usize,

    pub num_blocks: usize,
    pub ratio: f64,
    pub delta1_rel: f64,
    pub normalize_cluster_features: bool,
    pub adjacency_scaling: AdjacencyScaling,

    pub kernel_steps: usize,
    /// Geometric per-length weight; 1 weights every walk length equally.
    pub kernel_decay: f64,

    pub patterns_per_class: usize,
    /// Nodes per pattern; 0 picks the expected coarsened size.
    pub pattern_nodes: usize,
    pub pattern_init: PatternInit,
    pub pattern_init_noise: f64,

    pub gamma1: f64,
    pub gamma2: f64,
    pub margin: f64,
    pub delta2: f64,
    pub diversity_normalized: bool,

    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,

    pub probe_epochs: usize,
    pub probe_learning_rate: f64,
    pub probe_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 500,
            batch_size: 64,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            patience: 50,
            alpha1: 0.3,
            alpha2: 0.3,
            alpha3: 0.3,
            alpha4: 0.1,
            beta1: 0.5,
            beta2: 0.5,
            gcn_layers: 3,
            gcn_hidden: 64,
            embed_dim: 64,
            mlp1_hidden: 64,
            mlp2_hidden: 32,
            num_blocks: 1,
            ratio: 0.1,
            delta1_rel: 0.05,
            normalize_cluster_features: true,
            adjacency_scaling: AdjacencyScaling::Max,
            kernel_steps: 3,
            kernel_decay: 1.0,
            patterns_per_class: 2,
            pattern_nodes: 0,
            pattern_init: PatternInit::Centroid,
            pattern_init_noise: 0.1,
            gamma1: 2.0,
            gamma2: 50.0,
            margin: 1.0,
            delta2: 0.5,
            diversity_normalized: true,
            train_ratio: 0.8,
            val_ratio: 0.1,
            test_ratio: 0.1,
            probe_epochs: 100,
            probe_learning_rate: 0.01,
            probe_hidden: 32,
        }
    }
}

/// Per-dataset optimizer and loss-weight rows.
/// Columns: batch, lr, epochs, α1, α2, α3, α4, β1, β2.
const PRESETS: &[(&str, [f64; 9])] = &[
    ("enzymes", [64.0, 0.001, 500.0, 0.3, 0.2, 0.2, 0.2, 0.5, 0.4]),
    ("proteins", [64.0, 0.003, 500.0, 0.2, 0.4, 0.4, 0.1, 0.5, 0.3]),
    ("dd", [128.0, 0.001, 500.0, 0.4, 0.3, 0.4, 0.2, 0.3, 0.4]),
    ("mutag", [64.0, 0.001, 500.0, 0.2, 0.4, 0.3, 0.1, 0.4, 0.5]),
    ("collab", [64.0, 0.003, 500.0, 0.3, 0.2, 0.1, 0.2, 0.4, 0.4]),
    ("graphcycle", [128.0, 0.01, 500.0, 0.1, 0.4, 0.3, 0.1, 0.5, 0.3]),
    ("graphfive", [128.0, 0.01, 500.0, 0.1, 0.1, 0.1, 0.1, 0.3, 0.4]),
];

impl TrainConfig {
    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    /// Defaults with one dataset row applied. Names are case-insensitive and
    /// ignore `&`, so `D&D` and `dd` agree.
    pub fn preset(name: &str) -> Result<Self> {
        let key: String = name.to_ascii_lowercase().chars().filter(|c| *c != '&').collect();
        let (_, row) = PRESETS
            .iter()
            .find(|(n, _)| *n == key)
            .ok_or_else(|| GipError::Config(format!("no preset named {name:?}")))?;
        Ok(Self {
            batch_size: row[0] as usize,
            learning_rate: row[1],
            epochs: row[2] as usize,
            alpha1: row[3],
            alpha2: row[4],
            alpha3: row[5],
            alpha4: row[6],
            beta1: row[7],
            beta2: row[8],
            ..Self::default()
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| GipError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GipError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config fields are plain values")
    }

    /// Apply `key=value` pairs; values are read as TOML literals, falling back
    /// to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| GipError::Config(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| GipError::Config(format!("override {item:?} is not key=value")))?;
            let key = key.trim();
            if !table.contains_key(key) {
                return Err(GipError::Config(format!("unknown config key {key:?}")));
            }
            let raw = raw.trim();
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            table.insert(key.to_string(), value);
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| GipError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [self.alpha1, self.alpha2, self.alpha3, self.alpha4, self.beta1, self.beta2];
        if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(GipError::Config("loss weights must be non-negative".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(GipError::Config("batch_size and epochs must be positive".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(GipError::Config("learning_rate must be positive".into()));
        }
        if self.gcn_layers == 0 || self.patterns_per_class == 0 {
            return Err(GipError::Config("gcn_layers and patterns_per_class must be positive".into()));
        }
        if self.pattern_nodes == 1 {
            return Err(GipError::Config("patterns need at least 2 nodes".into()));
        }
        if !(self.gamma1 > 0.0 && self.gamma2 > 0.0 && self.margin > 0.0) {
            return Err(GipError::Config("gamma1, gamma2 and margin must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.delta2) {
            return Err(GipError::Config(format!("delta2 {} outside [0, 1]", self.delta2)));
        }
        if self.kernel_decay.is_nan() || self.kernel_decay <= 0.0 {
            return Err(GipError::Config("kernel_decay must be positive".into()));
        }
        let split = [self.train_ratio, self.val_ratio, self.test_ratio];
        if split.iter().any(|r| *r < 0.0) || (split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(GipError::Config("split ratios must be non-negative and sum to 1".into()));
        }
        self.compression().validate()
    }

    pub fn compression(&self) -> CompressionConfig {
        CompressionConfig {
            num_blocks: self.num_blocks,
            ratio: self.ratio,
            delta1_rel: self.delta1_rel,
            normalize_cluster_features: self.normalize_cluster_features,
            adjacency_scaling: self.adjacency_scaling,
        }
    }

    pub fn kernel(&self) -> KernelConfig {
        KernelConfig::geometric(self.kernel_steps, self.kernel_decay)
    }

    pub fn ms_loss(&self) -> MsLossConfig {
        MsLossConfig { gamma1: self.gamma1, gamma2: self.gamma2, margin: self.margin }
    }

    pub fn split_ratios(&self) -> (f64, f64, f64) {
        (self.train_ratio, self.val_ratio, self.test_ratio)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_their_rows() {
        let g = TrainConfig::preset("GraphCycle").unwrap();
        assert_eq!((g.batch_size, g.learning_rate, g.epochs), (128, 0.01, 500));
        assert_eq!([g.alpha1, g.alpha2, g.alpha3, g.alpha4, g.beta1, g.beta2], [0.1, 0.4, 0.3, 0.1, 0.5, 0.3]);
        assert_eq!(TrainConfig::preset("D&D").unwrap().batch_size, 128);
        assert!(TrainConfig::preset("cora").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = TrainConfig::preset("mutag").unwrap();
        assert_eq!(TrainConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        let partial = TrainConfig::from_toml_str("epochs = 3\npattern_init = \"random\"").unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.pattern_init, PatternInit::Random);
        assert!(TrainConfig::from_toml_str("epoch = 3").is_err());
    }

    #[test]
    fn overrides_are_typed_and_checked() {
        let cfg = TrainConfig::default()
            .with_overrides(&["epochs=7", "learning_rate = 0.5", "pattern_init=random", "normalize_cluster_features=false"])
            .unwrap();
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.learning_rate, 0.5);
        assert_eq!(cfg.pattern_init, PatternInit::Random);
        assert!(!cfg.normalize_cluster_features);
        assert!(TrainConfig::default().with_overrides(&["nope=1"]).is_err());
        assert!(TrainConfig::default().with_overrides(&["epochs"]).is_err());
        assert!(TrainConfig::default().with_overrides(&["epochs=-1"]).is_err());
        assert!(TrainConfig::default().with_overrides(&["alpha1=-0.1"]).is_err());
    }
}
