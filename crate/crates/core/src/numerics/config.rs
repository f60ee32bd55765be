use serde::{Deserialize, Serialize};

use super::params::Sgd;
use crate::error::{Error, Result};

/// Hyperparameters shared by estimator training, neighborhood construction
/// and classifier training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden_dim: usize,
    pub se_dim: usize,
    pub heads: usize,
    pub agg_layers: usize,
    pub nl_sample_limit: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Step size for the contrastive estimator; the classifier uses `learning_rate`.
    pub estimator_lr: f64,
    pub warmup_epochs: usize,
    pub m3s_stages: usize,
    pub stage_epochs: usize,
    /// Nodes promoted per stage; `None` means `ceil(0.05 * node_count)`.
    pub m3s_top_t: Option<usize>,
    pub per_anchor: usize,
    /// Cluster count for the non-local neighborhood; `None` means the class count.
    pub clusters: Option<usize>,
    pub cluster_max_iter: usize,
    /// Above this node count, cluster scores use cached cluster means instead
    /// of the explicit pairwise average.
    pub surrogate_threshold: usize,
    /// Optional mini-batch size over training nodes; full batch when `None`.
    pub batch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            dropout: 0.25,
            hidden_dim: 128,
            se_dim: 128,
            heads: 5,
            agg_layers: 2,
            nl_sample_limit: 128,
            patience: 100,
            max_epochs: 2000,
            seed: 1,
            estimator_lr: 0.01,
            warmup_epochs: 200,
            m3s_stages: 4,
            stage_epochs: 100,
            m3s_top_t: None,
            per_anchor: 5,
            clusters: None,
            cluster_max_iter: 20,
            surrogate_threshold: 5000,
            batch_size: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate > 0.0),
            ("estimator_lr", self.estimator_lr > 0.0),
            ("momentum", self.momentum >= 0.0 && self.momentum < 1.0),
            ("weight_decay", self.weight_decay >= 0.0),
            ("hidden_dim", self.hidden_dim > 0),
            ("se_dim", self.se_dim > 0),
            ("heads", self.heads > 0),
            ("agg_layers", self.agg_layers > 0),
            ("nl_sample_limit", self.nl_sample_limit > 0),
            ("patience", self.patience > 0),
            ("max_epochs", self.max_epochs > 0),
            ("per_anchor", self.per_anchor > 0),
            ("cluster_max_iter", self.cluster_max_iter > 0),
            ("m3s_top_t", self.m3s_top_t != Some(0)),
            ("clusters", self.clusters.is_none_or(|k| k >= 2)),
            ("batch_size", self.batch_size != Some(0)),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, ok)| !ok) {
            return Err(Error::Config(format!("`{name}` is out of range")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} must lie in [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn classifier_sgd(&self) -> Sgd {
        Sgd { learning_rate: self.learning_rate, momentum: self.momentum, weight_decay: self.weight_decay }
    }

    pub fn estimator_sgd(&self) -> Sgd {
        Sgd { learning_rate: self.estimator_lr, momentum: self.momentum, weight_decay: self.weight_decay }
    }

    /// Nodes promoted per M3S stage for a graph of `node_count` nodes.
    pub fn top_t(&self, node_count: usize) -> usize {
        self.m3s_top_t.unwrap_or_else(|| (0.05 * node_count as f64).ceil() as usize)
    }
}
