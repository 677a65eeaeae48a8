//! Federated tuning of a news-personalization scoring algorithm.
//!
//! Devices run a randomized grid search over a published parameter space,
//! score each sampled configuration against their local interaction data
//! and report (configuration, loss) pairs. The server-side coordinator
//! clusters the pooled results, scores each cluster by distance-weighted
//! loss, refines the search space to the winning cluster's bounding box and
//! iterates until convergence.

mod cluster;
mod coordinator;
mod model;
mod plugin;

pub use cluster::{cluster_and_score, refine_space, ClusterReport};
pub use coordinator::{run_ft, FtIterationStats, FtOutcome, FtRunConfig, FtTaskPayload, LabelRule};
pub use model::{
    evaluate_config, read_probability, sample_configurations, NewsItem, PersonalizationParams,
};
pub use plugin::{NewsTuningPlugin, NEWS_PLUGIN_ID};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FtError {
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),
    #[error("configuration does not fit the parameter space: {0}")]
    InvalidConfiguration(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("need at least k={k} results, got {results}")]
    TooFewResults { k: usize, results: usize },
    #[error("k must be >= 1")]
    ZeroClusters,
    #[error("no results received in iteration {iteration}")]
    NoResults { iteration: usize },
    #[error("unknown parameter dimension {0}")]
    UnknownDimension(String),
    #[error(transparent)]
    Fleet(#[from] fedtask_core::FleetError),
}

/// One tunable dimension: name and inclusive bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDim {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

/// Ordered per-dimension bounds for the randomized grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub dims: Vec<ParamDim>,
}

impl ParameterSpace {
    pub fn new(dims: Vec<(impl Into<String>, f64, f64)>) -> Result<Self, FtError> {
        let space = ParameterSpace {
            dims: dims.into_iter().map(|(name, lo, hi)| ParamDim { name: name.into(), lo, hi }).collect(),
        };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<(), FtError> {
        if self.dims.is_empty() {
            return Err(FtError::InvalidSpace("need at least one dimension".into()));
        }
        for dim in &self.dims {
            if !dim.lo.is_finite() || !dim.hi.is_finite() {
                return Err(FtError::InvalidSpace(format!("{}: non-finite bound", dim.name)));
            }
            if dim.lo > dim.hi {
                return Err(FtError::InvalidSpace(format!("{}: lo {} > hi {}", dim.name, dim.lo, dim.hi)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn width(&self, dim: usize) -> f64 {
        self.dims[dim].hi - self.dims[dim].lo
    }

    /// Per-dimension min-max normalization to the unit cube. Zero-width
    /// dimensions map to 0 so they contribute nothing to distances.
    pub fn normalize(&self, values: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(values)
            .map(|(dim, v)| {
                let width = dim.hi - dim.lo;
                if width == 0.0 {
                    0.0
                } else {
                    (v - dim.lo) / width
                }
            })
            .collect()
    }

    pub fn denormalize(&self, unit: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(unit).map(|(dim, u)| dim.lo + u * (dim.hi - dim.lo)).collect()
    }

    pub fn contains(&self, config: &Configuration) -> bool {
        config.values.len() == self.dims.len()
            && self
                .dims
                .iter()
                .zip(&config.values)
                .all(|(dim, v)| v.is_finite() && *v >= dim.lo && *v <= dim.hi)
    }

    /// True when `other` lies inside this space on every dimension.
    pub fn nests(&self, other: &ParameterSpace) -> bool {
        self.dims.len() == other.dims.len()
            && self
                .dims
                .iter()
                .zip(&other.dims)
                .all(|(outer, inner)| inner.lo >= outer.lo && inner.hi <= outer.hi)
    }
}

/// A sampled point, aligned with the dims of its `ParameterSpace`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub values: Vec<f64>,
}

/// A configuration with its on-device prediction loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredConfiguration {
    pub values: Vec<f64>,
    pub loss: f64,
}

impl ScoredConfiguration {
    pub fn is_valid_for(&self, space: &ParameterSpace) -> bool {
        self.loss.is_finite()
            && self.loss >= 0.0
            && space.contains(&Configuration { values: self.values.clone() })
    }
}

/// The user's interaction history with news content, labeled read /
/// not-read.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InteractionDataset {
    pub items: Vec<NewsItem>,
}
