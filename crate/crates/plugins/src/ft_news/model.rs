//! The toy news-personalization scorer under tuning.
//!
//! The scorer predicts how likely a user is to read an article from its
//! age and the user's per-topic affinities. Six global parameters govern
//! it; federated tuning searches over any subset of them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Configuration, FtError, InteractionDataset, ParameterSpace};

/// Loss clamp so perfect predictions stay finite.
const PROBABILITY_FLOOR: f64 = 1e-9;

/// One article interaction: age at display time, the user's affinity for
/// each of the article's topics, the article's source-quality score, and
/// whether the article was read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsItem {
    pub age_hours: f64,
    pub topic_affinities: Vec<f64>,
    #[serde(default = "default_quality")]
    pub source_quality: f64,
    pub label: bool,
}

fn default_quality() -> f64 {
    0.5
}

/// Global parameters of the personalization score.
///
/// `half_life_hours` sets the time decay of an article's score,
/// `affinity_temp` controls how sharply the user's strongest topics
/// dominate, and the three weights plus bias combine the affinity,
/// freshness and source-quality channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonalizationParams {
    pub half_life_hours: f64,
    pub affinity_weight: f64,
    pub freshness_weight: f64,
    pub quality_weight: f64,
    pub affinity_temp: f64,
    pub bias: f64,
}

impl Default for PersonalizationParams {
    fn default() -> Self {
        PersonalizationParams {
            half_life_hours: 12.0,
            affinity_weight: 3.5,
            freshness_weight: 2.5,
            quality_weight: 2.0,
            affinity_temp: 2.0,
            bias: -0.3,
        }
    }
}

impl PersonalizationParams {
    /// Overrides the named dimensions of `base` with the configuration's
    /// values; parameters outside the search space keep their base values.
    pub fn from_configuration(
        space: &ParameterSpace,
        config: &Configuration,
        base: &PersonalizationParams,
    ) -> Result<PersonalizationParams, FtError> {
        if config.values.len() != space.dims.len() {
            return Err(FtError::InvalidConfiguration(format!(
                "{} values for {} dims",
                config.values.len(),
                space.dims.len()
            )));
        }
        let mut params = *base;
        for (dim, value) in space.dims.iter().zip(&config.values) {
            match dim.name.as_str() {
                "half_life_hours" => params.half_life_hours = *value,
                "affinity_weight" => params.affinity_weight = *value,
                "freshness_weight" => params.freshness_weight = *value,
                "quality_weight" => params.quality_weight = *value,
                "affinity_temp" => params.affinity_temp = *value,
                "bias" => params.bias = *value,
                other => return Err(FtError::UnknownDimension(other.to_string())),
            }
        }
        Ok(params)
    }
}

/// Article ages are modeled against a one-week window; the freshness
/// channel is standardized in closed form for ages uniform on it.
pub const MAX_AGE_HOURS: f64 = 168.0;

/// Power-mean topic affinity, z-scored in closed form for affinities
/// uniform on [0, 1]: the temperature controls how sharply strong topics
/// dominate, while the affinity weight alone controls amplitude.
fn affinity_channel(affinities: &[f64], temp: f64) -> f64 {
    if affinities.is_empty() {
        return 0.0;
    }
    let t = temp.max(0.05);
    let count = affinities.len() as f64;
    let m = affinities.iter().map(|a| a.max(0.0).powf(t)).sum::<f64>() / count;
    let mean = 1.0 / (1.0 + t);
    let variance = ((1.0 / (2.0 * t + 1.0)) - mean * mean).max(1e-12) / count;
    (m - mean) / variance.sqrt()
}

/// Exponential time decay, z-scored against ages uniform on
/// [0, MAX_AGE_HOURS], so the half-life controls only the decay shape and
/// the freshness weight only the amplitude.
fn freshness_channel(age_hours: f64, half_life_hours: f64) -> f64 {
    let h = half_life_hours.max(0.1);
    let f = (-age_hours / h).exp2();
    let ratio = MAX_AGE_HOURS / h;
    let mean = (1.0 - (-ratio).exp2()) * h / (MAX_AGE_HOURS * std::f64::consts::LN_2);
    let second_moment = (1.0 - (-2.0 * ratio).exp2()) * h / (2.0 * MAX_AGE_HOURS * std::f64::consts::LN_2);
    let std = (second_moment - mean * mean).max(1e-12).sqrt();
    (f - mean) / std
}

/// Source-quality score z-scored for qualities uniform on [0, 1].
fn quality_channel(source_quality: f64) -> f64 {
    (source_quality - 0.5) * (12.0f64).sqrt()
}

/// Predicted probability that the user reads the article.
pub fn read_probability(params: &PersonalizationParams, item: &NewsItem) -> f64 {
    let affinity = affinity_channel(&item.topic_affinities, params.affinity_temp);
    let freshness = freshness_channel(item.age_hours, params.half_life_hours);
    let quality = quality_channel(item.source_quality);
    let logit = params.affinity_weight * affinity
        + params.freshness_weight * freshness
        + params.quality_weight * quality
        + params.bias;
    1.0 / (1.0 + (-logit).exp())
}

/// Uniform randomized grid search over the space; reproducible per seed.
pub fn sample_configurations<R: Rng + ?Sized>(
    space: &ParameterSpace,
    count: usize,
    rng: &mut R,
) -> Vec<Configuration> {
    (0..count)
        .map(|_| Configuration {
            values: space
                .dims
                .iter()
                .map(|dim| dim.lo + rng.random::<f64>() * (dim.hi - dim.lo))
                .collect(),
        })
        .collect()
}

/// Mean binary log-loss of the configured scorer on the dataset.
pub fn evaluate_config(
    space: &ParameterSpace,
    config: &Configuration,
    base: &PersonalizationParams,
    data: &InteractionDataset,
) -> Result<f64, FtError> {
    if data.items.is_empty() {
        return Err(FtError::EmptyDataset);
    }
    let params = PersonalizationParams::from_configuration(space, config, base)?;
    let mut total = 0.0;
    for item in &data.items {
        let p = read_probability(&params, item).clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR);
        total -= if item.label { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(total / data.items.len() as f64)
}
