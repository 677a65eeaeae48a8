//! Shared test oracles, independent of the implementation paths they check.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use fedtask_plugins::ft_news::{
    evaluate_config, Configuration, InteractionDataset, ParamDim, ParameterSpace,
    PersonalizationParams,
};
use fedtask_sim::SimFleet;

/// Pools every opted-in device's news interactions into one dataset, with
/// labels under the tapped rule.
pub fn pooled_news_dataset(fleet: &SimFleet, data_key: &str) -> InteractionDataset {
    let mut items = Vec::new();
    for device in &fleet.devices {
        let Ok(view) = device.store.view() else { continue };
        for record in view.records_for_key(data_key) {
            let (Some(age), Some(affinities), Some(tapped)) = (
                record.payload.get("age_hours").and_then(|v| v.as_f64()),
                record.payload.get("topic_affinities").and_then(|v| v.as_array()),
                record.payload.get("tapped").and_then(|v| v.as_bool()),
            ) else {
                continue;
            };
            let source_quality =
                record.payload.get("source_quality").and_then(|v| v.as_f64()).unwrap_or(0.5);
            items.push(fedtask_plugins::ft_news::NewsItem {
                age_hours: age,
                topic_affinities: affinities.iter().filter_map(|v| v.as_f64()).collect(),
                source_quality,
                label: tapped,
            });
        }
    }
    InteractionDataset { items }
}

/// Uniformly subsamples the dataset so grid sweeps stay affordable.
pub fn subsample(data: &InteractionDataset, max_items: usize, seed: u64) -> InteractionDataset {
    if data.items.len() <= max_items {
        return data.clone();
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut items = data.items.clone();
    items.shuffle(&mut rng);
    items.truncate(max_items);
    InteractionDataset { items }
}

/// Dense grid-search oracle: sweeps `points_per_dim` per dimension, then
/// zooms into the cell around the best point and sweeps again. Entirely
/// independent of the federated tuning pipeline.
pub fn grid_search_oracle(
    space: &ParameterSpace,
    base: &PersonalizationParams,
    data: &InteractionDataset,
    points_per_dim: usize,
    passes: usize,
) -> (Configuration, f64) {
    let mut current = space.clone();
    let mut best_values: Vec<f64> = Vec::new();
    let mut best_loss = f64::INFINITY;

    for _ in 0..passes {
        let (values, loss) = sweep_grid(&current, base, data, points_per_dim);
        best_values = values.clone();
        best_loss = loss;
        // Shrink to one grid cell on each side of the best point.
        current = ParameterSpace {
            dims: current
                .dims
                .iter()
                .enumerate()
                .map(|(d, dim)| {
                    let step = if points_per_dim > 1 {
                        (dim.hi - dim.lo) / (points_per_dim - 1) as f64
                    } else {
                        0.0
                    };
                    ParamDim {
                        name: dim.name.clone(),
                        lo: (values[d] - step).max(dim.lo),
                        hi: (values[d] + step).min(dim.hi),
                    }
                })
                .collect(),
        };
    }
    (Configuration { values: best_values }, best_loss)
}

fn sweep_grid(
    space: &ParameterSpace,
    base: &PersonalizationParams,
    data: &InteractionDataset,
    points_per_dim: usize,
) -> (Vec<f64>, f64) {
    let dims = space.dims.len();
    let mut index = vec![0usize; dims];
    let mut best_loss = f64::INFINITY;
    let mut best = vec![0.0; dims];
    loop {
        let values: Vec<f64> = index
            .iter()
            .zip(&space.dims)
            .map(|(&i, dim)| {
                if points_per_dim > 1 {
                    dim.lo + (dim.hi - dim.lo) * i as f64 / (points_per_dim - 1) as f64
                } else {
                    (dim.lo + dim.hi) / 2.0
                }
            })
            .collect();
        let loss = evaluate_config(space, &Configuration { values: values.clone() }, base, data)
            .expect("grid point evaluates");
        if loss < best_loss {
            best_loss = loss;
            best = values;
        }
        // Advance the mixed-radix counter.
        let mut d = 0;
        loop {
            if d == dims {
                return (best, best_loss);
            }
            index[d] += 1;
            if index[d] < points_per_dim {
                break;
            }
            index[d] = 0;
            d += 1;
        }
    }
}
