//! Server-side cluster scoring and search-space refinement.
//!
//! Pooled (configuration, loss) results are normalized per dimension,
//! clustered with k-means (k-means++ seeding, Lloyd iterations), and each
//! cluster is scored by the mean of member losses weighted by member
//! distance to the centroid. Tight, low-loss clusters win. The winning
//! cluster's per-dimension bounding box becomes the next search space.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Configuration, FtError, ParamDim, ParameterSpace, ScoredConfiguration};

const MAX_LLOYD_ITERATIONS: usize = 50;

/// One cluster of scored configurations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterReport {
    /// Centroid in original parameter units.
    pub centroid: Configuration,
    /// Centroid in the normalized unit cube used for distances.
    pub centroid_norm: Vec<f64>,
    /// Members in canonical (sorted) order, original units.
    pub members: Vec<ScoredConfiguration>,
    /// Distance-weighted mean loss: (1/|N|) * sum over members of
    /// ||centroid - member|| * loss(member), in normalized coordinates.
    pub score: f64,
    /// Plain mean of member losses.
    pub mean_loss: f64,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Clusters the results and returns all reports plus the index of the
/// minimum-score cluster.
///
/// Points are internally sorted into a canonical order before seeding, so
/// the outcome is invariant to the input ordering for a fixed RNG stream.
pub fn cluster_and_score<R: Rng + ?Sized>(
    results: &[ScoredConfiguration],
    k: usize,
    space: &ParameterSpace,
    rng: &mut R,
) -> Result<(Vec<ClusterReport>, usize), FtError> {
    if k == 0 {
        return Err(FtError::ZeroClusters);
    }
    if results.len() < k {
        return Err(FtError::TooFewResults { k, results: results.len() });
    }
    for result in results {
        if !result.is_valid_for(space) {
            return Err(FtError::InvalidConfiguration(format!(
                "point {:?} (loss {}) outside space",
                result.values, result.loss
            )));
        }
    }

    // Canonical order: lexicographic by normalized coordinates, then loss.
    let mut order: Vec<usize> = (0..results.len()).collect();
    let points: Vec<Vec<f64>> = results.iter().map(|r| space.normalize(&r.values)).collect();
    order.sort_by(|&a, &b| {
        let by_coords = points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|ordering| ordering.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal);
        by_coords.then_with(|| results[a].loss.total_cmp(&results[b].loss))
    });
    let sorted_points: Vec<&Vec<f64>> = order.iter().map(|&i| &points[i]).collect();
    let sorted_results: Vec<&ScoredConfiguration> = order.iter().map(|&i| &results[i]).collect();
    let n = sorted_points.len();

    let mut centroids = seed_plus_plus(&sorted_points, k, rng);
    let mut assignment = vec![0usize; n];

    for _ in 0..MAX_LLOYD_ITERATIONS {
        let new_assignment: Vec<usize> = sorted_points
            .iter()
            .map(|point| nearest_centroid(point, &centroids))
            .collect();

        // Re-seed any empty cluster to the point farthest from its
        // assigned centroid (standard repair).
        let mut repaired = new_assignment;
        loop {
            let mut counts = vec![0usize; k];
            for &cluster in &repaired {
                counts[cluster] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let farthest = (0..n)
                .max_by(|&a, &b| {
                    squared_distance(sorted_points[a], &centroids[repaired[a]])
                        .total_cmp(&squared_distance(sorted_points[b], &centroids[repaired[b]]))
                })
                .expect("nonempty points");
            centroids[empty] = sorted_points[farthest].clone();
            repaired[farthest] = empty;
        }

        let converged = repaired == assignment;
        assignment = repaired;

        // Update step: centroid = mean of members.
        let dims = space.len();
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (point, &cluster) in sorted_points.iter().zip(&assignment) {
            counts[cluster] += 1;
            for (s, v) in sums[cluster].iter_mut().zip(point.iter()) {
                *s += v;
            }
        }
        for (centroid, (sum, count)) in centroids.iter_mut().zip(sums.iter().zip(&counts)) {
            if *count > 0 {
                *centroid = sum.iter().map(|s| s / *count as f64).collect();
            }
        }

        if converged {
            break;
        }
    }

    let mut reports = Vec::with_capacity(k);
    for cluster in 0..k {
        let member_indices: Vec<usize> =
            (0..n).filter(|&i| assignment[i] == cluster).collect();
        let members: Vec<ScoredConfiguration> =
            member_indices.iter().map(|&i| sorted_results[i].clone()).collect();
        let centroid_norm = centroids[cluster].clone();
        let mut score = 0.0;
        let mut mean_loss = 0.0;
        for &i in &member_indices {
            let distance = squared_distance(sorted_points[i], &centroid_norm).sqrt();
            score += distance * sorted_results[i].loss;
            mean_loss += sorted_results[i].loss;
        }
        let count = member_indices.len() as f64;
        score /= count;
        mean_loss /= count;
        reports.push(ClusterReport {
            centroid: Configuration { values: space.denormalize(&centroid_norm) },
            centroid_norm,
            members,
            score,
            mean_loss,
        });
    }

    let winner = reports
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.score.total_cmp(&b.score))
        .map(|(i, _)| i)
        .expect("k >= 1");
    Ok((reports, winner))
}

fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_distance = squared_distance(point, &centroids[0]);
    for (i, centroid) in centroids.iter().enumerate().skip(1) {
        let distance = squared_distance(point, centroid);
        if distance < best_distance {
            best = i;
            best_distance = distance;
        }
    }
    best
}

/// k-means++ seeding over canonically sorted points.
fn seed_plus_plus<R: Rng + ?Sized>(points: &[&Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].clone());
    let mut distances: Vec<f64> =
        points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = distances.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in distances.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All remaining mass at the chosen centroids: any point works.
            rng.random_range(0..points.len())
        };
        centroids.push(points[next].clone());
        for (d, p) in distances.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, centroids.last().unwrap()));
        }
    }
    centroids
}

/// New per-dimension bounds from the winning cluster's members, clamped to
/// the current space so refinement always nests.
pub fn refine_space(winner: &ClusterReport, space: &ParameterSpace) -> ParameterSpace {
    let dims = space
        .dims
        .iter()
        .enumerate()
        .map(|(d, dim)| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for member in &winner.members {
                lo = lo.min(member.values[d]);
                hi = hi.max(member.values[d]);
            }
            ParamDim { name: dim.name.clone(), lo: lo.max(dim.lo), hi: hi.min(dim.hi) }
        })
        .collect();
    ParameterSpace { dims }
}
