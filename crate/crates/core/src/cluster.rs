//! K-means (k-means++ seeding, Lloyd iterations) over 2-D station features.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::profile::StationFeature;

pub type Point = [f64; 2];

pub const MAX_ITERATIONS: usize = 300;
pub const STATION_CLUSTERS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the {distinct} distinct points")]
    TooFewPoints { k: usize, distinct: usize },
    #[error("non-finite feature for point {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeansFit {
    pub k: usize,
    pub centroids: Vec<Point>,
    /// Cluster id per input point, in input order.
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Inertia after each centroid update.
    pub inertia_trace: Vec<f64>,
}

impl KMeansFit {
    /// Cluster ids sorted by descending mean of the given per-point value.
    pub fn order_by_mean(&self, values: &[f64]) -> Vec<usize> {
        let mut sums = vec![(0.0, 0usize); self.k];
        for (&c, &v) in self.assignments.iter().zip(values) {
            sums[c].0 += v;
            sums[c].1 += 1;
        }
        let means: Vec<f64> = sums.iter().map(|(s, n)| s / *n as f64).collect();
        let mut order: Vec<usize> = (0..self.k).collect();
        order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
        order
    }

    /// Renames cluster ids so that old id `order[i]` becomes `i`.
    pub fn relabel(&self, order: &[usize]) -> KMeansFit {
        let mut new_id = vec![0; self.k];
        for (i, &old) in order.iter().enumerate() {
            new_id[old] = i;
        }
        KMeansFit {
            centroids: order.iter().map(|&old| self.centroids[old]).collect(),
            assignments: self.assignments.iter().map(|&c| new_id[c]).collect(),
            ..self.clone()
        }
    }
}

fn sq_dist(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Nearest centroid; ties go to the lower id.
fn nearest(p: &Point, centroids: &[Point]) -> usize {
    let mut best = 0;
    let mut best_d = sq_dist(p, &centroids[0]);
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(p, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

fn inertia(points: &[Point], centroids: &[Point], labels: &[usize]) -> f64 {
    points.iter().zip(labels).map(|(p, &c)| sq_dist(p, &centroids[c])).sum()
}

fn seed_centroids(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            pick = Some(i);
            if target < w {
                break;
            }
            target -= w;
        }
        // distinct >= k guarantees some point with positive weight remains
        let c = points[pick.expect("positive D^2 mass")];
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Recomputes means; an empty cluster takes the point farthest from its own
/// centroid among clusters with more than one member.
fn update_centroids(points: &[Point], labels: &mut [usize], centroids: &mut [Point]) {
    let k = centroids.len();
    loop {
        let mut sums = vec![[0.0, 0.0]; k];
        let mut sizes = vec![0usize; k];
        for (p, &c) in points.iter().zip(labels.iter()) {
            sums[c][0] += p[0];
            sums[c][1] += p[1];
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&n| n == 0) else {
            for j in 0..k {
                centroids[j] = [sums[j][0] / sizes[j] as f64, sums[j][1] / sizes[j] as f64];
            }
            return;
        };
        let far = (0..points.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .max_by(|&a, &b| {
                sq_dist(&points[a], &centroids[labels[a]])
                    .total_cmp(&sq_dist(&points[b], &centroids[labels[b]]))
                    .then(b.cmp(&a))
            })
            .expect("n >= k leaves a cluster with spare members");
        labels[far] = empty;
        centroids[empty] = points[far];
    }
}

pub fn kmeans_fit(points: &[Point], k: usize, seed: u64) -> Result<KMeansFit, ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if let Some(i) = points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(ClusterError::NonFinite(i));
    }
    let distinct = points
        .iter()
        .map(|p| (p[0].to_bits(), p[1].to_bits()))
        .collect::<HashSet<_>>()
        .len();
    if distinct < k {
        return Err(ClusterError::TooFewPoints { k, distinct });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        update_centroids(points, &mut labels, &mut centroids);
        trace.push(inertia(points, &centroids, &labels));
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }

    Ok(KMeansFit {
        k,
        inertia: inertia(points, &centroids, &labels),
        centroids,
        assignments: labels,
        iterations,
        converged,
        inertia_trace: trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Morning,
    Afternoon,
}

/// Station segmentation with clusters ordered by demand: id 0 has the highest
/// mean log share.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterModel {
    pub fit: KMeansFit,
    pub labels: BTreeMap<String, usize>,
    /// Original k-means ids in demand order.
    pub demand_order: Vec<usize>,
    /// Morning when the centroid's log ratio is positive.
    pub periods: Vec<Period>,
    pub features: Vec<StationFeature>,
}

pub fn segment_stations(features: &[StationFeature], seed: u64) -> Result<ClusterModel, ClusterError> {
    let points: Vec<Point> = features.iter().map(StationFeature::point).collect();
    let raw = kmeans_fit(&points, STATION_CLUSTERS, seed)?;
    let shares: Vec<f64> = features.iter().map(|f| f.log_pct_avg_weekday_demand).collect();
    let demand_order = raw.order_by_mean(&shares);
    let fit = raw.relabel(&demand_order);
    let periods = fit
        .centroids
        .iter()
        .map(|c| if c[0] > 0.0 { Period::Morning } else { Period::Afternoon })
        .collect();
    let labels = features
        .iter()
        .zip(&fit.assignments)
        .map(|(f, &c)| (f.station.clone(), c))
        .collect();
    Ok(ClusterModel { fit, labels, demand_order, periods, features: features.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[Point], per: usize, sd: f64, seed: u64) -> (Vec<Point>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, sd).unwrap();
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (g, c) in centers.iter().enumerate() {
            for _ in 0..per {
                pts.push([c[0] + n.sample(&mut rng), c[1] + n.sample(&mut rng)]);
                truth.push(g);
            }
        }
        (pts, truth)
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    /// Exhaustive optimum over all 2-partitions of the points.
    fn brute_force_two_partition(points: &[Point]) -> Vec<usize> {
        let n = points.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1u32..(1 << (n - 1)) {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let mut cost = 0.0;
            for g in 0..2 {
                let members: Vec<&Point> =
                    points.iter().zip(&labels).filter(|(_, &l)| l == g).map(|(p, _)| p).collect();
                let m = members.len() as f64;
                let c = [
                    members.iter().map(|p| p[0]).sum::<f64>() / m,
                    members.iter().map(|p| p[1]).sum::<f64>() / m,
                ];
                cost += members.iter().map(|p| sq_dist(p, &c)).sum::<f64>();
            }
            if cost < best.0 {
                best = (cost, labels);
            }
        }
        best.1
    }

    #[test]
    fn single_point() {
        let fit = kmeans_fit(&[[1.5, -2.0]], 1, 0).unwrap();
        assert_eq!(fit.centroids, vec![[1.5, -2.0]]);
        assert_eq!(fit.inertia, 0.0);
        assert!(fit.converged);
    }

    #[test]
    fn unit_square_corners() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        for seed in 0..20 {
            let fit = kmeans_fit(&pts, 4, seed).unwrap();
            assert_eq!(fit.inertia, 0.0);
            let mut ids = fit.assignments.clone();
            ids.sort_unstable();
            assert_eq!(ids, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn two_blobs_match_brute_force() {
        let (pts, truth) = blobs(&[[0.0, 0.0], [10.0, 10.0]], 10, 0.5, 3);
        let oracle = brute_force_two_partition(&pts);
        assert!(same_partition(&oracle, &truth));
        for seed in 0..25 {
            let fit = kmeans_fit(&pts, 2, seed).unwrap();
            assert!(same_partition(&fit.assignments, &oracle), "seed {seed}");
        }
    }

    #[test]
    fn precondition_errors() {
        assert_eq!(kmeans_fit(&[[0.0, 0.0]], 0, 1), Err(ClusterError::ZeroK));
        assert_eq!(
            kmeans_fit(&[[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]], 3, 1),
            Err(ClusterError::TooFewPoints { k: 3, distinct: 2 })
        );
        assert_eq!(kmeans_fit(&[[0.0, f64::NAN]], 1, 1), Err(ClusterError::NonFinite(0)));
    }

    #[test]
    fn duplicates_with_exactly_k_distinct() {
        let pts = [[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0], [9.0, 0.0]];
        let fit = kmeans_fit(&pts, 3, 11).unwrap();
        assert_eq!(fit.inertia, 0.0);
        assert_eq!(fit.assignments[0], fit.assignments[1]);
        assert_ne!(fit.assignments[0], fit.assignments[4]);
    }

    #[test]
    fn empty_cluster_is_repaired() {
        // centroid 1 starts far away from every point
        let pts = [[0.0, 0.0], [0.1, 0.0], [3.0, 0.0]];
        let mut labels = vec![0, 0, 0];
        let mut centroids = [[1.0, 0.0], [100.0, 100.0]];
        update_centroids(&pts, &mut labels, &mut centroids);
        assert_eq!(labels, vec![0, 0, 1]);
        assert_eq!(centroids[1], [3.0, 0.0]);
        assert!((centroids[0][0] - 0.05).abs() < 1e-12);
    }

    fn feature(name: &str, ratio: f64, pct: f64) -> StationFeature {
        StationFeature {
            station: name.into(),
            log_pct_avg_weekday_demand: pct,
            log_morning_evening_ratio: ratio,
        }
    }

    #[test]
    fn segments_ordered_by_demand() {
        let centers = [[0.8, -1.0], [-0.6, 0.5], [0.1, 2.5], [0.9, 1.2]];
        let (pts, truth) = blobs(&centers, 6, 0.05, 9);
        let features: Vec<StationFeature> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| feature(&format!("st{i:02}"), p[0], p[1]))
            .collect();
        let model = segment_stations(&features, 1).unwrap();
        assert!(same_partition(&model.fit.assignments, &truth));
        // highest mean log share is the group centred at y = 2.5
        assert!((model.fit.centroids[0][1] - 2.5).abs() < 0.1);
        assert!((model.fit.centroids[3][1] + 1.0).abs() < 0.1);
        assert_eq!(model.periods[0], Period::Morning);
        assert_eq!(model.periods[2], Period::Afternoon);
        assert_eq!(model.labels["st00"], 3);
    }

    #[test]
    fn segmentation_needs_four_distinct_stations() {
        let f: Vec<_> = (0..6).map(|i| feature(&format!("s{i}"), 0.0, if i < 3 { 1.0 } else { 2.0 })).collect();
        assert!(matches!(segment_stations(&f, 0), Err(ClusterError::TooFewPoints { k: 4, distinct: 2 })));
        let four: Vec<_> = (0..4).map(|i| feature(&format!("s{i}"), i as f64, 0.0)).collect();
        assert!(segment_stations(&four, 0).is_ok());
    }

    fn arb_points() -> impl Strategy<Value = Vec<Point>> {
        prop::collection::vec((-50i32..50, -50i32..50), 5..40)
            .prop_map(|v| v.into_iter().map(|(x, y)| [x as f64 / 4.0, y as f64 / 4.0]).collect())
    }

    proptest! {
        #[test]
        fn fit_invariants(points in arb_points(), k in 1usize..5, seed in any::<u64>()) {
            let distinct = points.iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect::<HashSet<_>>().len();
            prop_assume!(distinct >= k);
            let fit = kmeans_fit(&points, k, seed).unwrap();
            prop_assert!(fit.inertia >= 0.0);
            prop_assert!(fit.inertia_trace.windows(2).all(|w| w[1] <= w[0]));
            for j in 0..k {
                let members: Vec<&Point> = points.iter().zip(&fit.assignments).filter(|(_, &c)| c == j).map(|(p, _)| p).collect();
                prop_assert!(!members.is_empty());
                let mx = members.iter().map(|p| p[0]).sum::<f64>() / members.len() as f64;
                let my = members.iter().map(|p| p[1]).sum::<f64>() / members.len() as f64;
                prop_assert!((mx - fit.centroids[j][0]).abs() < 1e-9);
                prop_assert!((my - fit.centroids[j][1]).abs() < 1e-9);
            }
            if fit.converged {
                for (p, &c) in points.iter().zip(&fit.assignments) {
                    prop_assert_eq!(nearest(p, &fit.centroids), c);
                }
            }
            let again = kmeans_fit(&points, k, seed).unwrap();
            prop_assert_eq!(&again, &fit);
        }

        #[test]
        fn translation_keeps_labels(points in arb_points(), seed in any::<u64>(), dx in -8i32..8, dy in -8i32..8) {
            let distinct = points.iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect::<HashSet<_>>().len();
            prop_assume!(distinct >= 3);
            // shifts by multiples of 1/4 keep coordinates exact in binary
            let shifted: Vec<Point> = points.iter().map(|p| [p[0] + dx as f64, p[1] + dy as f64]).collect();
            let a = kmeans_fit(&points, 3, seed).unwrap();
            let b = kmeans_fit(&shifted, 3, seed).unwrap();
            prop_assert_eq!(a.assignments, b.assignments);
        }

        #[test]
        fn relabel_preserves_partition(points in arb_points(), seed in any::<u64>()) {
            let distinct = points.iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect::<HashSet<_>>().len();
            prop_assume!(distinct >= 4);
            let fit = kmeans_fit(&points, 4, seed).unwrap();
            let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
            let relabeled = fit.relabel(&fit.order_by_mean(&ys));
            prop_assert!(same_partition(&fit.assignments, &relabeled.assignments));
            prop_assert!((fit.inertia - relabeled.inertia).abs() < 1e-12);
        }
    }
}
