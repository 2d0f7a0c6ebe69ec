//! K-means over the parameter vectors submitted in one round, cluster-count
//! selection from the WCSS curve, and benign/adversary labeling.
//!
//! Cluster indices are 0-based throughout.

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ParameterVector;

/// Seeded restarts per k; the best (lowest WCSS) run is kept.
pub const RESTARTS: usize = 5;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-9;
/// Point sets whose diameter is below this are a single cluster.
pub const SPREAD_FLOOR: f64 = 1e-9;

/// The round's submissions as labeled points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    ids: Vec<usize>,
    points: Vec<Vec<f64>>,
    dim: usize,
}

impl PointSet {
    pub fn new(ids: Vec<usize>, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::param("point set is empty"));
        }
        if ids.len() != points.len() {
            return Err(Error::param("one id per point required"));
        }
        if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
            return Err(Error::param("point ids must be distinct"));
        }
        let dim = points[0].len();
        for p in &points {
            if p.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("point coordinates must be finite"));
            }
        }
        Ok(Self { ids, points, dim })
    }

    /// Ids are 0..n in order.
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::new((0..points.len()).collect(), points)
    }

    pub fn from_updates(updates: &BTreeMap<usize, ParameterVector>) -> Result<Self> {
        Self::new(
            updates.keys().copied().collect(),
            updates.values().map(|p| p.to_vec()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn diameter(&self) -> f64 {
        let mut max = 0.0f64;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                max = max.max(sq_dist(a, b));
            }
        }
        max.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index per point, aligned with the point set.
    pub assignments: Vec<usize>,
    pub wcss: f64,
    pub iterations: usize,
    /// WCSS after initial assignment and after every Lloyd iteration.
    pub objective_trace: Vec<f64>,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Positions (not ids) of the points in `cluster`.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a Vec<f64>>, dim: usize) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; dim];
    let mut n = 0usize;
    for r in rows {
        sum.iter_mut().zip(r).for_each(|(s, v)| *s += v);
        n += 1;
    }
    (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
}

/// Nearest centroid for every point, ties to the lowest index.
pub fn assign_points(points: &PointSet, centroids: &[Vec<f64>]) -> Result<Vec<usize>> {
    if centroids.is_empty() {
        return Err(Error::param("at least one centroid required"));
    }
    if let Some(c) = centroids.iter().find(|c| c.len() != points.dim) {
        return Err(Error::Shape {
            expected: points.dim,
            found: c.len(),
        });
    }
    Ok(points
        .points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, c) in centroids.iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best_d {
                    best = k;
                    best_d = d;
                }
            }
            best
        })
        .collect())
}

/// Each centroid moves to the mean of its members; a centroid with no
/// members stays where it was.
pub fn update_centroids(
    points: &PointSet,
    assignments: &[usize],
    previous: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    previous
        .iter()
        .enumerate()
        .map(|(k, prev)| {
            let members = points
                .points
                .iter()
                .zip(assignments)
                .filter(|(_, &a)| a == k)
                .map(|(p, _)| p);
            mean_of(members, points.dim).unwrap_or_else(|| prev.clone())
        })
        .collect()
}

fn objective(points: &PointSet, assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum()
}

/// Sum of squared distances from each point to its assigned centroid.
pub fn wcss(points: &PointSet, clustering: &Clustering) -> f64 {
    objective(points, &clustering.assignments, &clustering.centroids)
}

/// Lloyd iterations from the given centroids until the assignments stop
/// changing, every centroid moves less than `tol`, or `max_iter` is hit.
pub fn lloyd(
    points: &PointSet,
    init: Vec<Vec<f64>>,
    max_iter: usize,
    tol: f64,
) -> Result<Clustering> {
    let mut centroids = init;
    let mut assignments = assign_points(points, &centroids)?;
    let mut j = objective(points, &assignments, &centroids);
    let mut trace = vec![j];
    let mut iterations = 0;
    while iterations < max_iter {
        let next = update_centroids(points, &assignments, &centroids);
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        let next_assignments = assign_points(points, &next)?;
        let next_j = objective(points, &next_assignments, &next);
        debug_assert!(
            next_j <= j + 1e-9 * j.max(1.0),
            "lloyd objective increased: {j} -> {next_j}"
        );
        iterations += 1;
        let changed = next_assignments != assignments;
        centroids = next;
        assignments = next_assignments;
        j = next_j;
        trace.push(j);
        if !changed || shift < tol {
            break;
        }
    }
    Ok(Clustering {
        k: centroids.len(),
        centroids,
        assignments,
        wcss: j,
        iterations,
        objective_trace: trace,
    })
}

/// k-means++ seeding: first center uniform, the rest drawn with probability
/// proportional to squared distance from the nearest chosen center.
fn seed_centroids(points: &PointSet, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut nearest: Vec<f64> = points
        .points
        .iter()
        .map(|p| sq_dist(p, &points.points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                if *d > 0.0 && target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // All points coincide with chosen centers.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (d, p) in nearest.iter_mut().zip(&points.points) {
            *d = d.min(sq_dist(p, &points.points[next]));
        }
    }
    chosen.iter().map(|&i| points.points[i].clone()).collect()
}

/// Best clustering for every k in `1..=min(k_max, n)`.
///
/// Each k keeps the lowest-WCSS run among [`RESTARTS`] k-means++ seedings
/// plus one warm start from the (k-1) solution with the worst-fit point
/// added as a new center. The warm start makes WCSS non-increasing in k.
pub fn kmeans_sweep(
    points: &PointSet,
    k_max: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<Vec<Clustering>> {
    if k_max < 1 {
        return Err(Error::param("k must be >= 1"));
    }
    let top = k_max.min(points.len());
    let mut sweep: Vec<Clustering> = Vec::with_capacity(top);
    for k in 1..=top {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut best: Option<Clustering> = None;
        let mut consider = |c: Clustering| {
            if best.as_ref().is_none_or(|b| c.wcss < b.wcss) {
                best = Some(c);
            }
        };
        for _ in 0..RESTARTS {
            consider(lloyd(
                points,
                seed_centroids(points, k, &mut rng),
                max_iter,
                tol,
            )?);
        }
        if let Some(prev) = sweep.last() {
            let worst = points
                .points
                .iter()
                .zip(&prev.assignments)
                .map(|(p, &a)| sq_dist(p, &prev.centroids[a]))
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, d)| if d > acc.1 { (i, d) } else { acc },
                )
                .0;
            let mut init = prev.centroids.clone();
            init.push(points.points[worst].clone());
            consider(lloyd(points, init, max_iter, tol)?);
        }
        sweep.push(best.expect("at least one run per k"));
    }
    Ok(sweep)
}

/// Lloyd's k-means with seeded k-means++ restarts.
pub fn kmeans(
    points: &PointSet,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<Clustering> {
    if k < 1 || k > points.len() {
        return Err(Error::param(format!(
            "k = {k} must be in 1..={}",
            points.len()
        )));
    }
    Ok(kmeans_sweep(points, k, seed, max_iter, tol)?
        .pop()
        .expect("sweep covers k"))
}

/// Chooses the cluster count from a sweep's WCSS curve.
///
/// The curve has flattened at the smallest k (below the number of points)
/// whose WCSS is under `elbow_ratio` times the single-cluster WCSS; beyond
/// that, extra clusters only split residual spread. If no such k exists, or
/// the points are all but identical, the answer is 1.
pub fn select_from_sweep(points: &PointSet, sweep: &[Clustering], elbow_ratio: f64) -> usize {
    if sweep.is_empty() || points.diameter() < SPREAD_FLOOR {
        return 1;
    }
    let total = sweep[0].wcss;
    if total <= 0.0 {
        return 1;
    }
    let top = sweep.len().min(points.len().saturating_sub(1));
    (2..=top)
        .find(|&k| sweep[k - 1].wcss < elbow_ratio * total)
        .unwrap_or(1)
}

pub fn select_cluster_count(
    points: &PointSet,
    k_max: usize,
    elbow_ratio: f64,
    seed: u64,
) -> Result<usize> {
    if !(elbow_ratio > 0.0 && elbow_ratio < 1.0) {
        return Err(Error::param("elbow_ratio must be in (0, 1)"));
    }
    let sweep = kmeans_sweep(points, k_max, seed, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
    Ok(select_from_sweep(points, &sweep, elbow_ratio))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterVerdict {
    pub benign_cluster: usize,
    pub adversary_clusters: BTreeSet<usize>,
    pub benign_ids: BTreeSet<usize>,
    pub adversary_ids: BTreeSet<usize>,
    /// Dissimilarity between the benign cluster and each adversary cluster.
    pub dissimilarities: BTreeMap<usize, f64>,
}

impl ClusterVerdict {
    pub fn dissimilarity(&self) -> f64 {
        self.dissimilarities.values().copied().fold(0.0, f64::max)
    }
}

/// Splits the clients into benign and adversarial.
///
/// The benign cluster is the non-empty cluster whose centroid lies nearest
/// the global weights broadcast this round; ties go to the larger cluster,
/// then the lower index. Every other cluster is adversarial.
pub fn label_clusters(
    points: &PointSet,
    clustering: &Clustering,
    prev_global: &[f64],
) -> Result<ClusterVerdict> {
    if prev_global.len() != points.dim {
        return Err(Error::Shape {
            expected: points.dim,
            found: prev_global.len(),
        });
    }
    let sizes = clustering.sizes();
    let benign = (0..clustering.k)
        .filter(|&c| sizes[c] > 0)
        .min_by(|&a, &b| {
            let da = sq_dist(&clustering.centroids[a], prev_global);
            let db = sq_dist(&clustering.centroids[b], prev_global);
            da.total_cmp(&db)
                .then(sizes[b].cmp(&sizes[a]))
                .then(a.cmp(&b))
        })
        .ok_or_else(|| Error::param("clustering has no members"))?;

    let mut verdict = ClusterVerdict {
        benign_cluster: benign,
        adversary_clusters: BTreeSet::new(),
        benign_ids: BTreeSet::new(),
        adversary_ids: BTreeSet::new(),
        dissimilarities: BTreeMap::new(),
    };
    for (pos, &c) in clustering.assignments.iter().enumerate() {
        let id = points.ids[pos];
        if c == benign {
            verdict.benign_ids.insert(id);
        } else {
            verdict.adversary_clusters.insert(c);
            verdict.adversary_ids.insert(id);
        }
    }
    let benign_points: Vec<Vec<f64>> = clustering
        .members(benign)
        .into_iter()
        .map(|i| points.points[i].clone())
        .collect();
    for &c in &verdict.adversary_clusters {
        let other: Vec<Vec<f64>> = clustering
            .members(c)
            .into_iter()
            .map(|i| points.points[i].clone())
            .collect();
        verdict
            .dissimilarities
            .insert(c, dissimilarity(&benign_points, &other)?);
    }
    Ok(verdict)
}

/// Coordinate-wise dissimilarity of two clusters: the sum over coordinates
/// of squared centroid differences.
pub fn dissimilarity(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let dim = a
        .first()
        .ok_or_else(|| Error::param("dissimilarity of an empty cluster"))?
        .len();
    if b.is_empty() {
        return Err(Error::param("dissimilarity of an empty cluster"));
    }
    if let Some(p) = a.iter().chain(b).find(|p| p.len() != dim) {
        return Err(Error::Shape {
            expected: dim,
            found: p.len(),
        });
    }
    let ca = mean_of(a.iter(), dim).expect("non-empty");
    let cb = mean_of(b.iter(), dim).expect("non-empty");
    Ok(ca.iter().zip(&cb).map(|(x, y)| (x - y).powi(2)).sum())
}
