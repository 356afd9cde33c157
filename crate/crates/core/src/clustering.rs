//! Adaptive k-means consolidation of candidate points and selection of the
//! boundary cluster by frame span.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::CandidatePoint;
use crate::error::{Error, Result};

/// Upper limit on the cluster count.
pub const MAX_CLUSTERS: usize = 10;
/// Independent k-means initialisations per run.
pub const RESTARTS: usize = 5;
const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centers: Vec<Vec<f64>>,
    /// Cluster index of each sample; the indicator matrix in compact form.
    pub labels: Vec<usize>,
    pub j_intra: f64,
    pub j_inter: f64,
}

impl ClusterModel {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// `λ = N / K²`.
    pub fn lambda(&self) -> f64 {
        cost_weight(self.n(), self.k)
    }

    /// `J_intra + λ J_inter`.
    pub fn cost(&self) -> f64 {
        self.j_intra + self.lambda() * self.j_inter
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == cluster).collect()
    }
}

pub fn cost_weight(n: usize, k: usize) -> f64 {
    n as f64 / (k * k) as f64
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum of squared distances from each sample to its centre.
pub fn intra_distance(points: &[Vec<f64>], centers: &[Vec<f64>], labels: &[usize]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| dist2(p, &centers[l])).sum()
}

/// Sum of squared distances over all ordered pairs of centres.
pub fn inter_distance(centers: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for a in centers {
        for b in centers {
            total += dist2(a, b);
        }
    }
    total
}

/// Cluster means, with `None` for empty clusters.
fn means(points: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Option<Vec<f64>>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| (c > 0).then(|| s.into_iter().map(|v| v / c as f64).collect()))
        .collect()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(p, c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Farthest-point seeding from `first`. With `rng`, each further centre is
/// drawn with probability proportional to its squared distance instead.
fn farthest_point_init(points: &[Vec<f64>], k: usize, first: usize, mut rng: Option<&mut ChaCha8Rng>) -> Vec<Vec<f64>> {
    let mut centers = vec![points[first].clone()];
    let mut closest: Vec<f64> = points.iter().map(|p| dist2(p, &points[first])).collect();
    while centers.len() < k {
        let mut pick = 0;
        for i in 1..points.len() {
            if closest[i] > closest[pick] {
                pick = i;
            }
        }
        if let Some(r) = rng.as_deref_mut() {
            let total: f64 = closest.iter().sum();
            if total > 0.0 {
                let mut u = r.random_range(0.0..total);
                for (i, &c) in closest.iter().enumerate() {
                    if c > 0.0 && u < c {
                        pick = i;
                        break;
                    }
                    u -= c;
                }
            }
        }
        centers.push(points[pick].clone());
        for (c, p) in closest.iter_mut().zip(points) {
            *c = c.min(dist2(p, &points[pick]));
        }
    }
    centers
}

/// Lloyd iterations from `centers`.
fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> ClusterModel {
    let k = centers.len();
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..MAX_ITERATIONS {
        let mut updated = means(points, &labels, k);
        // An empty cluster takes the sample farthest from its own centre,
        // provided that sample does not leave its cluster empty.
        while let Some(empty) = updated.iter().position(Option::is_none) {
            let mut sizes = vec![0usize; k];
            labels.iter().for_each(|&l| sizes[l] += 1);
            let current: Vec<Vec<f64>> = updated
                .iter()
                .zip(&centers)
                .map(|(u, c)| u.clone().unwrap_or_else(|| c.clone()))
                .collect();
            let donor = (0..points.len())
                .filter(|&i| sizes[labels[i]] > 1)
                .max_by(|&a, &b| {
                    dist2(&points[a], &current[labels[a]])
                        .total_cmp(&dist2(&points[b], &current[labels[b]]))
                        .then(b.cmp(&a))
                })
                .expect("K <= N leaves a cluster with two samples");
            let old = labels[donor];
            labels[donor] = empty;
            let mut fixed = means(points, &labels, k);
            fixed[empty] = Some(points[donor].clone());
            if fixed[old].is_none() {
                fixed[old] = Some(current[old].clone());
            }
            updated = fixed;
        }
        centers = updated.into_iter().map(Option::unwrap).collect();
        let next: Vec<usize> = points
            .iter()
            .zip(&labels)
            .map(|(p, &l)| {
                let best = nearest(p, &centers);
                // Equidistant samples stay put so re-seeded duplicates survive.
                if dist2(p, &centers[l]) <= dist2(p, &centers[best]) { l } else { best }
            })
            .collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    hartigan(points, &mut labels, k);
    let final_means = means(points, &labels, k);
    for (c, m) in centers.iter_mut().zip(final_means) {
        if let Some(m) = m {
            *c = m;
        }
    }
    ClusterModel {
        k,
        j_intra: intra_distance(points, &centers, &labels),
        j_inter: inter_distance(&centers),
        centers,
        labels,
    }
}

/// Single-sample moves that lower `J_intra`, until none is left. Escapes
/// Lloyd fixed points where a sample sits nearest its own centre but moving
/// it still shrinks the total.
fn hartigan(points: &[Vec<f64>], labels: &mut [usize], k: usize) {
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    let mut centers: Vec<Vec<f64>> = means(points, labels, k).into_iter().map(|m| m.unwrap_or_default()).collect();
    for _ in 0..MAX_ITERATIONS {
        let mut moved = false;
        for (i, p) in points.iter().enumerate() {
            let a = labels[i];
            if sizes[a] < 2 {
                continue;
            }
            let na = sizes[a] as f64;
            let loss = na / (na - 1.0) * dist2(p, &centers[a]);
            let mut gain = (a, 0.0);
            for b in (0..k).filter(|&b| b != a) {
                let nb = sizes[b] as f64;
                let delta = nb / (nb + 1.0) * dist2(p, &centers[b]) - loss;
                if delta < gain.1 - 1e-12 * loss.max(1e-300) {
                    gain = (b, delta);
                }
            }
            let b = gain.0;
            if b == a {
                continue;
            }
            let (na, nb) = (sizes[a] as f64, sizes[b] as f64);
            for d in 0..p.len() {
                centers[a][d] = (centers[a][d] * na - p[d]) / (na - 1.0);
                centers[b][d] = (centers[b][d] * nb + p[d]) / (nb + 1.0);
            }
            sizes[a] -= 1;
            sizes[b] += 1;
            labels[i] = b;
            moved = true;
        }
        if !moved {
            break;
        }
    }
}

fn check_points(points: &[Vec<f64>]) -> Result<()> {
    let dim = points.first().map(Vec::len).unwrap_or(0);
    if dim == 0 {
        return Err(Error::InvalidInput("clustering needs non-empty feature vectors".into()));
    }
    if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput("feature vectors must share a dimension and be finite".into()));
    }
    Ok(())
}

/// Best of [`RESTARTS`] farthest-point-initialised Lloyd runs by `J_intra`.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterModel> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("cluster count {k} must be in 1..={n}")));
    }
    check_points(points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut best: Option<ClusterModel> = None;
    for r in 0..RESTARTS {
        let first = order[r % n];
        let centers = if r == 0 {
            farthest_point_init(points, k, first, None)
        } else {
            farthest_point_init(points, k, first, Some(&mut rng))
        };
        let model = lloyd(points, centers);
        if best.as_ref().is_none_or(|b| model.j_intra < b.j_intra) {
            best = Some(model);
        }
    }
    Ok(best.unwrap())
}

pub fn features(points: &[CandidatePoint]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.features.clone()).collect()
}

/// Cost of each evaluated cluster count, plus the chosen model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveK {
    pub k: usize,
    pub model: ClusterModel,
    /// `(K, cost)` in evaluation order.
    pub costs: Vec<(usize, f64)>,
}

/// Chooses K by minimising `J_intra + (N/K²) J_inter` from K = 2 upward,
/// stopping at the first increase unless `full_sweep` is set.
pub fn adaptive_k(points: &[Vec<f64>], max_k: usize, seed: u64, full_sweep: bool) -> Result<AdaptiveK> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InsufficientCandidates { needed: 2, found: n });
    }
    if max_k < 2 {
        return Err(Error::Config(format!("cluster cap must be at least 2, got {max_k}")));
    }
    let cap = max_k.min(n);
    let mut best = kmeans(points, 2, seed)?;
    let mut costs = vec![(2, best.cost())];
    for k in 3..=cap {
        let model = kmeans(points, k, seed)?;
        let cost = model.cost();
        costs.push((k, cost));
        if cost < best.cost() {
            best = model;
        } else if !full_sweep && cost > costs[costs.len() - 2].1 {
            break;
        }
    }
    Ok(AdaptiveK {
        k: best.k,
        model: best,
        costs,
    })
}

/// Frames within `radius` (exclusive) of any of `centres`, counted once.
pub fn union_span(centres: &[usize], radius: f64, psi: usize) -> usize {
    (0..psi)
        .filter(|&t| centres.iter().any(|&c| (t as f64 - c as f64).abs() < radius))
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySelection {
    /// Chosen cluster count.
    pub k: usize,
    /// Chosen cluster index.
    pub cluster: usize,
    pub boundaries: Vec<usize>,
    /// Frame span of every cluster.
    pub spans: Vec<usize>,
    /// Clusters whose span was within tolerance of the maximum.
    pub tied: Vec<usize>,
}

/// Picks the cluster whose candidates span the most frames.
///
/// The span is bounded by `ψ`, so several clusters often saturate it.
/// Clusters within `ψ / (2 ω_p)` frames of the best span count as tied; the
/// tie goes to the cluster centre nearest `opening` (the feature vector at
/// frame 0, where every take starts a repetition), or to the cluster with the
/// earliest point when no opening pose is given.
pub fn select_boundaries(
    model: &ClusterModel,
    points: &[CandidatePoint],
    psi: usize,
    omega_p: usize,
    opening: Option<&[f64]>,
) -> Result<BoundarySelection> {
    if points.len() != model.n() {
        return Err(Error::InvalidInput(format!(
            "model has {} samples but {} points were given",
            model.n(),
            points.len()
        )));
    }
    if omega_p == 0 || psi == 0 {
        return Err(Error::InvalidInput("sequence length and primary frequency must be positive".into()));
    }
    let radius = psi as f64 / omega_p as f64;
    let members: Vec<Vec<usize>> = (0..model.k)
        .map(|c| model.members(c).into_iter().map(|i| points[i].t_c).collect())
        .collect();
    let spans: Vec<usize> = members.iter().map(|m| union_span(m, radius, psi)).collect();
    let best = *spans.iter().max().unwrap();
    let tolerance = (psi / (2 * omega_p)) as f64;
    let tied: Vec<usize> = (0..model.k)
        .filter(|&c| !members[c].is_empty() && (best - spans[c]) as f64 <= tolerance)
        .collect();
    let earliest = |c: usize| members[c].iter().min().copied().unwrap_or(usize::MAX);
    let cluster = match opening {
        Some(open) if tied.len() > 1 => *tied
            .iter()
            .min_by(|&&a, &&b| {
                dist2(&model.centers[a], open)
                    .total_cmp(&dist2(&model.centers[b], open))
                    .then(earliest(a).cmp(&earliest(b)))
            })
            .unwrap(),
        _ => {
            let exact: Vec<usize> = tied.iter().copied().filter(|&c| spans[c] == best).collect();
            let pool = if opening.is_some() { &tied } else { &exact };
            *pool.iter().min_by_key(|&&c| earliest(c)).unwrap()
        }
    };
    let mut boundaries = members[cluster].clone();
    boundaries.sort_unstable();
    boundaries.dedup();
    Ok(BoundarySelection {
        k: model.k,
        cluster,
        boundaries,
        spans,
        tied,
    })
}

/// `[start, end)` frame interval.
pub type Segment = [usize; 2];

/// Intervals between consecutive boundaries. A leading or trailing partial
/// interval of at least `ψ / (2 ω_p)` frames is its own segment, otherwise it
/// joins its neighbour.
pub fn boundaries_to_segments(boundaries: &[usize], psi: usize, omega_p: usize) -> Result<Vec<Segment>> {
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("boundaries must be strictly increasing".into()));
    }
    if boundaries.iter().any(|&b| b > psi) {
        return Err(Error::InvalidInput(format!("boundary beyond the sequence end {psi}")));
    }
    let min_len = psi as f64 / (2 * omega_p.max(1)) as f64;
    let mut inner: Vec<usize> = boundaries.iter().copied().filter(|&b| b > 0 && b < psi).collect();
    if inner.first().is_some_and(|&b| (b as f64) < min_len) {
        inner.remove(0);
    }
    if inner.last().is_some_and(|&b| ((psi - b) as f64) < min_len) {
        inner.pop();
    }
    let mut cuts = vec![0];
    cuts.extend(inner);
    cuts.push(psi);
    Ok(cuts.windows(2).map(|w| [w[0], w[1]]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[&[f64]]) -> Vec<Vec<f64>> {
        v.iter().map(|p| p.to_vec()).collect()
    }

    fn candidate(t_c: usize, features: Vec<f64>) -> CandidatePoint {
        CandidatePoint {
            t_c,
            features,
            window: [t_c.saturating_sub(1), t_c + 1],
        }
    }

    #[test]
    fn singleton_clusters_have_no_intra_distance() {
        let p = pts(&[&[0.0, 1.0], &[2.0, 0.5], &[-1.0, 3.0], &[4.0, 4.0]]);
        let m = kmeans(&p, 4, 7).unwrap();
        assert_eq!(m.j_intra, 0.0);
        let mut labels = m.labels.clone();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn one_cluster_is_the_mean() {
        let p = pts(&[&[0.0], &[1.0], &[5.0]]);
        let m = kmeans(&p, 1, 0).unwrap();
        assert_eq!(m.j_inter, 0.0);
        assert!((m.centers[0][0] - 2.0).abs() < 1e-15);
        assert!((m.j_intra - (4.0 + 1.0 + 9.0)).abs() < 1e-12);
    }

    #[test]
    fn two_separated_pairs() {
        let p = pts(&[&[0.0, 0.0], &[10.0, 0.0], &[0.0, 1.0], &[10.0, 1.0]]);
        let m = kmeans(&p, 2, 3).unwrap();
        assert_eq!(m.labels[0], m.labels[2]);
        assert_eq!(m.labels[1], m.labels[3]);
        assert_ne!(m.labels[0], m.labels[1]);
        // Each pair is 1 apart: 4 × 0.25. Centres 10 apart, both orders.
        assert!((m.j_intra - 1.0).abs() < 1e-12);
        assert!((m.j_inter - 200.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_arithmetic() {
        assert_eq!(cost_weight(12, 2), 3.0);
    }

    #[test]
    fn antipodal_groups_pick_two() {
        let p = pts(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        let a = adaptive_k(&p, 10, 1, true).unwrap();
        assert_eq!(a.k, 2);
        assert_eq!(a.costs.len(), 1);
        // J_inter over both orders: 2 × 4, weighted by λ = 2/4.
        assert!((a.costs[0].1 - 4.0).abs() < 1e-12);
        assert!(matches!(adaptive_k(&p[..1], 10, 1, false), Err(Error::InsufficientCandidates { .. })));
    }

    #[test]
    fn sample_count_bounds_the_search() {
        let p = pts(&[&[0.0], &[1.0], &[3.0]]);
        let a = adaptive_k(&p, 10, 0, true).unwrap();
        assert_eq!(a.costs.iter().map(|c| c.0).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn empty_clusters_are_reseeded() {
        // Three identical points and one outlier with K = 3: one cluster
        // must take a duplicate.
        let p = pts(&[&[0.0], &[0.0], &[0.0], &[9.0]]);
        let m = kmeans(&p, 3, 11).unwrap();
        for c in 0..3 {
            assert!(!m.members(c).is_empty(), "{m:?}");
        }
    }

    #[test]
    fn wide_cluster_wins_the_span() {
        let points = vec![
            candidate(100, vec![0.0]),
            candidate(200, vec![5.0]),
            candidate(300, vec![0.0]),
            candidate(500, vec![0.0]),
        ];
        let model = ClusterModel {
            k: 2,
            centers: vec![vec![0.0], vec![5.0]],
            labels: vec![0, 1, 0, 0],
            j_intra: 0.0,
            j_inter: 50.0,
        };
        let sel = select_boundaries(&model, &points, 600, 6, None).unwrap();
        assert_eq!(sel.cluster, 0);
        assert_eq!(sel.boundaries, vec![100, 300, 500]);
        assert_eq!(sel.spans, vec![597, 199]);
        assert_eq!(union_span(&[200], 100.0, 600), 199);

        let single = ClusterModel {
            k: 1,
            centers: vec![vec![1.0]],
            labels: vec![0; 4],
            j_intra: 0.0,
            j_inter: 0.0,
        };
        assert_eq!(select_boundaries(&single, &points, 600, 6, None).unwrap().cluster, 0);
    }

    #[test]
    fn saturated_spans_defer_to_the_opening_pose() {
        // Two interleaved phases both cover the clip; the one matching the
        // first frame marks the repetition starts.
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for r in 0..5 {
            points.push(candidate(120 * r + 30, vec![1.0]));
            labels.push(0);
            points.push(candidate(120 * r + 90, vec![-1.0]));
            labels.push(1);
        }
        let model = ClusterModel {
            k: 2,
            centers: vec![vec![1.0], vec![-1.0]],
            labels,
            j_intra: 0.0,
            j_inter: 8.0,
        };
        let by_time = select_boundaries(&model, &points, 600, 5, None).unwrap();
        assert_eq!(by_time.cluster, 0);
        let by_pose = select_boundaries(&model, &points, 600, 5, Some(&[-0.9])).unwrap();
        assert_eq!(by_pose.cluster, 1);
        assert_eq!(by_pose.tied, vec![0, 1]);
    }

    #[test]
    fn segments_from_boundaries() {
        assert_eq!(boundaries_to_segments(&[0, 100, 200], 200, 2).unwrap(), vec![[0, 100], [100, 200]]);
        assert_eq!(boundaries_to_segments(&[90, 190], 200, 2).unwrap(), vec![[0, 90], [90, 200]]);
        assert_eq!(boundaries_to_segments(&[10, 100, 195], 200, 2).unwrap(), vec![[0, 100], [100, 200]]);
        assert_eq!(boundaries_to_segments(&[], 50, 2).unwrap(), vec![[0, 50]]);
        assert!(boundaries_to_segments(&[5, 5], 50, 2).is_err());
    }
}
