//! Brute-force geometric kernels over small point sets.
//!
//! Every search here is an exhaustive scan. Ordering rules (lowest index on
//! ties, first-found order in ball queries) are part of the contract because
//! the downstream pipeline must be reproducible bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

#[inline]
pub fn sq_dist(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Non-empty set of finite 3-D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Point3>,
}

impl PointSet {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::NonFiniteCoordinate(i));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<PointSet> {
        let pts = indices
            .iter()
            .map(|&i| {
                self.points.get(i).copied().ok_or(Error::Index {
                    index: i,
                    len: self.points.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        PointSet::new(pts)
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }
}

/// `K` neighbor indices into a target set for one query point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGroup {
    pub center_index: usize,
    pub neighbor_indices: Vec<usize>,
    /// Fewer than `K` targets were inside the radius.
    pub padded: bool,
    /// No target was inside the radius; the nearest target was used.
    pub fallback: bool,
}

/// Seeded start index for farthest point sampling over `n` points.
pub fn fps_start(n: usize, seed: u64) -> usize {
    ChaCha8Rng::seed_from_u64(seed).random_range(0..n)
}

/// Greedy max-min subset of `m` indices. The first index is drawn from the
/// seed; ties go to the lowest index.
pub fn farthest_point_sample(ps: &PointSet, m: usize, seed: u64) -> Result<Vec<usize>> {
    check_count(ps, m)?;
    farthest_point_sample_from(ps, m, fps_start(ps.len(), seed))
}

pub fn farthest_point_sample_from(ps: &PointSet, m: usize, start: usize) -> Result<Vec<usize>> {
    check_count(ps, m)?;
    let pts = ps.points();
    if start >= pts.len() {
        return Err(Error::Index {
            index: start,
            len: pts.len(),
        });
    }
    let mut selected = Vec::with_capacity(m);
    let mut taken = vec![false; pts.len()];
    let mut min_d = vec![f64::INFINITY; pts.len()];
    let mut next = start;
    for _ in 0..m {
        selected.push(next);
        taken[next] = true;
        let c = pts[next];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, p) in pts.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d = sq_dist(p, &c);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if min_d[i] > best_d {
                best_d = min_d[i];
                best = i;
            }
        }
        next = best;
    }
    Ok(selected)
}

fn check_count(ps: &PointSet, m: usize) -> Result<()> {
    if m == 0 || m > ps.len() {
        return Err(Error::SampleCount {
            requested: m,
            available: ps.len(),
        });
    }
    Ok(())
}

fn check_query(radius: f64, k: usize) -> Result<()> {
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::Radius(radius));
    }
    if k == 0 {
        return Err(Error::ZeroNeighbors);
    }
    Ok(())
}

/// Radius search for one center. Returns up to `k` in-radius targets in index
/// order; short groups replicate the first hit, and an empty ball falls back
/// to the nearest target replicated `k` times.
pub fn ball_query_point(
    center: &Point3,
    center_index: usize,
    targets: &[Point3],
    radius: f64,
    k: usize,
) -> NeighborGroup {
    let r2 = radius * radius;
    let mut hits = Vec::with_capacity(k);
    let mut nearest = 0;
    let mut nearest_d = f64::INFINITY;
    for (j, p) in targets.iter().enumerate() {
        let d = sq_dist(p, center);
        if d <= r2 {
            hits.push(j);
            if hits.len() == k {
                break;
            }
        }
        if d < nearest_d {
            nearest_d = d;
            nearest = j;
        }
    }
    let (padded, fallback) = if hits.is_empty() {
        hits.push(nearest);
        (true, true)
    } else {
        (hits.len() < k, false)
    };
    let first = hits[0];
    hits.resize(k, first);
    NeighborGroup {
        center_index,
        neighbor_indices: hits,
        padded,
        fallback,
    }
}

pub fn ball_query(
    centers: &PointSet,
    targets: &PointSet,
    radius: f64,
    k: usize,
) -> Result<Vec<NeighborGroup>> {
    check_query(radius, k)?;
    if targets.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    Ok(centers
        .points()
        .iter()
        .enumerate()
        .map(|(i, c)| ball_query_point(c, i, targets.points(), radius, k))
        .collect())
}

/// `k` nearest targets per center, ascending by distance, ties by index.
pub fn knn(centers: &PointSet, targets: &PointSet, k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > targets.len() {
        return Err(Error::SampleCount {
            requested: k,
            available: targets.len(),
        });
    }
    Ok(centers
        .points()
        .iter()
        .map(|c| knn_point(c, targets.points(), k))
        .collect())
}

pub fn knn_point(center: &Point3, targets: &[Point3], k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = targets
        .iter()
        .enumerate()
        .map(|(j, p)| (sq_dist(p, center), j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, cmp);
        order.truncate(k);
    }
    order.sort_unstable_by(cmp);
    order.into_iter().map(|(_, j)| j).collect()
}

fn mean_nearest_sq(from: &[Point3], to: &[Point3]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|p| {
            to.iter()
                .map(|q| sq_dist(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / from.len() as f64
}

/// Symmetric mean squared nearest-neighbor distance.
pub fn chamfer_distance(a: &PointSet, b: &PointSet) -> f64 {
    mean_nearest_sq(a.points(), b.points()) + mean_nearest_sq(b.points(), a.points())
}

/// Group member coordinates relative to `center`.
pub fn gather_group(targets: &PointSet, group: &NeighborGroup, center: &Point3) -> Result<Vec<Point3>> {
    let pts = targets.points();
    group
        .neighbor_indices
        .iter()
        .map(|&j| {
            pts.get(j).map(|p| sub(p, center)).ok_or(Error::Index {
                index: j,
                len: pts.len(),
            })
        })
        .collect()
}

/// Group member feature rows, copied without recentering.
pub fn gather_features(
    features: &[f64],
    channels: usize,
    group: &NeighborGroup,
) -> Result<Vec<f64>> {
    let rows = features.len().checked_div(channels).unwrap_or(0);
    let mut out = Vec::with_capacity(group.neighbor_indices.len() * channels);
    for &j in &group.neighbor_indices {
        if j >= rows {
            return Err(Error::Index { index: j, len: rows });
        }
        out.extend_from_slice(&features[j * channels..(j + 1) * channels]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(v: &[Point3]) -> PointSet {
        PointSet::new(v.to_vec()).unwrap()
    }

    #[test]
    fn point_set_validation() {
        assert!(matches!(PointSet::new(vec![]), Err(Error::EmptyPointSet)));
        assert!(matches!(
            PointSet::new(vec![[0.0, f64::NAN, 0.0]]),
            Err(Error::NonFiniteCoordinate(0))
        ));
    }

    #[test]
    fn fps_picks_far_outlier() {
        let p = ps(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [10.0, 10.0, 10.0]]);
        assert_eq!(farthest_point_sample_from(&p, 2, 0).unwrap(), vec![0, 3]);
    }

    #[test]
    fn fps_full_selection_is_permutation() {
        let p = ps(&[[0.0; 3], [0.0; 3], [1.0, 0.0, 0.0], [0.0; 3]]);
        let mut s = farthest_point_sample(&p, 4, 9).unwrap();
        s.sort();
        assert_eq!(s, vec![0, 1, 2, 3]);
    }

    #[test]
    fn fps_single_is_seeded_start() {
        let p = ps(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        for seed in 0..5 {
            assert_eq!(farthest_point_sample(&p, 1, seed).unwrap(), vec![fps_start(3, seed)]);
        }
        assert!(matches!(
            farthest_point_sample(&p, 4, 0),
            Err(Error::SampleCount { requested: 4, available: 3 })
        ));
    }

    #[test]
    fn ball_query_pads_with_first_hit() {
        let c = ps(&[[0.0; 3]]);
        let t = ps(&[[0.1, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let g = &ball_query(&c, &t, 0.5, 2).unwrap()[0];
        assert_eq!(g.neighbor_indices, vec![0, 0]);
        assert!(g.padded && !g.fallback);
    }

    #[test]
    fn ball_query_coincident_target() {
        let c = ps(&[[0.3, 0.2, 0.1]]);
        let t = ps(&[[5.0; 3], [0.3, 0.2, 0.1]]);
        let g = &ball_query(&c, &t, 0.01, 1).unwrap()[0];
        assert_eq!(g.neighbor_indices, vec![1]);
        assert!(!g.padded);
    }

    #[test]
    fn ball_query_empty_ball_falls_back_to_nearest() {
        let c = ps(&[[0.0; 3]]);
        let t = ps(&[[5.0; 3]]);
        let g = &ball_query(&c, &t, 0.1, 3).unwrap()[0];
        assert_eq!(g.neighbor_indices, vec![0, 0, 0]);
        assert!(g.padded && g.fallback);
        assert!(matches!(ball_query(&c, &t, 0.0, 3), Err(Error::Radius(_))));
        assert!(matches!(ball_query(&c, &t, 1.0, 0), Err(Error::ZeroNeighbors)));
    }

    #[test]
    fn knn_on_a_line() {
        let t = ps(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]]);
        assert_eq!(knn(&ps(&[[0.0; 3]]), &t, 2).unwrap(), vec![vec![0, 1]]);
        assert_eq!(knn(&ps(&[[2.0, 0.0, 0.0]]), &t, 1).unwrap(), vec![vec![2]]);
        assert!(knn(&ps(&[[0.0; 3]]), &t, 5).is_err());
    }

    #[test]
    fn chamfer_hand_values() {
        let a = ps(&[[0.0; 3]]);
        let b = ps(&[[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer_distance(&a, &b), 2.0);
        assert_eq!(chamfer_distance(&a, &a), 0.0);
    }

    #[test]
    fn gather_is_center_relative() {
        let t = ps(&[[1.0, 1.0, 0.0], [1.0, 0.0, 0.0]]);
        let g = NeighborGroup {
            center_index: 0,
            neighbor_indices: vec![0, 1],
            padded: false,
            fallback: false,
        };
        let rel = gather_group(&t, &g, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(rel, vec![[0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]);
        let bad = NeighborGroup {
            neighbor_indices: vec![2],
            ..g.clone()
        };
        assert!(gather_group(&t, &bad, &[0.0; 3]).is_err());
        let f = gather_features(&[1.0, 2.0, 3.0, 4.0], 2, &g).unwrap();
        assert_eq!(f, vec![1.0, 2.0, 3.0, 4.0]);
    }
}
