//! k-Medoids (PAM) over the rows of a separability matrix and the Mean
//! Simplified Silhouette score used to rate each candidate subset size.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sepspace::SeparabilityMatrix;

/// Upper bound on SWAP passes.
pub const MAX_SWAP_ITERS: usize = 100;

/// Floor on `b(i)` in the MSS ratio.
pub const MSS_B_FLOOR: f64 = 1e-12;

/// Symmetric pairwise Euclidean distances, computed once per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn euclidean(space: &SeparabilityMatrix) -> DistanceMatrix {
        let n = space.rows;
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let ri = space.row(i);
                (i + 1..n)
                    .map(|j| {
                        ri.iter()
                            .zip(space.row(j))
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect()
            })
            .collect();
        let mut d = vec![0.0; n * n];
        for (i, row) in upper.iter().enumerate() {
            for (off, &v) in row.iter().enumerate() {
                let j = i + 1 + off;
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        DistanceMatrix { n, d }
    }

    /// Builds a matrix from a distance function evaluated on `i < j`.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> DistanceMatrix {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        DistanceMatrix { n, d }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub k: usize,
    /// Sorted row indices of the medoids.
    pub medoids: Vec<usize>,
    /// For every row, the row index of its medoid.
    pub assignment: Vec<usize>,
    pub total_cost: f64,
    /// Cost after BUILD followed by the cost after each accepted swap.
    pub cost_trace: Vec<f64>,
}

impl ClusterResult {
    /// Members of each cluster, in medoid order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        self.medoids
            .iter()
            .map(|&m| {
                (0..self.assignment.len())
                    .filter(|&i| self.assignment[i] == m)
                    .collect()
            })
            .collect()
    }
}

/// Medoid rows map to themselves; every other row goes to its nearest medoid,
/// ties to the lowest medoid index. Returns the assignment and its cost.
pub fn assign(dist: &DistanceMatrix, medoids: &[usize]) -> (Vec<usize>, f64) {
    let mut sorted = medoids.to_vec();
    sorted.sort_unstable();
    let mut cost = 0.0;
    let assignment = (0..dist.len())
        .map(|i| {
            if sorted.binary_search(&i).is_ok() {
                return i;
            }
            let mut best = sorted[0];
            for &m in &sorted[1..] {
                if dist.get(i, m) < dist.get(i, best) {
                    best = m;
                }
            }
            cost += dist.get(i, best);
            best
        })
        .collect();
    (assignment, cost)
}

fn total_cost(dist: &DistanceMatrix, medoids: &[usize]) -> f64 {
    (0..dist.len())
        .map(|i| {
            medoids
                .iter()
                .map(|&m| dist.get(i, m))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

fn build(dist: &DistanceMatrix, k: usize) -> Vec<usize> {
    let n = dist.len();
    let mut first = 0;
    let mut first_sum = f64::INFINITY;
    for i in 0..n {
        let s: f64 = (0..n).map(|j| dist.get(i, j)).sum();
        if s < first_sum {
            first_sum = s;
            first = i;
        }
    }
    let mut medoids = vec![first];
    let mut is_medoid = vec![false; n];
    is_medoid[first] = true;
    let mut nearest: Vec<f64> = (0..n).map(|j| dist.get(j, first)).collect();
    while medoids.len() < k {
        let mut best = usize::MAX;
        let mut best_gain = f64::NEG_INFINITY;
        for c in (0..n).filter(|&c| !is_medoid[c]) {
            let gain: f64 = (0..n).map(|j| (nearest[j] - dist.get(j, c)).max(0.0)).sum();
            if gain > best_gain {
                best_gain = gain;
                best = c;
            }
        }
        medoids.push(best);
        is_medoid[best] = true;
        for (j, nj) in nearest.iter_mut().enumerate() {
            *nj = nj.min(dist.get(j, best));
        }
    }
    medoids
}

/// Nearest medoid position, nearest distance and second-nearest distance.
fn nearest_two(dist: &DistanceMatrix, medoids: &[usize]) -> Vec<(usize, f64, f64)> {
    (0..dist.len())
        .map(|j| {
            let mut near = (0, f64::INFINITY);
            let mut second = f64::INFINITY;
            for (pos, &m) in medoids.iter().enumerate() {
                let d = dist.get(j, m);
                if d < near.1 {
                    second = near.1;
                    near = (pos, d);
                } else if d < second {
                    second = d;
                }
            }
            (near.0, near.1, second)
        })
        .collect()
}

/// PAM: greedy BUILD, then steepest-descent SWAP until no swap lowers the
/// total cost or [`MAX_SWAP_ITERS`] passes have run. Fully deterministic;
/// ties go to the lowest index.
pub fn pam(dist: &DistanceMatrix, k: usize) -> Result<ClusterResult> {
    let n = dist.len();
    if n < 2 || k < 2 || k > n {
        return Err(Error::BadK { k, n });
    }
    let mut medoids = build(dist, k);
    let mut cost = total_cost(dist, &medoids);
    let mut trace = vec![cost];

    for _ in 0..MAX_SWAP_ITERS {
        if k == n {
            break;
        }
        let near = nearest_two(dist, &medoids);
        let mut is_medoid = vec![false; n];
        medoids.iter().for_each(|&m| is_medoid[m] = true);
        let mut best = (0.0, usize::MAX, usize::MAX);
        for pos in 0..k {
            for h in (0..n).filter(|&h| !is_medoid[h]) {
                let delta: f64 = near
                    .iter()
                    .enumerate()
                    .map(|(j, &(np, dn, ds))| {
                        let djh = dist.get(j, h);
                        if np == pos {
                            djh.min(ds) - dn
                        } else {
                            (djh - dn).min(0.0)
                        }
                    })
                    .sum();
                if delta < best.0 {
                    best = (delta, pos, h);
                }
            }
        }
        let tolerance = 1e-12 * cost.max(1.0);
        if best.1 == usize::MAX || best.0 >= -tolerance {
            break;
        }
        let mut candidate = medoids.clone();
        candidate[best.1] = best.2;
        let new_cost = total_cost(dist, &candidate);
        if new_cost >= cost {
            break;
        }
        medoids = candidate;
        cost = new_cost;
        trace.push(cost);
    }

    medoids.sort_unstable();
    let (assignment, total) = assign(dist, &medoids);
    Ok(ClusterResult {
        k,
        medoids,
        assignment,
        total_cost: total,
        cost_trace: trace,
    })
}

/// PAM on the rows of a separability matrix under Euclidean distance.
pub fn kmedoids(space: &SeparabilityMatrix, k: usize) -> Result<ClusterResult> {
    pam(&DistanceMatrix::euclidean(space), k)
}

/// Mean Simplified Silhouette: the mean over rows of `1 - a(i) / b(i)` where
/// `a(i)` is the distance to the row's own medoid and `b(i)` the mean distance
/// to all other medoids (floored at [`MSS_B_FLOOR`]).
pub fn mss(dist: &DistanceMatrix, result: &ClusterResult) -> f64 {
    let n = dist.len();
    let others = (result.k - 1).max(1) as f64;
    let total: f64 = (0..n)
        .map(|i| {
            let own = result.assignment[i];
            let a = dist.get(i, own);
            let b = result
                .medoids
                .iter()
                .filter(|&&m| m != own)
                .map(|&m| dist.get(i, m))
                .sum::<f64>()
                / others;
            1.0 - a / b.max(MSS_B_FLOOR)
        })
        .sum();
    total / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepRange {
    pub k_min: usize,
    pub k_max: usize,
    pub stride: usize,
}

impl SweepRange {
    /// `[2, n]` with stride 1.
    pub fn full(n: usize) -> SweepRange {
        SweepRange {
            k_min: 2,
            k_max: n,
            stride: 1,
        }
    }

    pub fn with_stride(n: usize, stride: usize) -> SweepRange {
        SweepRange {
            stride,
            ..SweepRange::full(n)
        }
    }

    pub fn ks(&self) -> Vec<usize> {
        (self.k_min..=self.k_max).step_by(self.stride.max(1)).collect()
    }
}

/// MSS score per swept subset size.
#[derive(Debug, Clone, PartialEq)]
pub struct MssCurve {
    pub layer_id: usize,
    pub entries: BTreeMap<usize, f64>,
}

impl MssCurve {
    pub fn new(layer_id: usize, entries: BTreeMap<usize, f64>) -> Self {
        MssCurve { layer_id, entries }
    }

    pub fn ks(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.values().copied().collect()
    }

    pub fn k_min(&self) -> Option<usize> {
        self.entries.keys().next().copied()
    }

    pub fn k_max(&self) -> Option<usize> {
        self.entries.keys().next_back().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,mss\n");
        for (k, v) in &self.entries {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub curve: MssCurve,
    pub results: BTreeMap<usize, ClusterResult>,
}

/// Clusters at every swept `k` (in parallel) and scores each partition.
pub fn sweep(dist: &DistanceMatrix, layer_id: usize, range: SweepRange) -> Result<Sweep> {
    let n = dist.len();
    if range.k_min < 2 || range.k_min > range.k_max || range.k_max > n || range.stride == 0 {
        return Err(Error::BadRange {
            k_min: range.k_min,
            k_max: range.k_max,
            stride: range.stride,
            n,
        });
    }
    let scored: Vec<(usize, ClusterResult, f64)> = range
        .ks()
        .into_par_iter()
        .map(|k| {
            let r = pam(dist, k)?;
            let score = mss(dist, &r);
            Ok((k, r, score))
        })
        .collect::<Result<_>>()?;
    let mut entries = BTreeMap::new();
    let mut results = BTreeMap::new();
    for (k, r, score) in scored {
        entries.insert(k, score);
        results.insert(k, r);
    }
    Ok(Sweep {
        curve: MssCurve::new(layer_id, entries),
        results,
    })
}
