//! Available-variable subsets: uniform sampling and correlated-failure sampling
//! via Spearman correlation and DBSCAN.

use std::collections::VecDeque;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::RawSeries;
use crate::error::{Result, VsfError};
use crate::tensor::Matrix;

/// Sorted, distinct variable indices into `[0, n_total)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsetMask {
    indices: Vec<usize>,
    n_total: usize,
}

impl SubsetMask {
    /// Validates and wraps `indices`. They must be strictly increasing and in range.
    pub fn new(indices: Vec<usize>, n_total: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(VsfError::InvalidSubset("subset is empty".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(VsfError::InvalidSubset(format!(
                "indices must be strictly increasing: {indices:?}"
            )));
        }
        if let Some(&last) = indices.last() {
            if last >= n_total {
                return Err(VsfError::InvalidSubset(format!(
                    "index {last} out of range for {n_total} variables"
                )));
            }
        }
        Ok(Self { indices, n_total })
    }

    /// Sorts and deduplicates before validating.
    pub fn from_unsorted(mut indices: Vec<usize>, n_total: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(indices, n_total)
    }

    /// Every variable; used for oracle comparisons and full-mask distances.
    pub fn full(n_total: usize) -> Self {
        Self {
            indices: (0..n_total).collect(),
            n_total,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn is_full(&self) -> bool {
        self.indices.len() == self.n_total
    }

    pub fn contains(&self, var: usize) -> bool {
        self.indices.binary_search(&var).is_ok()
    }

    /// Variables not in the subset, ascending.
    pub fn complement(&self) -> Vec<usize> {
        (0..self.n_total).filter(|v| !self.contains(*v)).collect()
    }
}

/// `max(1, round(n_total * k_percent / 100))`.
pub fn subset_size(n_total: usize, k_percent: f64) -> usize {
    ((n_total as f64 * k_percent / 100.0).round() as usize).max(1)
}

/// Uniform sample without replacement of `subset_size(n_total, k_percent)` variables.
pub fn sample_random_subset(n_total: usize, k_percent: f64, rng_seed: u64) -> Result<SubsetMask> {
    if !(k_percent > 0.0 && k_percent < 100.0) {
        return Err(VsfError::InvalidPercent(k_percent));
    }
    let size = subset_size(n_total, k_percent);
    if size >= n_total {
        return Err(VsfError::InvalidSubset(format!(
            "{k_percent}% of {n_total} variables leaves none missing"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let picked = index::sample(&mut rng, n_total, size).into_vec();
    SubsetMask::from_unsorted(picked, n_total)
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; `None` when either side has zero variance.
fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Spearman rank correlation between every pair of variables. Correlation with a
/// constant column is 0; the diagonal is always 1.
pub fn spearman_matrix(train: &RawSeries) -> Result<Matrix> {
    if train.len() < 2 {
        return Err(VsfError::TooShort(format!(
            "rank correlation needs at least 2 timesteps, got {}",
            train.len()
        )));
    }
    let n = train.n_vars();
    let ranks: Vec<Vec<f64>> = (0..n)
        .map(|j| average_ranks(&train.values().column(j)))
        .collect();
    let constant: Vec<bool> = (0..n)
        .map(|j| {
            let col = train.values().column(j);
            col.iter().all(|v| *v == col[0])
        })
        .collect();
    if constant.iter().all(|c| *c) {
        return Err(VsfError::DegenerateSeries);
    }
    let mut rho = Matrix::zeros(n, n);
    for i in 0..n {
        rho.set(i, i, 1.0);
        for j in i + 1..n {
            let r = pearson(&ranks[i], &ranks[j]).unwrap_or(0.0);
            rho.set(i, j, r);
            rho.set(j, i, r);
        }
    }
    Ok(rho)
}

/// Symmetric `N x N` distances in `[0, 1]` with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationDistanceMatrix {
    d: Matrix,
}

impl CorrelationDistanceMatrix {
    pub fn new(d: Matrix) -> Result<Self> {
        let n = d.rows();
        if d.cols() != n {
            return Err(VsfError::ShapeMismatch("distance matrix must be square".into()));
        }
        for i in 0..n {
            if d.get(i, i) != 0.0 {
                return Err(VsfError::ShapeMismatch(format!("non-zero diagonal at {i}")));
            }
            for j in 0..n {
                let v = d.get(i, j);
                if !(0.0..=1.0).contains(&v) || v != d.get(j, i) {
                    return Err(VsfError::ShapeMismatch(format!(
                        "entry ({i}, {j}) = {v} is out of range or asymmetric"
                    )));
                }
            }
        }
        Ok(Self { d })
    }

    pub fn len(&self) -> usize {
        self.d.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.d.rows() == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d.get(i, j)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.d
    }
}

/// `1 - |rho|` elementwise.
pub fn correlation_distance(rho: &Matrix) -> CorrelationDistanceMatrix {
    let n = rho.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                // Average the two halves so tiny asymmetries cannot break symmetry.
                let r = 0.5 * (rho.get(i, j).abs() + rho.get(j, i).abs());
                d.set(i, j, (1.0 - r).clamp(0.0, 1.0));
            }
        }
    }
    CorrelationDistanceMatrix { d }
}

/// DBSCAN labels; `None` marks noise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<Option<usize>>,
    pub n_clusters: usize,
}

impl ClusterAssignment {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(cluster))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for l in self.labels.iter().flatten() {
            sizes[*l] += 1;
        }
        sizes
    }

    /// Labels with noise encoded as `-1`.
    pub fn signed_labels(&self) -> Vec<i64> {
        self.labels
            .iter()
            .map(|l| l.map_or(-1, |c| c as i64))
            .collect()
    }
}

/// DBSCAN over a precomputed distance matrix.
///
/// A point is core when at least `min_pts` points (itself included) lie within
/// `eps`. Points are scanned in ascending index order, so a border point joins the
/// first cluster that reaches it.
pub fn dbscan_clusters(d: &CorrelationDistanceMatrix, eps: f64, min_pts: usize) -> ClusterAssignment {
    let n = d.len();
    let neighbors = |i: usize| -> Vec<usize> { (0..n).filter(|&j| d.get(i, j) <= eps).collect() };

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut n_clusters = 0;

    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let seeds = neighbors(i);
        if seeds.len() < min_pts {
            continue;
        }
        let cluster = n_clusters;
        n_clusters += 1;
        labels[i] = Some(cluster);
        let mut queue: VecDeque<usize> = seeds.into_iter().filter(|&j| j != i).collect();
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let reach = neighbors(j);
            if reach.len() >= min_pts {
                queue.extend(reach.into_iter().filter(|&k| !visited[k] || labels[k].is_none()));
            }
        }
    }

    ClusterAssignment { labels, n_clusters }
}

/// Picks `c` distinct clusters uniformly, then `size` variables uniformly from the
/// union of their members. Noise variables are never chosen. When the union holds
/// fewer than `size` variables the whole union is returned.
pub fn sample_correlated_subset(
    clusters: &ClusterAssignment,
    c: usize,
    size: usize,
    rng_seed: u64,
) -> Result<SubsetMask> {
    if clusters.n_clusters == 0 {
        return Err(VsfError::NoClusters);
    }
    if c == 0 || c > clusters.n_clusters {
        return Err(VsfError::InvalidConfig(format!(
            "cannot pick {c} of {} clusters",
            clusters.n_clusters
        )));
    }
    if size == 0 {
        return Err(VsfError::InvalidSubset("requested size is zero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let picked = index::sample(&mut rng, clusters.n_clusters, c).into_vec();
    let mut union: Vec<usize> = picked.iter().flat_map(|&k| clusters.members(k)).collect();
    union.sort_unstable();
    let n_total = clusters.labels.len();
    if union.len() <= size {
        return SubsetMask::new(union, n_total);
    }
    let chosen = index::sample(&mut rng, union.len(), size)
        .into_iter()
        .map(|i| union[i])
        .collect();
    SubsetMask::from_unsorted(chosen, n_total)
}
