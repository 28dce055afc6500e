//! Exact subset-restricted nearest-neighbor retrieval and spliced instances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Instance;
use crate::error::{Result, VsfError};
use crate::subset::SubsetMask;
use crate::tensor::Tensor3;

/// Full training windows available for retrieval.
#[derive(Debug, Clone)]
pub struct RetrievalCorpus {
    instances: Vec<Instance>,
}

impl RetrievalCorpus {
    pub fn new(instances: Vec<Instance>) -> Result<Self> {
        let first = instances.first().ok_or(VsfError::EmptyInput)?;
        let (p, n, d) = (first.x.steps(), first.x.vars(), first.x.features());
        if instances
            .iter()
            .any(|i| i.x.steps() != p || i.x.vars() != n || i.x.features() != d)
        {
            return Err(VsfError::ShapeMismatch(
                "corpus instances must share P, N and D".into(),
            ));
        }
        Ok(Self { instances })
    }

    /// Keeps the first `round(fraction * len)` windows (at least one).
    pub fn from_windows(windows: &[Instance], fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(VsfError::InvalidConfig(format!(
                "retrieval fraction must lie in (0, 1], got {fraction}"
            )));
        }
        let count = ((windows.len() as f64 * fraction).round() as usize).clamp(1, windows.len().max(1));
        Self::new(windows[..count.min(windows.len())].to_vec())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn get(&self, i: usize) -> &Instance {
        &self.instances[i]
    }

    pub fn steps(&self) -> usize {
        self.instances[0].x.steps()
    }

    pub fn n_vars(&self) -> usize {
        self.instances[0].x.vars()
    }

    pub fn features(&self) -> usize {
        self.instances[0].x.features()
    }
}

/// `|a - b|^b` with fast paths for the common exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Power {
    Half,
    One,
    Two,
    Other(f64),
}

impl Power {
    pub(crate) fn new(exponent: f64) -> Result<Self> {
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(VsfError::InvalidExponent(exponent));
        }
        Ok(if exponent == 0.5 {
            Power::Half
        } else if exponent == 1.0 {
            Power::One
        } else if exponent == 2.0 {
            Power::Two
        } else {
            Power::Other(exponent)
        })
    }

    #[inline]
    pub(crate) fn apply(self, diff: f64) -> f64 {
        let a = diff.abs();
        match self {
            Power::Half => a.sqrt(),
            Power::One => a,
            Power::Two => a * a,
            Power::Other(b) => a.powf(b),
        }
    }
}

/// Distance between a subset-shaped query (`P x |S| x D`) and the subset rows of a
/// full tensor (`P x N x D`).
pub(crate) fn query_distance(query: &Tensor3, full: &Tensor3, subset: &[usize], power: Power) -> f64 {
    let (p, d) = (query.steps(), query.features());
    let mut sum = 0.0;
    for step in 0..p {
        for (row, &var) in subset.iter().enumerate() {
            let a = query.cell(step, row);
            let b = full.cell(step, var);
            for k in 0..d {
                sum += power.apply(a[k] - b[k]);
            }
        }
    }
    sum / (p * subset.len() * d) as f64
}

fn check_query(query: &Tensor3, corpus_p: usize, corpus_d: usize, subset: &SubsetMask) -> Result<()> {
    if query.steps() != corpus_p || query.features() != corpus_d || query.vars() != subset.len() {
        return Err(VsfError::ShapeMismatch(format!(
            "query is {}x{}x{}, expected {}x{}x{}",
            query.steps(),
            query.vars(),
            query.features(),
            corpus_p,
            subset.len(),
            corpus_d
        )));
    }
    Ok(())
}

/// Mean of `|a - b|^exponent` over every step, subset variable and feature.
pub fn subset_distance(a: &Tensor3, b: &Tensor3, subset: &SubsetMask, exponent_b: f64) -> Result<f64> {
    let power = Power::new(exponent_b)?;
    if a.steps() != b.steps() || a.features() != b.features() || a.vars() != b.vars() {
        return Err(VsfError::ShapeMismatch("tensors differ in shape".into()));
    }
    if subset.n_total() != a.vars() {
        return Err(VsfError::ShapeMismatch(format!(
            "subset over {} variables, tensors have {}",
            subset.n_total(),
            a.vars()
        )));
    }
    let (p, d) = (a.steps(), a.features());
    let mut sum = 0.0;
    for step in 0..p {
        for &var in subset.indices() {
            for (x, y) in a.cell(step, var).iter().zip(b.cell(step, var)) {
                sum += power.apply(x - y);
            }
        }
    }
    Ok(sum / (p * subset.len() * d) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Neighbors in ascending distance order, ties by ascending corpus index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NeighborSet {
    pub entries: Vec<Neighbor>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.index).collect()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.distance).collect()
    }
}

#[inline]
pub(crate) fn neighbor_order(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.index.cmp(&b.index))
}

/// Keeps the `m` best of `scored`, sorted.
pub(crate) fn select_top(mut scored: Vec<Neighbor>, m: usize) -> NeighborSet {
    if m < scored.len() {
        scored.select_nth_unstable_by(m - 1, neighbor_order);
        scored.truncate(m);
    }
    scored.sort_by(neighbor_order);
    NeighborSet { entries: scored }
}

/// The `m` corpus instances closest to `x_test` on the subset variables.
///
/// Distances are evaluated in parallel; the result order only depends on the
/// distances and corpus indices.
pub fn top_m_neighbors(
    corpus: &RetrievalCorpus,
    x_test: &Tensor3,
    subset: &SubsetMask,
    exponent_b: f64,
    m: usize,
) -> Result<NeighborSet> {
    let power = Power::new(exponent_b)?;
    if m == 0 || corpus.len() < m {
        return Err(VsfError::CorpusTooSmall {
            needed: m.max(1),
            available: corpus.len(),
        });
    }
    if subset.n_total() != corpus.n_vars() {
        return Err(VsfError::ShapeMismatch(format!(
            "subset over {} variables, corpus has {}",
            subset.n_total(),
            corpus.n_vars()
        )));
    }
    check_query(x_test, corpus.steps(), corpus.features(), subset)?;
    let scored: Vec<Neighbor> = corpus
        .instances()
        .par_iter()
        .enumerate()
        .map(|(index, inst)| Neighbor {
            index,
            distance: query_distance(x_test, &inst.x, subset.indices(), power),
        })
        .collect();
    Ok(select_top(scored, m))
}

/// Full-variable tensor whose subset rows come from `x_test` and whose other rows
/// come from `x_nn`.
pub fn splice_instance(x_test: &Tensor3, x_nn: &Tensor3, subset: &SubsetMask) -> Result<Tensor3> {
    if subset.n_total() != x_nn.vars() {
        return Err(VsfError::ShapeMismatch(format!(
            "subset over {} variables, neighbor has {}",
            subset.n_total(),
            x_nn.vars()
        )));
    }
    check_query(x_test, x_nn.steps(), x_nn.features(), subset)?;
    let mut out = x_nn.clone();
    for p in 0..x_test.steps() {
        for (row, &var) in subset.indices().iter().enumerate() {
            for (d, v) in x_test.cell(p, row).iter().enumerate() {
                out.set(p, var, d, *v);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    fn t(steps: usize, vars: usize, data: &[f64]) -> Tensor3 {
        Tensor3::from_vec(steps, vars, 1, data.to_vec()).unwrap()
    }

    fn corpus_of(tensors: Vec<Tensor3>) -> RetrievalCorpus {
        RetrievalCorpus::new(
            tensors
                .into_iter()
                .enumerate()
                .map(|(i, x)| Instance {
                    y: Matrix::zeros(1, x.vars()),
                    x,
                    origin_index: i,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn distance_examples() {
        let full = SubsetMask::full(2);
        let a = t(1, 2, &[1.0, 2.0]);
        let b = t(1, 2, &[2.0, 4.0]);
        assert_eq!(subset_distance(&a, &a, &full, 0.5).unwrap(), 0.0);
        let d = subset_distance(&a, &b, &full, 0.5).unwrap();
        assert!((d - (1.0 + 2f64.sqrt()) / 2.0).abs() < 1e-12);
        let d = subset_distance(&t(1, 2, &[0.0, 0.0]), &t(1, 2, &[3.0, 5.0]), &full, 1.0).unwrap();
        assert_eq!(d, 4.0);
        // Variables outside the subset are ignored.
        let one = SubsetMask::new(vec![1], 2).unwrap();
        assert_eq!(subset_distance(&a, &b, &one, 1.0).unwrap(), 2.0);
        // Generic exponent path agrees with the closed form.
        let d = subset_distance(&a, &b, &full, 1.5).unwrap();
        assert!((d - (1.0 + 2f64.powf(1.5)) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn distance_errors() {
        let a = t(1, 2, &[1.0, 2.0]);
        let full = SubsetMask::full(2);
        assert!(matches!(
            subset_distance(&a, &a, &full, 0.0),
            Err(VsfError::InvalidExponent(_))
        ));
        assert!(matches!(
            subset_distance(&a, &t(2, 1, &[1.0, 2.0]), &full, 1.0),
            Err(VsfError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn exact_match_ranks_first() {
        let corpus = corpus_of(vec![
            t(2, 3, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]),
            t(2, 3, &[9.0, 1.5, 9.0, 9.0, 4.5, 9.0]),
            t(2, 3, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]),
        ]);
        let subset = SubsetMask::new(vec![1], 3).unwrap();
        let query = corpus.get(1).x.project(&subset).unwrap();
        let nn = top_m_neighbors(&corpus, &query, &subset, 0.5, 3).unwrap();
        assert_eq!(nn.entries[0], Neighbor { index: 1, distance: 0.0 });
        assert_eq!(nn.len(), 3);
        assert!(nn.entries.windows(2).all(|w| w[0].distance <= w[1].distance));
    }

    #[test]
    fn ties_break_by_index() {
        let corpus = corpus_of(vec![t(1, 1, &[1.0]), t(1, 1, &[-1.0]), t(1, 1, &[1.0])]);
        let nn = top_m_neighbors(&corpus, &t(1, 1, &[0.0]), &SubsetMask::full(1), 1.0, 3).unwrap();
        assert_eq!(nn.indices(), [0, 1, 2]);
    }

    #[test]
    fn corpus_too_small() {
        let corpus = corpus_of(vec![t(1, 1, &[1.0])]);
        assert!(matches!(
            top_m_neighbors(&corpus, &t(1, 1, &[0.0]), &SubsetMask::full(1), 1.0, 2),
            Err(VsfError::CorpusTooSmall { needed: 2, available: 1 })
        ));
    }

    #[test]
    fn splice_examples() {
        let subset = SubsetMask::new(vec![1], 3).unwrap();
        let out = splice_instance(&t(1, 1, &[9.0]), &t(1, 3, &[1.0, 2.0, 3.0]), &subset).unwrap();
        assert_eq!(out.as_slice(), [1.0, 9.0, 3.0]);

        let full = SubsetMask::full(3);
        let test = t(1, 3, &[4.0, 5.0, 6.0]);
        assert_eq!(splice_instance(&test, &t(1, 3, &[0.0; 3]), &full).unwrap(), test);

        let nn = t(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let s = SubsetMask::new(vec![0, 2], 3).unwrap();
        let consistent = nn.project(&s).unwrap();
        assert_eq!(splice_instance(&consistent, &nn, &s).unwrap(), nn);
    }

    #[test]
    fn corpus_fraction_is_a_prefix() {
        let corpus = corpus_of((0..10).map(|i| t(1, 1, &[i as f64])).collect());
        let half = RetrievalCorpus::from_windows(corpus.instances(), 0.5).unwrap();
        assert_eq!(half.len(), 5);
        assert_eq!(half.get(4).origin_index, 4);
        assert!(RetrievalCorpus::from_windows(corpus.instances(), 0.0).is_err());
    }
}
