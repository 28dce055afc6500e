use serde::{Deserialize, Serialize};

use crate::error::{Result, VsfError};
use crate::retrieval::{query_distance, Power, RetrievalCorpus};
use crate::dataset::Instance;
use crate::subset::SubsetMask;
use crate::tensor::Matrix;

fn check_step(yhat: &Matrix, y: &Matrix, step_j: usize) -> Result<()> {
    if yhat.rows() != y.rows() || yhat.cols() != y.cols() {
        return Err(VsfError::ShapeMismatch(format!(
            "forecast is {}x{}, target is {}x{}",
            yhat.rows(),
            yhat.cols(),
            y.rows(),
            y.cols()
        )));
    }
    if step_j == 0 || step_j > yhat.cols() || yhat.rows() == 0 {
        return Err(VsfError::ShapeMismatch(format!(
            "step {step_j} outside horizon 1..={}",
            yhat.cols()
        )));
    }
    Ok(())
}

/// Mean absolute error over the rows of two `|S| x Q` matrices at 1-based step `step_j`.
pub fn mae(yhat: &Matrix, y: &Matrix, step_j: usize) -> Result<f64> {
    check_step(yhat, y, step_j)?;
    let c = step_j - 1;
    let sum: f64 = (0..y.rows()).map(|r| (yhat.get(r, c) - y.get(r, c)).abs()).sum();
    Ok(sum / y.rows() as f64)
}

/// Root mean squared error over the rows at 1-based step `step_j`.
pub fn rmse(yhat: &Matrix, y: &Matrix, step_j: usize) -> Result<f64> {
    check_step(yhat, y, step_j)?;
    let c = step_j - 1;
    let sum: f64 = (0..y.rows()).map(|r| (yhat.get(r, c) - y.get(r, c)).powi(2)).sum();
    Ok((sum / y.rows() as f64).sqrt())
}

/// Percentage excess of `e_case` over `e_oracle`.
pub fn delta_vs_oracle(e_case: f64, e_oracle: f64) -> Result<f64> {
    if e_oracle.is_nan() || e_oracle <= 0.0 {
        return Err(VsfError::ZeroOracle);
    }
    Ok((e_case - e_oracle) / e_oracle * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub optimal_rank: usize,
    pub reciprocal: f64,
}

impl RankRecord {
    pub fn new(optimal_rank: usize) -> Self {
        Self {
            optimal_rank,
            reciprocal: 1.0 / optimal_rank as f64,
        }
    }
}

/// 1-based position of `target` in `ranking`.
pub fn rank_of(ranking: &[usize], target: usize) -> Option<usize> {
    ranking.iter().position(|&r| r == target).map(|p| p + 1)
}

/// Where the full-variable nearest neighbor of `window` lands when the corpus is
/// ordered by the subset-only distance. Ties go to the lower corpus index in both
/// orderings.
pub fn optimal_neighbor_rank(
    corpus: &RetrievalCorpus,
    window: &Instance,
    subset: &SubsetMask,
    exponent_b: f64,
) -> Result<RankRecord> {
    let power = Power::new(exponent_b)?;
    if corpus.len() < 2 {
        return Err(VsfError::CorpusTooSmall {
            needed: 2,
            available: corpus.len(),
        });
    }
    if window.x.vars() != corpus.n_vars() || subset.n_total() != corpus.n_vars() {
        return Err(VsfError::ShapeMismatch(
            "window and subset must cover every corpus variable".into(),
        ));
    }
    let all: Vec<usize> = (0..corpus.n_vars()).collect();
    let query = window.x.project(subset)?;
    let mut best = (f64::INFINITY, usize::MAX);
    let mut sub = Vec::with_capacity(corpus.len());
    for (i, inst) in corpus.instances().iter().enumerate() {
        let full = query_distance(&window.x, &inst.x, &all, power);
        if full < best.0 {
            best = (full, i);
        }
        sub.push(query_distance(&query, &inst.x, subset.indices(), power));
    }
    let opt = best.1;
    let key = sub[opt];
    let ahead = sub
        .iter()
        .enumerate()
        .filter(|&(i, &d)| d < key || (d == key && i < opt))
        .count();
    Ok(RankRecord::new(ahead + 1))
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor3;

    fn col(values: &[f64]) -> Matrix {
        Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn mae_examples() {
        let y = col(&[1.0, 2.0]);
        assert_eq!(mae(&y, &y, 1).unwrap(), 0.0);
        assert_eq!(mae(&col(&[2.0, 5.0]), &y, 1).unwrap(), 2.0);
        assert_eq!(mae(&col(&[-1.0, 4.0]), &y, 1).unwrap(), 2.0);
        assert!(mae(&y, &y, 2).is_err());
        assert!(mae(&y, &col(&[1.0]), 1).is_err());
    }

    #[test]
    fn rmse_examples() {
        let y = col(&[0.0, 0.0]);
        assert_eq!(rmse(&y, &y, 1).unwrap(), 0.0);
        assert!((rmse(&col(&[3.0, 4.0]), &y, 1).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmse(&col(&[-2.5]), &col(&[0.0]), 1).unwrap(), 2.5);
    }

    #[test]
    fn steps_are_one_based() {
        let yhat = Matrix::from_rows(&[vec![0.0, 10.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(mae(&yhat, &y, 1).unwrap(), 0.0);
        assert_eq!(mae(&yhat, &y, 2).unwrap(), 10.0);
    }

    #[test]
    fn delta_examples() {
        assert!((delta_vs_oracle(4.54, 3.49).unwrap() - 30.08).abs() < 0.01);
        assert_eq!(delta_vs_oracle(11.45, 11.45).unwrap(), 0.0);
        assert!((delta_vs_oracle(18.57, 11.45).unwrap() - 62.18).abs() < 0.01);
        assert!(matches!(delta_vs_oracle(1.0, 0.0), Err(VsfError::ZeroOracle)));
    }

    fn inst(values: &[f64], vars: usize) -> Instance {
        Instance {
            x: Tensor3::from_vec(values.len() / vars, vars, 1, values.to_vec()).unwrap(),
            y: Matrix::zeros(1, vars),
            origin_index: 0,
        }
    }

    #[test]
    fn optimal_rank_full_subset_is_first() {
        let corpus = RetrievalCorpus::new(vec![inst(&[0.0, 0.0], 2), inst(&[1.0, 1.0], 2), inst(&[5.0, 5.0], 2)])
            .unwrap();
        let r = optimal_neighbor_rank(&corpus, &inst(&[0.9, 1.2], 2), &SubsetMask::full(2), 0.5).unwrap();
        assert_eq!(r, RankRecord::new(1));
    }

    #[test]
    fn optimal_rank_under_biased_retrieval() {
        // Instance 0 matches the window on variable 0 only; instance 1 is close on both.
        let corpus = RetrievalCorpus::new(vec![inst(&[1.0, 50.0], 2), inst(&[1.3, 2.1], 2)]).unwrap();
        let window = inst(&[1.0, 2.0], 2);
        let subset = SubsetMask::new(vec![0], 2).unwrap();
        let r = optimal_neighbor_rank(&corpus, &window, &subset, 0.5).unwrap();
        assert_eq!(r.optimal_rank, 2);
        assert_eq!(r.reciprocal, 0.5);
    }

    #[test]
    fn mean_std_is_population() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
