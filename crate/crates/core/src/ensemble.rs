//! Weighted ensembles over neighbor-spliced forecasts.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VsfError};
use crate::forecast::{ForecastMatrix, ForecastModel};
use crate::retrieval::{splice_instance, NeighborSet, RetrievalCorpus};
use crate::subset::SubsetMask;
use crate::tensor::{Matrix, Tensor3};

/// How member forecasts are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Plain average.
    Uw,
    /// Softmax of negative retrieval distance.
    Ddw,
    /// Softmax of negative forecast discrepancy between spliced and neighbor inputs.
    Fdw,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Uw => "UW",
            Scheme::Ddw => "DDW",
            Scheme::Fdw => "FDW",
        })
    }
}

impl FromStr for Scheme {
    type Err = VsfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uw" | "uniform" => Ok(Scheme::Uw),
            "ddw" => Ok(Scheme::Ddw),
            "fdw" => Ok(Scheme::Fdw),
            _ => Err(VsfError::InvalidConfig(format!("unknown weighting scheme {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub scheme: Scheme,
    pub tau: f64,
    pub m: usize,
    pub exponent_b: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Fdw,
            tau: 0.1,
            m: 5,
            exponent_b: 0.5,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(VsfError::InvalidConfig(format!("tau must be positive, got {}", self.tau)));
        }
        if self.m == 0 {
            return Err(VsfError::InvalidConfig("m must be at least 1".into()));
        }
        if !(self.exponent_b > 0.0 && self.exponent_b.is_finite()) {
            return Err(VsfError::InvalidExponent(self.exponent_b));
        }
        Ok(())
    }
}

/// Non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w: Vec<f64>,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Member positions by descending weight; ties keep the lower position first.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.w.len()).collect();
        order.sort_by(|&a, &b| self.w[b].total_cmp(&self.w[a]).then(a.cmp(&b)));
        order
    }
}

pub fn uniform_weights(m: usize) -> WeightVector {
    WeightVector {
        w: vec![1.0 / m as f64; m],
    }
}

/// `softmax(-d / tau)`, shifted by the minimum distance for stability.
fn softmax_neg(distances: &[f64], tau: f64) -> WeightVector {
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let exps: Vec<f64> = distances.iter().map(|d| (-(d - min) / tau).exp()).collect();
    let total: f64 = exps.iter().sum();
    WeightVector {
        w: exps.into_iter().map(|e| e / total).collect(),
    }
}

/// Softmax of negative retrieval distances at temperature `tau`.
pub fn ddw_weights(distances: &[f64], tau: f64) -> WeightVector {
    softmax_neg(distances, tau)
}

/// Softmax of negative forecast distances at temperature `tau`.
pub fn fdw_weights(forecast_distances: &[f64], tau: f64) -> WeightVector {
    softmax_neg(forecast_distances, tau)
}

fn subset_rows<'a>(m: &'a ForecastMatrix, subset: &SubsetMask) -> Result<Vec<&'a [f64]>> {
    let rows = m.yhat.rows();
    if rows == subset.n_total() {
        Ok(subset.indices().iter().map(|&v| m.yhat.row(v)).collect())
    } else if rows == subset.len() {
        Ok((0..rows).map(|r| m.yhat.row(r)).collect())
    } else {
        Err(VsfError::ShapeMismatch(format!(
            "forecast has {rows} rows; expected {} or {}",
            subset.n_total(),
            subset.len()
        )))
    }
}

/// Mean over subset rows and the first `q_len` horizons of `|diff| / q`, with the
/// horizon `q` counted from 1.
pub fn forecast_distance(
    y_new: &ForecastMatrix,
    y_nn: &ForecastMatrix,
    subset: &SubsetMask,
    q_len: usize,
) -> Result<f64> {
    if q_len == 0 || y_new.horizon() < q_len || y_nn.horizon() < q_len {
        return Err(VsfError::ShapeMismatch(format!(
            "forecasts have {} and {} horizons, {q_len} requested",
            y_new.horizon(),
            y_nn.horizon()
        )));
    }
    let a = subset_rows(y_new, subset)?;
    let b = subset_rows(y_nn, subset)?;
    let mut sum = 0.0;
    for (ra, rb) in a.iter().zip(&b) {
        for q in 0..q_len {
            sum += ((ra[q] - rb[q]) / (q + 1) as f64).abs();
        }
    }
    Ok(sum / (q_len * subset.len()) as f64)
}

/// Lazily filled full-input forecasts of corpus instances, keyed by corpus index.
///
/// The forecast of a training window does not depend on the test window, so it can
/// be shared by every query against the same model and corpus.
pub struct ForecastCache {
    slots: Vec<OnceLock<Matrix>>,
}

impl ForecastCache {
    pub fn new(corpus_len: usize) -> Self {
        Self {
            slots: (0..corpus_len).map(|_| OnceLock::new()).collect(),
        }
    }

    fn get_or_compute(&self, index: usize, compute: impl FnOnce() -> Result<Matrix>) -> Result<Matrix> {
        if let Some(m) = self.slots[index].get() {
            return Ok(m.clone());
        }
        let m = compute()?;
        Ok(self.slots[index].get_or_init(|| m).clone())
    }
}

/// Everything computed while ensembling one query.
#[derive(Debug, Clone)]
pub struct EnsembleOutcome {
    /// Weighted forecast, `|S| x Q`.
    pub forecast: ForecastMatrix,
    pub weights: WeightVector,
    /// Spliced-input forecast of each member restricted to the subset, `|S| x Q`.
    pub members: Vec<Matrix>,
    /// Forecast distances; only filled for FDW.
    pub forecast_distances: Vec<f64>,
}

/// Splices each neighbor into the query, forecasts, weights and combines.
pub fn ensemble_forecast(
    model: &dyn ForecastModel,
    x_test: &Tensor3,
    subset: &SubsetMask,
    neighbors: &NeighborSet,
    corpus: &RetrievalCorpus,
    cfg: &EnsembleConfig,
) -> Result<ForecastMatrix> {
    ensemble_detailed(model, x_test, subset, neighbors, corpus, cfg, None).map(|o| o.forecast)
}

/// [`ensemble_forecast`] returning members and weights, with an optional cache for
/// neighbor forecasts.
pub fn ensemble_detailed(
    model: &dyn ForecastModel,
    x_test: &Tensor3,
    subset: &SubsetMask,
    neighbors: &NeighborSet,
    corpus: &RetrievalCorpus,
    cfg: &EnsembleConfig,
    cache: Option<&ForecastCache>,
) -> Result<EnsembleOutcome> {
    cfg.validate()?;
    if neighbors.len() != cfg.m {
        return Err(VsfError::NeighborCountMismatch {
            expected: cfg.m,
            actual: neighbors.len(),
        });
    }
    let q = model.horizon();
    let need_nn = cfg.scheme == Scheme::Fdw;

    let per_member: Vec<(Matrix, Option<f64>)> = neighbors
        .entries
        .par_iter()
        .map(|nb| {
            let x_nn = &corpus.get(nb.index).x;
            let spliced = splice_instance(x_test, x_nn, subset)?;
            let y_new = ForecastMatrix {
                yhat: model.predict(&spliced, None)?,
                subset: None,
            };
            let dist = if need_nn {
                let compute = || model.predict(x_nn, None);
                let yhat = match cache {
                    Some(c) => c.get_or_compute(nb.index, compute)?,
                    None => compute()?,
                };
                let y_nn = ForecastMatrix { yhat, subset: None };
                Some(forecast_distance(&y_new, &y_nn, subset, q)?)
            } else {
                None
            };
            Ok((y_new.yhat.select_rows(subset.indices()), dist))
        })
        .collect::<Result<_>>()?;

    let (members, dists): (Vec<Matrix>, Vec<Option<f64>>) = per_member.into_iter().unzip();
    let forecast_distances: Vec<f64> = dists.into_iter().flatten().collect();
    let weights = match cfg.scheme {
        Scheme::Uw => uniform_weights(cfg.m),
        Scheme::Ddw => ddw_weights(&neighbors.distances(), cfg.tau),
        Scheme::Fdw => fdw_weights(&forecast_distances, cfg.tau),
    };

    let mut combined = Matrix::zeros(subset.len(), q);
    for (w, member) in weights.w.iter().zip(&members) {
        for (acc, v) in combined.as_mut_slice().iter_mut().zip(member.as_slice()) {
            *acc += w * v;
        }
    }
    Ok(EnsembleOutcome {
        forecast: ForecastMatrix {
            yhat: combined,
            subset: Some(subset.clone()),
        },
        weights,
        members,
        forecast_distances,
    })
}
