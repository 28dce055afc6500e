//! Repeated-draw evaluation of the partial, oracle and ensemble settings.

use rayon::prelude::*;

use super::metrics::{optimal_neighbor_rank, rank_of};
use super::report::{
    aggregate_rows, deltas_from, EvalReport, HorizonRow, RunRow, ScalableStats, Setting,
};
use crate::config::{Engine, RunConfig, SubsetMode};
use crate::dataset::{Instance, Normalizer, PreparedData};
use crate::ensemble::{ensemble_detailed, EnsembleConfig, ForecastCache, Scheme};
use crate::error::{Result, VsfError};
use crate::eval::metrics::delta_vs_oracle;
use crate::forecast::ForecastModel;
use crate::retrieval::{top_m_neighbors, NeighborSet, RetrievalCorpus};
use crate::scalable::{build_query_table, calibrate_thresholds, iterative_retrieve, QueryTable, ThresholdVector};
use crate::subset::{
    correlation_distance, dbscan_clusters, sample_correlated_subset, sample_random_subset,
    spearman_matrix, subset_size, ClusterAssignment, SubsetMask,
};
use crate::tensor::Matrix;

/// Query table plus calibrated thresholds for the scalable engine.
pub struct ScalableIndex {
    pub table: QueryTable,
    pub thresholds: ThresholdVector,
}

/// Everything shared by the draws of one experiment.
pub struct Experiment<'a> {
    cfg: RunConfig,
    data: &'a PreparedData,
    model: &'a dyn ForecastModel,
    corpus: RetrievalCorpus,
    cache: ForecastCache,
    /// Full-input forecast of every test window, `N x Q`.
    oracle_full: Vec<Matrix>,
    clusters: Option<ClusterAssignment>,
    index: Option<ScalableIndex>,
}

/// Rounds used, candidate count and whether the set matched direct retrieval.
type ScalableTrace = (usize, usize, bool);

/// Residual accumulators per horizon step for one setting.
#[derive(Debug, Clone)]
struct StepSums {
    abs: Vec<f64>,
    sq: Vec<f64>,
    count: usize,
}

impl StepSums {
    fn new(q: usize) -> Self {
        Self {
            abs: vec![0.0; q],
            sq: vec![0.0; q],
            count: 0,
        }
    }

    /// `forecast` is `|S| x Q`; targets are read from the `Q x N` window target.
    fn add(&mut self, forecast: &Matrix, target: &Matrix, subset: &SubsetMask, norm: &Normalizer) {
        for (row, &var) in subset.indices().iter().enumerate() {
            for q in 0..self.abs.len() {
                let r = norm.inverse(forecast.get(row, q)) - norm.inverse(target.get(q, var));
                self.abs[q] += r.abs();
                self.sq[q] += r * r;
            }
        }
        self.count += subset.len();
    }

    fn merge(&mut self, other: &StepSums) {
        for q in 0..self.abs.len() {
            self.abs[q] += other.abs[q];
            self.sq[q] += other.sq[q];
        }
        self.count += other.count;
    }

    fn mae(&self, step: usize) -> f64 {
        self.abs[step - 1] / self.count as f64
    }

    fn rmse(&self, step: usize) -> f64 {
        (self.sq[step - 1] / self.count as f64).sqrt()
    }
}

#[derive(Debug, Clone)]
struct WindowOutcome {
    partial: StepSums,
    oracle: StepSums,
    ensemble: Option<StepSums>,
    ideal_rr: Option<f64>,
    optimal_rr: Option<f64>,
    rounds: Option<usize>,
    candidates: Option<usize>,
    matched: Option<bool>,
}

/// Per-draw summary.
#[derive(Debug, Clone)]
pub struct DrawOutcome {
    pub seed: u64,
    pub subset: SubsetMask,
    partial: StepSums,
    oracle: StepSums,
    ensemble: Option<StepSums>,
    pub ideal_mrr: Option<f64>,
    pub optimal_rank_mrr: Option<f64>,
    pub mean_rounds: Option<f64>,
    pub mean_candidates: Option<f64>,
    pub match_rate: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl<'a> Experiment<'a> {
    /// Builds the corpus, oracle forecasts, clusters and (for the scalable engine)
    /// the query table. `model` must already be fitted.
    pub fn new(cfg: &RunConfig, data: &'a PreparedData, model: &'a dyn ForecastModel) -> Result<Self> {
        cfg.validate()?;
        if model.horizon() != cfg.windowing.q {
            return Err(VsfError::InvalidConfig(format!(
                "model horizon {} differs from q = {}",
                model.horizon(),
                cfg.windowing.q
            )));
        }
        if data.test_windows.is_empty() {
            return Err(VsfError::TooShort("no test windows".into()));
        }
        let corpus = RetrievalCorpus::from_windows(&data.train_windows, cfg.retrieval.fraction)?;
        if cfg.ensemble.enabled && corpus.len() < cfg.retrieval.m {
            return Err(VsfError::CorpusTooSmall {
                needed: cfg.retrieval.m,
                available: corpus.len(),
            });
        }
        let oracle_full = data
            .test_windows
            .par_iter()
            .map(|w| model.predict(&w.x, None))
            .collect::<Result<Vec<_>>>()?;
        let clusters = match cfg.subset.mode {
            SubsetMode::Random => None,
            SubsetMode::Correlated => Some(cluster_variables(data, cfg.subset.eps, cfg.subset.min_pts)?),
        };
        let index = match (cfg.ensemble.enabled, cfg.retrieval.engine) {
            (true, Engine::Scalable) => Some(ScalableIndex {
                table: build_query_table(&corpus),
                thresholds: calibrate_thresholds(
                    &corpus,
                    &data.val_windows,
                    cfg.index.k_hat,
                    cfg.retrieval.exponent_b,
                )?,
            }),
            _ => None,
        };
        Ok(Self {
            cache: ForecastCache::new(corpus.len()),
            cfg: cfg.clone(),
            data,
            model,
            corpus,
            oracle_full,
            clusters,
            index,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn corpus(&self) -> &RetrievalCorpus {
        &self.corpus
    }

    pub fn clusters(&self) -> Option<&ClusterAssignment> {
        self.clusters.as_ref()
    }

    pub fn scalable_index(&self) -> Option<&ScalableIndex> {
        self.index.as_ref()
    }

    pub fn draw_seed(&self, draw: usize) -> u64 {
        self.cfg.subset.seed.wrapping_add(draw as u64)
    }

    /// The subset evaluated by the draw with this seed.
    pub fn subset_for_seed(&self, seed: u64) -> Result<SubsetMask> {
        let n = self.data.n_vars;
        match &self.clusters {
            None => sample_random_subset(n, self.cfg.subset.k_percent, seed),
            Some(clusters) => {
                let c = self.cfg.subset.c.min(clusters.n_clusters.max(1));
                sample_correlated_subset(clusters, c, subset_size(n, self.cfg.subset.k_percent), seed)
            }
        }
    }

    fn retrieve(&self, query: &crate::tensor::Tensor3, subset: &SubsetMask) -> Result<(NeighborSet, Option<ScalableTrace>)> {
        let r = &self.cfg.retrieval;
        match &self.index {
            None => Ok((top_m_neighbors(&self.corpus, query, subset, r.exponent_b, r.m)?, None)),
            Some(index) => {
                let found = iterative_retrieve(
                    &index.table,
                    &self.corpus,
                    query,
                    subset,
                    &index.thresholds,
                    self.cfg.loosening(),
                    r.m,
                    r.exponent_b,
                )?;
                let matched = if r.verify_direct {
                    let direct = top_m_neighbors(&self.corpus, query, subset, r.exponent_b, r.m)?;
                    let mut a = direct.indices();
                    let mut b = found.neighbors.indices();
                    a.sort_unstable();
                    b.sort_unstable();
                    a == b
                } else {
                    false
                };
                Ok((found.neighbors, Some((found.rounds_used, found.candidates, matched))))
            }
        }
    }

    fn evaluate_window(&self, w: usize, window: &Instance, subset: &SubsetMask) -> Result<WindowOutcome> {
        let q = self.cfg.windowing.q;
        let norm = &self.data.normalizer;
        let query = window.x.project(subset)?;

        let mut oracle = StepSums::new(q);
        oracle.add(&self.oracle_full[w].select_rows(subset.indices()), &window.y, subset, norm);

        let mut partial = StepSums::new(q);
        let partial_fc = self.model.predict(&query, Some(subset))?;
        partial.add(&partial_fc, &window.y, subset, norm);

        let mut out = WindowOutcome {
            partial,
            oracle,
            ensemble: None,
            ideal_rr: None,
            optimal_rr: None,
            rounds: None,
            candidates: None,
            matched: None,
        };
        if self.cfg.analysis.optimal_rank {
            let rec = optimal_neighbor_rank(&self.corpus, window, subset, self.cfg.retrieval.exponent_b)?;
            out.optimal_rr = Some(rec.reciprocal);
        }
        if !self.cfg.ensemble.enabled {
            return Ok(out);
        }

        let (neighbors, scalable) = self.retrieve(&query, subset)?;
        if let Some((rounds, candidates, matched)) = scalable {
            out.rounds = Some(rounds);
            out.candidates = Some(candidates);
            out.matched = self.cfg.retrieval.verify_direct.then_some(matched);
        }
        let ecfg = EnsembleConfig {
            m: neighbors.len(),
            ..self.cfg.ensemble_config()
        };
        let outcome = ensemble_detailed(self.model, &query, subset, &neighbors, &self.corpus, &ecfg, Some(&self.cache))?;
        let mut ens = StepSums::new(q);
        ens.add(&outcome.forecast.yhat, &window.y, subset, norm);
        out.ensemble = Some(ens);

        if ecfg.scheme != Scheme::Uw {
            let ideal = ideal_member(&outcome.members, &window.y, subset);
            let rank = rank_of(&outcome.weights.ranking(), ideal).expect("ideal member is ranked");
            out.ideal_rr = Some(1.0 / rank as f64);
        }
        Ok(out)
    }

    /// Evaluates every test window under one subset draw.
    pub fn run_draw(&self, seed: u64) -> Result<DrawOutcome> {
        let subset = self.subset_for_seed(seed)?;
        let windows: Vec<WindowOutcome> = self
            .data
            .test_windows
            .par_iter()
            .enumerate()
            .map(|(w, window)| self.evaluate_window(w, window, &subset))
            .collect::<Result<_>>()?;

        let q = self.cfg.windowing.q;
        let mut partial = StepSums::new(q);
        let mut oracle = StepSums::new(q);
        let mut ensemble = self.cfg.ensemble.enabled.then(|| StepSums::new(q));
        for w in &windows {
            partial.merge(&w.partial);
            oracle.merge(&w.oracle);
            if let (Some(acc), Some(e)) = (ensemble.as_mut(), w.ensemble.as_ref()) {
                acc.merge(e);
            }
        }
        Ok(DrawOutcome {
            seed,
            subset,
            partial,
            oracle,
            ensemble,
            ideal_mrr: mean_of(windows.iter().filter_map(|w| w.ideal_rr)),
            optimal_rank_mrr: mean_of(windows.iter().filter_map(|w| w.optimal_rr)),
            mean_rounds: mean_of(windows.iter().filter_map(|w| w.rounds.map(|r| r as f64))),
            mean_candidates: mean_of(windows.iter().filter_map(|w| w.candidates.map(|c| c as f64))),
            match_rate: mean_of(windows.iter().filter_map(|w| w.matched.map(|m| f64::from(u8::from(m))))),
        })
    }

    /// Runs every configured draw and assembles the report. Draws run concurrently
    /// and are merged in seed order.
    pub fn run(&self) -> Result<EvalReport> {
        let draws: Vec<DrawOutcome> = (0..self.cfg.subset.draws)
            .into_par_iter()
            .map(|d| self.run_draw(self.draw_seed(d)))
            .collect::<Result<_>>()?;
        Ok(self.report(&draws))
    }

    pub fn report(&self, draws: &[DrawOutcome]) -> EvalReport {
        let step = self.cfg.horizon_step();
        let q = self.cfg.windowing.q;
        let scheme = self.cfg.ensemble.enabled.then_some(self.cfg.ensemble.scheme);
        let mut per_run = Vec::with_capacity(draws.len() * 3);
        for d in draws {
            let mut push = |setting, sums: &StepSums, scheme| {
                per_run.push(RunRow {
                    seed: d.seed,
                    setting,
                    scheme,
                    mae: sums.mae(step),
                    rmse: sums.rmse(step),
                    horizon_step: step,
                })
            };
            push(Setting::Partial, &d.partial, None);
            push(Setting::Oracle, &d.oracle, None);
            if let Some(e) = &d.ensemble {
                push(Setting::Ensemble, e, scheme);
            }
        }
        let aggregate = aggregate_rows(&per_run);
        let deltas = deltas_from(&aggregate);

        let horizon_curve = (1..=q)
            .map(|j| {
                let partial_mae = mean_of(draws.iter().map(|d| d.partial.mae(j))).unwrap_or(f64::NAN);
                let oracle_mae = mean_of(draws.iter().map(|d| d.oracle.mae(j))).unwrap_or(f64::NAN);
                let ensemble_mae = mean_of(draws.iter().filter_map(|d| d.ensemble.as_ref().map(|e| e.mae(j))));
                HorizonRow {
                    step: j,
                    partial_mae,
                    oracle_mae,
                    ensemble_mae,
                    delta_partial: delta_vs_oracle(partial_mae, oracle_mae).ok(),
                    delta_ensemble: ensemble_mae.and_then(|e| delta_vs_oracle(e, oracle_mae).ok()),
                }
            })
            .collect();

        let scalable = self.index.as_ref().map(|_| ScalableStats {
            mean_rounds: mean_of(draws.iter().filter_map(|d| d.mean_rounds)).unwrap_or(f64::NAN),
            mean_candidates: mean_of(draws.iter().filter_map(|d| d.mean_candidates)).unwrap_or(f64::NAN),
            match_rate: mean_of(draws.iter().filter_map(|d| d.match_rate)),
        });

        EvalReport {
            model: self.model.name().to_owned(),
            engine: self.cfg.retrieval.engine.to_string(),
            scheme,
            subset_mode: match self.cfg.subset.mode {
                SubsetMode::Random => "random".into(),
                SubsetMode::Correlated => format!("correlated(c={})", self.cfg.subset.c),
            },
            k_percent: self.cfg.subset.k_percent,
            n_vars: self.data.n_vars,
            test_windows: self.data.test_windows.len(),
            horizon_step: step,
            draws: draws.len(),
            std_estimator: "population".into(),
            per_run,
            aggregate,
            deltas,
            horizon_curve,
            ideal_mrr: mean_of(draws.iter().filter_map(|d| d.ideal_mrr)),
            optimal_rank_mrr: mean_of(draws.iter().filter_map(|d| d.optimal_rank_mrr)),
            scalable,
        }
    }
}

/// Position of the member with the least mean absolute error against the target
/// over all subset rows and horizons; ties keep the earlier member.
pub fn ideal_member(members: &[Matrix], target: &Matrix, subset: &SubsetMask) -> usize {
    let err = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for (row, &var) in subset.indices().iter().enumerate() {
            for q in 0..m.cols() {
                s += (m.get(row, q) - target.get(q, var)).abs();
            }
        }
        s
    };
    let mut best = (f64::INFINITY, 0);
    for (i, m) in members.iter().enumerate() {
        let e = err(m);
        if e < best.0 {
            best = (e, i);
        }
    }
    best.1
}

/// Spearman correlation, `1 - |rho|` distances and DBSCAN over the normalized
/// training split.
pub fn cluster_variables(data: &PreparedData, eps: f64, min_pts: usize) -> Result<ClusterAssignment> {
    let rho = spearman_matrix(&data.train)?;
    Ok(dbscan_clusters(&correlation_distance(&rho), eps, min_pts))
}

/// Evaluates the configured experiment with `model` already fitted.
pub fn run_experiment(cfg: &RunConfig, data: &PreparedData, model: &dyn ForecastModel) -> Result<EvalReport> {
    Experiment::new(cfg, data, model)?.run()
}

/// Mean reciprocal rank of the lowest-error neighbor under `scheme`'s weights,
/// averaged over test windows and draws.
pub fn ideal_neighbor_mrr(cfg: &RunConfig, data: &PreparedData, model: &dyn ForecastModel, scheme: Scheme) -> Result<f64> {
    if scheme == Scheme::Uw {
        return Err(VsfError::UnsupportedScheme(scheme.to_string()));
    }
    let mut cfg = cfg.clone();
    cfg.ensemble.enabled = true;
    cfg.ensemble.scheme = scheme;
    let report = run_experiment(&cfg, data, model)?;
    report
        .ideal_mrr
        .ok_or_else(|| VsfError::UnsupportedScheme(scheme.to_string()))
}

/// Mean reciprocal rank of `target` positions, 1-based ranks.
pub fn mean_reciprocal_rank(ranks: &[usize]) -> f64 {
    ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64
}
