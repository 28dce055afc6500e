//! Hyperparameter grids over the retrieval exponent, temperature and neighbor count.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::report::Setting;
use super::runner::Experiment;
use crate::config::RunConfig;
use crate::dataset::PreparedData;
use crate::error::{Result, VsfError};
use crate::forecast::ForecastModel;

/// Values to sweep; an empty axis keeps the configured value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub exponent_b: Vec<f64>,
    pub tau: Vec<f64>,
    pub m: Vec<usize>,
}

impl SweepGrid {
    /// Cells in `b`-major, then `tau`, then `m` order.
    pub fn cells(&self, cfg: &RunConfig) -> Vec<(f64, f64, usize)> {
        let or = |v: &[f64], d: f64| if v.is_empty() { vec![d] } else { v.to_vec() };
        let bs = or(&self.exponent_b, cfg.retrieval.exponent_b);
        let taus = or(&self.tau, cfg.ensemble.tau);
        let ms = if self.m.is_empty() { vec![cfg.retrieval.m] } else { self.m.clone() };
        let mut out = Vec::with_capacity(bs.len() * taus.len() * ms.len());
        for &b in &bs {
            for &tau in &taus {
                for &m in &ms {
                    out.push((b, tau, m));
                }
            }
        }
        out
    }
}

/// Aggregate errors of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub exponent_b: f64,
    pub tau: f64,
    pub m: usize,
    pub partial_mae: f64,
    pub oracle_mae: f64,
    pub ensemble_mae: f64,
    pub ensemble_rmse: f64,
    pub delta_partial_mae: Option<f64>,
    pub delta_ensemble_mae: Option<f64>,
    pub delta_ensemble_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub model: String,
    pub draws: usize,
    pub horizon_step: usize,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: &str =
    "exponent_b,tau,m,partial_mae,oracle_mae,ensemble_mae,ensemble_rmse,delta_partial_mae,delta_ensemble_mae,delta_ensemble_rmse";

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.exponent_b,
                r.tau,
                r.m,
                r.partial_mae,
                r.oracle_mae,
                r.ensemble_mae,
                r.ensemble_rmse,
                opt(r.delta_partial_mae),
                opt(r.delta_ensemble_mae),
                opt(r.delta_ensemble_rmse)
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model={} draws={} step={}", self.model, self.draws, self.horizon_step);
        let _ = writeln!(
            out,
            "{:>6} {:>8} {:>4} {:>10} {:>10} {:>10} {:>10} {:>12}",
            "b", "tau", "m", "partial", "oracle", "ensemble", "d_partial", "d_ensemble"
        );
        let pct = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |v| format!("{v:.2} %"));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>6} {:>8} {:>4} {:>10.4} {:>10.4} {:>10.4} {:>10} {:>12}",
                r.exponent_b,
                r.tau,
                r.m,
                r.partial_mae,
                r.oracle_mae,
                r.ensemble_mae,
                pct(r.delta_partial_mae),
                pct(r.delta_ensemble_mae)
            );
        }
        out
    }
}

/// Runs the configured experiment once per grid cell with the ensemble enabled.
/// `model` is fitted once by the caller and shared by every cell.
pub fn run_sweep(cfg: &RunConfig, data: &PreparedData, model: &dyn ForecastModel, grid: &SweepGrid) -> Result<SweepReport> {
    let mut rows = Vec::new();
    for (b, tau, m) in grid.cells(cfg) {
        let mut cell = cfg.clone();
        cell.ensemble.enabled = true;
        cell.retrieval.exponent_b = b;
        cell.ensemble.tau = tau;
        cell.retrieval.m = m;
        let report = Experiment::new(&cell, data, model)?.run()?;
        let get = |s: Setting| {
            report
                .aggregate_for(s)
                .cloned()
                .ok_or_else(|| VsfError::InvalidConfig(format!("sweep cell produced no {} rows", s.as_str())))
        };
        let (partial, oracle, ensemble) = (get(Setting::Partial)?, get(Setting::Oracle)?, get(Setting::Ensemble)?);
        rows.push(SweepRow {
            exponent_b: b,
            tau,
            m,
            partial_mae: partial.mae_mean,
            oracle_mae: oracle.mae_mean,
            ensemble_mae: ensemble.mae_mean,
            ensemble_rmse: ensemble.rmse_mean,
            delta_partial_mae: report.deltas.partial_mae,
            delta_ensemble_mae: report.deltas.ensemble_mae,
            delta_ensemble_rmse: report.deltas.ensemble_rmse,
        });
    }
    Ok(SweepReport {
        model: model.name().to_owned(),
        draws: cfg.subset.draws,
        horizon_step: cfg.horizon_step(),
        rows,
    })
}
