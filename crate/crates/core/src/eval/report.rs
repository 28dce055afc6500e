use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{delta_vs_oracle, mean_std};
use crate::ensemble::Scheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Partial,
    Oracle,
    Ensemble,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Partial => "partial",
            Setting::Oracle => "oracle",
            Setting::Ensemble => "ensemble",
        }
    }
}

/// One setting of one subset draw at the reported horizon step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub seed: u64,
    pub setting: Setting,
    pub scheme: Option<Scheme>,
    pub mae: f64,
    pub rmse: f64,
    pub horizon_step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub setting: Setting,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
}

/// Percentage gaps to the oracle, computed from aggregate means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Deltas {
    pub partial_mae: Option<f64>,
    pub partial_rmse: Option<f64>,
    pub ensemble_mae: Option<f64>,
    pub ensemble_rmse: Option<f64>,
}

/// Mean MAE per setting at one horizon step, with gaps to the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub step: usize,
    pub partial_mae: f64,
    pub oracle_mae: f64,
    pub ensemble_mae: Option<f64>,
    pub delta_partial: Option<f64>,
    pub delta_ensemble: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalableStats {
    pub mean_rounds: f64,
    pub mean_candidates: f64,
    /// Fraction of queries whose neighbor set equals direct retrieval.
    pub match_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub engine: String,
    pub scheme: Option<Scheme>,
    pub subset_mode: String,
    pub k_percent: f64,
    pub n_vars: usize,
    pub test_windows: usize,
    pub horizon_step: usize,
    pub draws: usize,
    /// Aggregates use the population standard deviation across draws.
    pub std_estimator: String,
    pub per_run: Vec<RunRow>,
    pub aggregate: Vec<AggregateRow>,
    pub deltas: Deltas,
    pub horizon_curve: Vec<HorizonRow>,
    /// Mean reciprocal rank of the lowest-error member under the scheme's weights.
    pub ideal_mrr: Option<f64>,
    /// Mean reciprocal rank of the full-variable nearest neighbor under subset retrieval.
    pub optimal_rank_mrr: Option<f64>,
    pub scalable: Option<ScalableStats>,
}

pub const CSV_HEADER: &str = "seed,setting,scheme,mae,rmse,horizon_step";

/// Aggregates per setting, in partial/oracle/ensemble order.
pub fn aggregate_rows(per_run: &[RunRow]) -> Vec<AggregateRow> {
    [Setting::Partial, Setting::Oracle, Setting::Ensemble]
        .into_iter()
        .filter_map(|setting| {
            let rows: Vec<&RunRow> = per_run.iter().filter(|r| r.setting == setting).collect();
            if rows.is_empty() {
                return None;
            }
            let (mae_mean, mae_std) = mean_std(&rows.iter().map(|r| r.mae).collect::<Vec<_>>());
            let (rmse_mean, rmse_std) = mean_std(&rows.iter().map(|r| r.rmse).collect::<Vec<_>>());
            Some(AggregateRow {
                setting,
                mae_mean,
                mae_std,
                rmse_mean,
                rmse_std,
            })
        })
        .collect()
}

pub fn deltas_from(aggregate: &[AggregateRow]) -> Deltas {
    let find = |s: Setting| aggregate.iter().find(|a| a.setting == s);
    let Some(oracle) = find(Setting::Oracle) else {
        return Deltas::default();
    };
    let gap = |row: Option<&AggregateRow>, f: fn(&AggregateRow) -> f64| {
        row.and_then(|r| delta_vs_oracle(f(r), f(oracle)).ok())
    };
    Deltas {
        partial_mae: gap(find(Setting::Partial), |r| r.mae_mean),
        partial_rmse: gap(find(Setting::Partial), |r| r.rmse_mean),
        ensemble_mae: gap(find(Setting::Ensemble), |r| r.mae_mean),
        ensemble_rmse: gap(find(Setting::Ensemble), |r| r.rmse_mean),
    }
}

impl EvalReport {
    pub fn aggregate_for(&self, setting: Setting) -> Option<&AggregateRow> {
        self.aggregate.iter().find(|a| a.setting == setting)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-run rows as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.per_run {
            let scheme = r.scheme.map(|s| s.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.seed,
                r.setting.as_str(),
                scheme,
                r.mae,
                r.rmse,
                r.horizon_step
            );
        }
        out
    }

    /// Aligned plain-text summary.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let scheme = self.scheme.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "model={} engine={} scheme={} subset={} k={}% N={} test_windows={} draws={} step={}",
            self.model,
            self.engine,
            scheme,
            self.subset_mode,
            self.k_percent,
            self.n_vars,
            self.test_windows,
            self.draws,
            self.horizon_step
        );
        let _ = writeln!(out, "{:<10} {:>22} {:>22}", "setting", "MAE (std)", "RMSE (std)");
        for a in &self.aggregate {
            let _ = writeln!(
                out,
                "{:<10} {:>22} {:>22}",
                a.setting.as_str(),
                format!("{:.4} ({:.4})", a.mae_mean, a.mae_std),
                format!("{:.4} ({:.4})", a.rmse_mean, a.rmse_std)
            );
        }
        let pct = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |v| format!("{v:.2} %"));
        let _ = writeln!(
            out,
            "{:<10} {:>22} {:>22}",
            "d_partial",
            pct(self.deltas.partial_mae),
            pct(self.deltas.partial_rmse)
        );
        let _ = writeln!(
            out,
            "{:<10} {:>22} {:>22}",
            "d_ensemble",
            pct(self.deltas.ensemble_mae),
            pct(self.deltas.ensemble_rmse)
        );
        if let Some(mrr) = self.ideal_mrr {
            let _ = writeln!(out, "ideal-neighbor MRR: {mrr:.4}");
        }
        if let Some(mrr) = self.optimal_rank_mrr {
            let _ = writeln!(out, "optimal-neighbor MRR: {mrr:.4}");
        }
        if let Some(s) = &self.scalable {
            let _ = writeln!(
                out,
                "scalable: mean rounds {:.2}, mean candidates {:.1}, match rate {}",
                s.mean_rounds,
                s.mean_candidates,
                s.match_rate.map_or_else(|| "-".to_owned(), |m| format!("{m:.3}"))
            );
        }
        let _ = writeln!(out, "{:>4} {:>12} {:>12} {:>12} {:>12}", "step", "partial", "oracle", "ensemble", "d_ensemble");
        for h in &self.horizon_curve {
            let _ = writeln!(
                out,
                "{:>4} {:>12.4} {:>12.4} {:>12} {:>12}",
                h.step,
                h.partial_mae,
                h.oracle_mae,
                h.ensemble_mae.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}")),
                pct(h.delta_ensemble)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, setting: Setting, mae: f64) -> RunRow {
        RunRow {
            seed,
            setting,
            scheme: None,
            mae,
            rmse: mae * 2.0,
            horizon_step: 12,
        }
    }

    #[test]
    fn aggregates_and_deltas() {
        let rows = vec![
            row(0, Setting::Partial, 3.0),
            row(0, Setting::Oracle, 2.0),
            row(1, Setting::Partial, 5.0),
            row(1, Setting::Oracle, 2.0),
        ];
        let agg = aggregate_rows(&rows);
        assert_eq!(agg.len(), 2);
        assert_eq!((agg[0].mae_mean, agg[0].mae_std), (4.0, 1.0));
        let d = deltas_from(&agg);
        assert_eq!(d.partial_mae, Some(100.0));
        assert_eq!(d.ensemble_mae, None);
    }

    #[test]
    fn no_oracle_no_deltas() {
        let agg = aggregate_rows(&[row(0, Setting::Partial, 1.0)]);
        assert_eq!(deltas_from(&agg), Deltas::default());
    }
}
