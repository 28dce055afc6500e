use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use vsf_core::config::{OutputFormat, RunConfig};
use vsf_core::dataset::{load_csv, prepare, PreparedData, RawSeries};
use vsf_core::eval::{cluster_variables, run_experiment, run_sweep, SweepGrid};
use vsf_core::forecast::ForecastModel;
use vsf_core::synthetic::{BlockSpec, MixtureSpec, SeasonalSpec};
use vsf_core::{Result, VsfError};

use crate::args::{ClusterArgs, Command, DataArgs, RunArgs, Synthetic};

/// Loads the config file, if any, and applies flag overrides.
pub fn effective_config(path: Option<&Path>, command: &Command, seed: Option<u64>, format: Option<OutputFormat>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| VsfError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.subset.seed = s;
    }
    if let Some(f) = format {
        cfg.output.format = f;
    }
    match command {
        Command::Ingest(a) => apply_data(&mut cfg, &a.data),
        Command::Eval(a) => apply_run(&mut cfg, &a.run),
        Command::Sweep(a) => apply_run(&mut cfg, &a.run),
        Command::Cluster(a) => apply_cluster(&mut cfg, a),
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_data(cfg: &mut RunConfig, a: &DataArgs) {
    if let Some(p) = &a.data {
        cfg.dataset.path = Some(p.clone());
    }
    if let Some(s) = a.scale {
        cfg.dataset.scale = s;
    }
    if a.no_header {
        cfg.dataset.header = false;
    }
}

fn apply_run(cfg: &mut RunConfig, a: &RunArgs) {
    apply_data(cfg, &a.data);
    if let Some(v) = a.model {
        cfg.model.name = v;
    }
    if let Some(v) = a.ridge_lambda {
        cfg.model.ridge_lambda = v;
    }
    if let Some(v) = a.subset_mode {
        cfg.subset.mode = v;
    }
    if let Some(v) = a.k {
        cfg.subset.k_percent = v;
    }
    if let Some(v) = a.c {
        cfg.subset.c = v;
    }
    if let Some(v) = a.draws {
        cfg.subset.draws = v;
    }
    if let Some(v) = a.scheme {
        cfg.ensemble.scheme = v;
    }
    if let Some(v) = a.retrieval {
        cfg.retrieval.engine = v;
    }
    if a.verify_direct {
        cfg.retrieval.verify_direct = true;
    }
    if let Some(v) = a.fraction {
        cfg.retrieval.fraction = v;
    }
    if let Some(v) = a.m {
        cfg.retrieval.m = v;
    }
    if let Some(v) = a.tau {
        cfg.ensemble.tau = v;
    }
    if let Some(v) = a.exponent_b {
        cfg.retrieval.exponent_b = v;
    }
    if a.no_ensemble {
        cfg.ensemble.enabled = false;
    }
    if a.optimal_rank {
        cfg.analysis.optimal_rank = true;
    }
}

fn apply_cluster(cfg: &mut RunConfig, a: &ClusterArgs) {
    apply_data(cfg, &a.data);
    if let Some(v) = a.eps {
        cfg.subset.eps = v;
    }
    if let Some(v) = a.min_pts {
        cfg.subset.min_pts = v;
    }
}

fn load_series(cfg: &RunConfig, a: &DataArgs) -> Result<RawSeries> {
    if let Some(kind) = a.synthetic {
        let seed = a.synthetic_seed;
        return match kind {
            Synthetic::Mixture | Synthetic::Contaminated => {
                let mut spec = if kind == Synthetic::Contaminated {
                    MixtureSpec::contaminated()
                } else {
                    MixtureSpec::default()
                };
                if let Some(t) = a.synthetic_len {
                    spec.t_len = t;
                }
                spec.generate(seed)
            }
            Synthetic::Block => {
                let mut spec = BlockSpec::default();
                if let Some(t) = a.synthetic_len {
                    spec.t_len = t;
                }
                spec.generate(seed)
            }
            Synthetic::Seasonal => {
                let mut spec = SeasonalSpec::default();
                if let Some(t) = a.synthetic_len {
                    spec.t_len = t;
                }
                spec.generate(seed)
            }
        };
    }
    match &cfg.dataset.path {
        Some(p) => load_csv(p, cfg.dataset.header),
        None => Err(VsfError::InvalidConfig(
            "no dataset: pass --data, --synthetic or set dataset.path".into(),
        )),
    }
}

fn load_prepared(cfg: &RunConfig, a: &DataArgs) -> Result<(RawSeries, PreparedData)> {
    let series = load_series(cfg, a)?;
    let data = prepare(&series, &cfg.prepare_options())?;
    Ok((series, data))
}

fn fit_model(cfg: &RunConfig, data: &PreparedData) -> Result<Box<dyn ForecastModel>> {
    let mut model = cfg.model.name.build(cfg.windowing.q, cfg.model.ridge_lambda);
    model.fit(&data.train_windows)?;
    Ok(model)
}

/// Writes `text` to the configured path, or standard output.
pub fn emit(cfg: &RunConfig, output: Option<&Path>, text: &str) -> Result<()> {
    let path = output.or(cfg.output.path.as_deref());
    match path {
        Some(p) => fs::write(p, text).map_err(|source| VsfError::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| VsfError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

fn with_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct IngestStats {
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "N")]
    n: usize,
    variables: Vec<String>,
    split_lengths: SplitCounts,
    windows: SplitCounts,
    mean: f64,
    std: f64,
}

#[derive(Serialize)]
struct SplitCounts {
    train: usize,
    val: usize,
    test: usize,
}

pub fn ingest(cfg: &RunConfig, a: &DataArgs) -> Result<String> {
    let (series, data) = load_prepared(cfg, a)?;
    let (train, val, test) = cfg.split.lengths(series.len());
    let stats = IngestStats {
        t: series.len(),
        n: series.n_vars(),
        variables: series.variable_names().to_vec(),
        split_lengths: SplitCounts { train, val, test },
        windows: SplitCounts {
            train: data.train_windows.len(),
            val: data.val_windows.len(),
            test: data.test_windows.len(),
        },
        mean: data.normalizer.mu,
        std: data.normalizer.sigma,
    };
    Ok(match cfg.output.format {
        OutputFormat::Text => format!(
            "T={} N={}\nsplit train={} val={} test={}\nwindows train={} val={} test={}\n",
            stats.t, stats.n, train, val, test, stats.windows.train, stats.windows.val, stats.windows.test
        ),
        OutputFormat::Csv => format!(
            "T,N,train_len,val_len,test_len,train_windows,val_windows,test_windows\n{},{},{},{},{},{},{},{}\n",
            stats.t, stats.n, train, val, test, stats.windows.train, stats.windows.val, stats.windows.test
        ),
        OutputFormat::Json => with_newline(serde_json::to_string_pretty(&stats)?),
    })
}

pub fn eval(cfg: &RunConfig, a: &RunArgs) -> Result<String> {
    let (_, data) = load_prepared(cfg, &a.data)?;
    let model = fit_model(cfg, &data)?;
    let report = run_experiment(cfg, &data, model.as_ref())?;
    Ok(with_newline(match cfg.output.format {
        OutputFormat::Json => report.to_json(),
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Text => report.to_text(),
    }))
}

pub fn sweep(cfg: &RunConfig, a: &RunArgs, grid: &SweepGrid) -> Result<String> {
    let (_, data) = load_prepared(cfg, &a.data)?;
    let model = fit_model(cfg, &data)?;
    let report = run_sweep(cfg, &data, model.as_ref(), grid)?;
    Ok(with_newline(match cfg.output.format {
        OutputFormat::Json => report.to_json(),
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Text => report.to_text(),
    }))
}

#[derive(Serialize)]
struct ClusterReport {
    n_clusters: usize,
    sizes: Vec<usize>,
    noise: usize,
    labels: Vec<Option<usize>>,
}

pub fn cluster(cfg: &RunConfig, a: &ClusterArgs) -> Result<String> {
    let (series, data) = load_prepared(cfg, &a.data)?;
    let clusters = cluster_variables(&data, cfg.subset.eps, cfg.subset.min_pts)?;
    if a.emit_labels || cfg.output.format == OutputFormat::Csv {
        let mut out = String::from("variable,name,label\n");
        for (i, (name, label)) in series.variable_names().iter().zip(&clusters.labels).enumerate() {
            let label = label.map_or_else(|| "-1".to_owned(), |l| l.to_string());
            out.push_str(&format!("{i},{name},{label}\n"));
        }
        return Ok(out);
    }
    let report = ClusterReport {
        n_clusters: clusters.n_clusters,
        sizes: clusters.sizes(),
        noise: clusters.labels.iter().filter(|l| l.is_none()).count(),
        labels: clusters.labels.clone(),
    };
    Ok(match cfg.output.format {
        OutputFormat::Text => format!(
            "clusters={} sizes={:?} noise={}\n",
            report.n_clusters, report.sizes, report.noise
        ),
        _ => with_newline(serde_json::to_string_pretty(&report)?),
    })
}
