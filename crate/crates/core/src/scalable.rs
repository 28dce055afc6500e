//! Range-query retrieval over a flattened query table.
//!
//! Every corpus instance becomes one row of `P * N * D` values. Each column keeps a
//! sorted index so that the per-cell predicate `|x_test[p, s] - row[p, s]| <= b_s`
//! is a binary-searched range. Candidates are the intersection over all cells of the
//! query; when fewer than `m` survive, the tightest thresholds are widened by a
//! factor `u` and the query is repeated. Survivors are re-ranked exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Instance;
use crate::error::{Result, VsfError};
use crate::retrieval::{query_distance, select_top, Neighbor, NeighborSet, Power, RetrievalCorpus};
use crate::subset::SubsetMask;
use crate::tensor::Tensor3;

/// Thresholds below this are raised to it so exact matches always qualify.
pub const THRESHOLD_FLOOR: f64 = 1e-9;

/// Row-major table of flattened instances with one sorted index per column.
#[derive(Debug, Clone)]
pub struct QueryTable {
    steps: usize,
    vars: usize,
    features: usize,
    n_rows: usize,
    rows: Vec<f64>,
    /// `columns[c]` holds `(value, row)` sorted by value, then row.
    columns: Vec<Vec<(f64, u32)>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DumpHeader {
    rows: usize,
    cols: usize,
    steps: usize,
    vars: usize,
    features: usize,
}

impl QueryTable {
    fn from_flat(steps: usize, vars: usize, features: usize, rows: Vec<f64>) -> Self {
        let width = steps * vars * features;
        let n_rows = rows.len() / width;
        let columns = (0..width)
            .into_par_iter()
            .map(|c| {
                let mut col: Vec<(f64, u32)> = (0..n_rows)
                    .map(|r| (rows[r * width + c], r as u32))
                    .collect();
                col.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                col
            })
            .collect();
        Self {
            steps,
            vars,
            features,
            n_rows,
            rows,
            columns,
        }
    }

    pub fn len(&self) -> usize {
        self.n_rows
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn width(&self) -> usize {
        self.steps * self.vars * self.features
    }

    /// Column holding feature `d` of variable `var` at step `p`.
    #[inline]
    pub fn column_of(&self, p: usize, var: usize, d: usize) -> usize {
        (p * self.vars + var) * self.features + d
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.width();
        &self.rows[r * w..(r + 1) * w]
    }

    #[inline]
    pub fn value(&self, r: usize, column: usize) -> f64 {
        self.rows[r * self.width() + column]
    }

    pub fn column_index(&self, column: usize) -> &[(f64, u32)] {
        &self.columns[column]
    }

    /// Half-open position range in the column index whose values may lie within
    /// `radius` of `center`. The range is padded by a few ulps; callers filter with
    /// the exact predicate.
    fn candidate_range(&self, column: usize, center: f64, radius: f64) -> (usize, usize) {
        let col = &self.columns[column];
        let pad = (center.abs() + radius) * 1e-12;
        let lo = center - radius - pad;
        let hi = center + radius + pad;
        let start = col.partition_point(|e| e.0 < lo);
        let end = col.partition_point(|e| e.0 <= hi);
        (start, end.max(start))
    }

    /// The `k`-th smallest `|center - value|` in a column (1-based `k`), found by
    /// expanding outwards from the insertion point.
    fn kth_residual(&self, column: usize, center: f64, k: usize) -> f64 {
        let col = &self.columns[column];
        let mut right = col.partition_point(|e| e.0 < center);
        let mut left = right;
        let mut last = 0.0;
        for _ in 0..k.min(col.len()) {
            let dl = if left > 0 { center - col[left - 1].0 } else { f64::INFINITY };
            let dr = if right < col.len() { col[right].0 - center } else { f64::INFINITY };
            if dl <= dr {
                left -= 1;
                last = dl;
            } else {
                right += 1;
                last = dr;
            }
        }
        last
    }

    /// Little-endian `f64` rows plus a JSON sidecar at `<path>.json`.
    pub fn write_dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| VsfError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut bytes = Vec::with_capacity(self.rows.len() * 8);
        for v in &self.rows {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(io_err)?;
        let header = DumpHeader {
            rows: self.n_rows,
            cols: self.width(),
            steps: self.steps,
            vars: self.vars,
            features: self.features,
        };
        let sidecar = sidecar_path(path);
        fs::write(&sidecar, serde_json::to_vec_pretty(&header)?).map_err(|source| VsfError::Io {
            path: sidecar,
            source,
        })
    }

    pub fn read_dump(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let sidecar = sidecar_path(path);
        let header: DumpHeader = serde_json::from_slice(&fs::read(&sidecar).map_err(|source| {
            VsfError::Io {
                path: sidecar.clone(),
                source,
            }
        })?)?;
        let bytes = fs::read(path).map_err(|source| VsfError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let width = header.steps * header.vars * header.features;
        if width != header.cols || bytes.len() != header.rows * header.cols * 8 || width == 0 {
            return Err(VsfError::ShapeMismatch(
                "query table dump does not match its sidecar".into(),
            ));
        }
        let rows = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self::from_flat(header.steps, header.vars, header.features, rows))
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Flattens every corpus instance into one table row and indexes every column.
pub fn build_query_table(corpus: &RetrievalCorpus) -> QueryTable {
    let rows: Vec<f64> = corpus
        .instances()
        .iter()
        .flat_map(|inst| inst.x.as_slice().iter().copied())
        .collect();
    QueryTable::from_flat(corpus.steps(), corpus.n_vars(), corpus.features(), rows)
}

/// Per-variable range widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector {
    pub b_sigma: Vec<f64>,
    pub k_hat: usize,
}

impl ThresholdVector {
    pub fn uniform(n_vars: usize, width: f64) -> Self {
        Self {
            b_sigma: vec![width.max(THRESHOLD_FLOOR); n_vars],
            k_hat: 0,
        }
    }
}

/// Per-variable thresholds from the `k_hat`-th full-variable neighbor of each
/// validation window: the mean absolute difference on that variable, averaged over
/// steps, features and validation windows.
pub fn calibrate_thresholds(
    corpus: &RetrievalCorpus,
    val_windows: &[Instance],
    k_hat: usize,
    exponent_b: f64,
) -> Result<ThresholdVector> {
    let power = Power::new(exponent_b)?;
    if k_hat == 0 || corpus.len() <= k_hat {
        return Err(VsfError::CorpusTooSmall {
            needed: k_hat + 1,
            available: corpus.len(),
        });
    }
    if val_windows.is_empty() {
        return Err(VsfError::EmptyInput);
    }
    let n = corpus.n_vars();
    let all: Vec<usize> = (0..n).collect();
    let per_window: Vec<Vec<f64>> = val_windows
        .par_iter()
        .map(|w| {
            let scored: Vec<Neighbor> = corpus
                .instances()
                .iter()
                .enumerate()
                .map(|(index, inst)| Neighbor {
                    index,
                    distance: query_distance(&w.x, &inst.x, &all, power),
                })
                .collect();
            let kth = select_top(scored, k_hat).entries[k_hat - 1].index;
            let nn = &corpus.get(kth).x;
            let (p, d) = (nn.steps(), nn.features());
            (0..n)
                .map(|v| {
                    let mut s = 0.0;
                    for step in 0..p {
                        for (a, b) in w.x.cell(step, v).iter().zip(nn.cell(step, v)) {
                            s += (a - b).abs();
                        }
                    }
                    s / (p * d) as f64
                })
                .collect()
        })
        .collect();
    let count = per_window.len() as f64;
    let b_sigma = (0..n)
        .map(|v| {
            let mean = per_window.iter().map(|w| w[v]).sum::<f64>() / count;
            mean.max(THRESHOLD_FLOOR)
        })
        .collect();
    Ok(ThresholdVector { b_sigma, k_hat })
}

/// Corpus rows surviving every range predicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    /// Ascending row ids.
    pub ids: Vec<usize>,
    pub rounds_used: usize,
}

fn check_query(table: &QueryTable, x_test: &Tensor3, subset: &SubsetMask, thresholds: &[f64]) -> Result<()> {
    if subset.n_total() != table.vars
        || x_test.vars() != subset.len()
        || x_test.steps() != table.steps
        || x_test.features() != table.features
    {
        return Err(VsfError::ShapeMismatch(format!(
            "query {}x{}x{} does not fit table {}x{}x{} with a {}-variable subset",
            x_test.steps(),
            x_test.vars(),
            x_test.features(),
            table.steps,
            table.vars,
            table.features,
            subset.len()
        )));
    }
    if thresholds.len() != table.vars {
        return Err(VsfError::ShapeMismatch(format!(
            "{} thresholds for {} variables",
            thresholds.len(),
            table.vars
        )));
    }
    if thresholds.iter().any(|b| !b.is_finite() || *b <= 0.0) {
        return Err(VsfError::InvalidConfig("thresholds must be positive and finite".into()));
    }
    Ok(())
}

/// One `(column, center, radius)` per query cell.
fn sub_queries(table: &QueryTable, x_test: &Tensor3, subset: &SubsetMask, b: &[f64]) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::with_capacity(x_test.steps() * subset.len() * x_test.features());
    for p in 0..x_test.steps() {
        for (row, &var) in subset.indices().iter().enumerate() {
            for (d, &center) in x_test.cell(p, row).iter().enumerate() {
                out.push((table.column_of(p, var, d), center, b[var]));
            }
        }
    }
    out
}

fn intersect(table: &QueryTable, queries: &[(usize, f64, f64)]) -> Vec<usize> {
    let ranges: Vec<(usize, usize)> = queries
        .iter()
        .map(|&(c, center, radius)| table.candidate_range(c, center, radius))
        .collect();
    // Walk the narrowest range and test every other predicate on the row itself;
    // this is exactly the intersection of all the per-cell sets.
    let Some((narrow, &(start, end))) = ranges
        .iter()
        .enumerate()
        .min_by_key(|(i, (s, e))| (e - s, *i))
    else {
        return Vec::new();
    };
    let (col, _, _) = queries[narrow];
    let mut ids: Vec<usize> = table.columns[col][start..end]
        .iter()
        .map(|&(_, r)| r as usize)
        .filter(|&r| {
            queries
                .iter()
                .all(|&(c, center, radius)| (center - table.value(r, c)).abs() <= radius)
        })
        .collect();
    ids.sort_unstable();
    ids
}

/// Rows satisfying `|x_test[p, s, d] - row[p, sigma(s), d]| <= b[sigma(s)]` for every
/// step, subset variable and feature.
pub fn range_candidates(
    table: &QueryTable,
    x_test: &Tensor3,
    subset: &SubsetMask,
    thresholds: &ThresholdVector,
) -> Result<CandidateSet> {
    check_query(table, x_test, subset, &thresholds.b_sigma)?;
    let queries = sub_queries(table, x_test, subset, &thresholds.b_sigma);
    Ok(CandidateSet {
        ids: intersect(table, &queries),
        rounds_used: 1,
    })
}

/// Loosening schedule for [`iterative_retrieve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LooseningConfig {
    pub u: f64,
    pub max_rounds: usize,
}

impl Default for LooseningConfig {
    fn default() -> Self {
        Self { u: 1.5, max_rounds: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalableRetrieval {
    pub neighbors: NeighborSet,
    pub rounds_used: usize,
    pub candidates: usize,
}

/// Range retrieval with threshold loosening followed by an exact re-rank.
///
/// While fewer than `m` rows survive, the `ceil(|S| / 2)` subset variables with the
/// least slack are widened by `u`. Slack of a variable is its threshold divided by
/// the largest, over its cells, of the residual needed to admit `m` rows in that
/// cell's column.
#[allow(clippy::too_many_arguments)]
pub fn iterative_retrieve(
    table: &QueryTable,
    corpus: &RetrievalCorpus,
    x_test: &Tensor3,
    subset: &SubsetMask,
    thresholds: &ThresholdVector,
    loosening: LooseningConfig,
    m: usize,
    exponent_b: f64,
) -> Result<ScalableRetrieval> {
    let power = Power::new(exponent_b)?;
    if !(loosening.u > 1.0 && loosening.u.is_finite()) {
        return Err(VsfError::InvalidConfig(format!(
            "loosening factor must exceed 1, got {}",
            loosening.u
        )));
    }
    if m == 0 || loosening.max_rounds == 0 {
        return Err(VsfError::InvalidConfig("m and max_rounds must be positive".into()));
    }
    if corpus.len() != table.len() {
        return Err(VsfError::ShapeMismatch("corpus and query table differ in size".into()));
    }
    check_query(table, x_test, subset, &thresholds.b_sigma)?;

    let mut b = thresholds.b_sigma.clone();
    let mut rounds = 0;
    let ids = loop {
        rounds += 1;
        let queries = sub_queries(table, x_test, subset, &b);
        let ids = intersect(table, &queries);
        if ids.len() >= m || rounds >= loosening.max_rounds {
            break ids;
        }
        let mut slack: Vec<(f64, usize)> = subset
            .indices()
            .iter()
            .enumerate()
            .map(|(row, &var)| {
                let mut needed = 0.0f64;
                for p in 0..x_test.steps() {
                    for (d, &center) in x_test.cell(p, row).iter().enumerate() {
                        needed = needed.max(table.kth_residual(table.column_of(p, var, d), center, m));
                    }
                }
                let s = if needed > 0.0 { b[var] / needed } else { f64::INFINITY };
                (s, var)
            })
            .collect();
        slack.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let count = subset.len().div_ceil(2).max(1);
        for &(_, var) in slack.iter().take(count) {
            b[var] *= loosening.u;
        }
    };

    if ids.is_empty() {
        return Err(VsfError::Exhausted { rounds });
    }
    let scored: Vec<Neighbor> = ids
        .iter()
        .map(|&index| Neighbor {
            index,
            distance: query_distance(x_test, &corpus.get(index).x, subset.indices(), power),
        })
        .collect();
    let candidates = scored.len();
    Ok(ScalableRetrieval {
        neighbors: select_top(scored, m),
        rounds_used: rounds,
        candidates,
    })
}
