//! Loading, scaling, normalization, chronological splitting and windowing.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VsfError};
use crate::tensor::{Matrix, Tensor3};

/// A `T x N` multivariate series, one row per timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    values: Matrix,
    variable_names: Vec<String>,
    pub sample_rate: Option<String>,
}

impl RawSeries {
    pub fn new(values: Matrix, variable_names: Vec<String>) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(VsfError::EmptyInput);
        }
        if variable_names.len() != values.cols() {
            return Err(VsfError::ShapeMismatch(format!(
                "{} names for {} variables",
                variable_names.len(),
                values.cols()
            )));
        }
        if let Some(i) = values.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(VsfError::Parse {
                row: i / values.cols() + 1,
                col: i % values.cols() + 1,
                message: "non-finite value".into(),
            });
        }
        Ok(Self {
            values,
            variable_names,
            sample_rate: None,
        })
    }

    /// Series with synthesized names `v0..v{N-1}`.
    pub fn from_matrix(values: Matrix) -> Result<Self> {
        let names = default_names(values.cols());
        Self::new(values, names)
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn n_vars(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    fn with_values(&self, values: Matrix) -> Self {
        Self {
            values,
            variable_names: self.variable_names.clone(),
            sample_rate: self.sample_rate.clone(),
        }
    }

    /// Rows `[start, end)` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        self.with_values(self.values.row_range(start, end))
    }
}

fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}

/// Reads a wide numeric CSV: one row per timestep, one column per variable.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<RawSeries> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| VsfError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    parse_csv(&text, has_header)
}

/// Parses CSV text; see [`load_csv`]. Row and column numbers in errors are 1-based
/// and count data rows only.
pub fn parse_csv(text: &str, has_header: bool) -> Result<RawSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let names = if has_header {
        let header = reader.headers().map_err(|e| VsfError::Parse {
            row: 0,
            col: 0,
            message: e.to_string(),
        })?;
        Some(header.iter().map(str::to_owned).collect::<Vec<_>>())
    } else {
        None
    };

    let mut width = names.as_ref().map(Vec::len);
    let mut data = Vec::new();
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| VsfError::Parse {
            row,
            col: 0,
            message: e.to_string(),
        })?;
        // Skip blank trailing lines.
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(VsfError::Parse {
                row,
                col: record.len().min(expected) + 1,
                message: format!("expected {expected} columns, found {}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| VsfError::Parse {
                row,
                col: j + 1,
                message: if cell.is_empty() {
                    "missing value".to_owned()
                } else {
                    format!("not a number: {cell:?}")
                },
            })?;
            if !v.is_finite() {
                return Err(VsfError::Parse {
                    row,
                    col: j + 1,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            data.push(v);
        }
        rows += 1;
    }

    let n = width.unwrap_or(0);
    if rows == 0 || n == 0 {
        return Err(VsfError::EmptyInput);
    }
    let values = Matrix::from_vec(rows, n, data)?;
    RawSeries::new(values, names.unwrap_or_else(|| default_names(n)))
}

/// Multiplies every cell by `factor`.
pub fn scale_values(series: &RawSeries, factor: f64) -> Result<RawSeries> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(VsfError::InvalidFactor(factor));
    }
    Ok(series.with_values(series.values.map(|v| v * factor)))
}

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fracs = [self.train, self.val, self.test];
        if fracs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(VsfError::InvalidConfig(format!(
                "split fractions must be positive: {fracs:?}"
            )));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(VsfError::InvalidConfig(format!(
                "split fractions must sum to 1: {fracs:?}"
            )));
        }
        Ok(())
    }

    /// Row counts for a series of length `t`: floor for train and val, remainder to test.
    pub fn lengths(&self, t: usize) -> (usize, usize, usize) {
        // The epsilon absorbs representation error such as 0.7 * 100 = 70.00000000000001
        // or 0.29 * 100 = 28.999999999999996.
        let floor = |f: f64| ((f * t as f64) + 1e-9).floor() as usize;
        let train = floor(self.train).min(t);
        let val = floor(self.val).min(t - train);
        (train, val, t - train - val)
    }
}

/// Contiguous train/val/test slices in time order. Every split must hold at least
/// `min_len` rows.
pub fn split_chronological(
    series: &RawSeries,
    spec: &SplitSpec,
    min_len: usize,
) -> Result<(RawSeries, RawSeries, RawSeries)> {
    spec.validate()?;
    let (train, val, test) = spec.lengths(series.len());
    for (name, len) in [("train", train), ("val", val), ("test", test)] {
        if len < min_len.max(1) {
            return Err(VsfError::TooShort(format!(
                "{name} split has {len} rows, at least {} required",
                min_len.max(1)
            )));
        }
    }
    Ok((
        series.slice(0, train),
        series.slice(train, train + val),
        series.slice(train + val, series.len()),
    ))
}

/// Scalar z-normalization shared by all variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mu: f64,
    pub sigma: f64,
}

impl Normalizer {
    #[inline]
    pub fn forward(&self, x: f64) -> f64 {
        (x - self.mu) / self.sigma
    }

    #[inline]
    pub fn inverse(&self, x: f64) -> f64 {
        x * self.sigma + self.mu
    }
}

/// Mean and population standard deviation over every cell of the training split.
pub fn fit_normalizer(train: &RawSeries) -> Result<Normalizer> {
    let cells = train.values.as_slice();
    if cells.is_empty() {
        return Err(VsfError::EmptyInput);
    }
    let n = cells.len() as f64;
    let mu = cells.iter().sum::<f64>() / n;
    let var = cells.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt();
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(VsfError::DegenerateSeries);
    }
    Ok(Normalizer { mu, sigma })
}

pub fn apply_normalizer(series: &RawSeries, norm: &Normalizer, inverse: bool) -> RawSeries {
    let values = if inverse {
        series.values.map(|v| norm.inverse(v))
    } else {
        series.values.map(|v| norm.forward(v))
    };
    series.with_values(values)
}

/// One `(input, target)` window.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// `P x V x D`; feature 0 is the primary value.
    pub x: Tensor3,
    /// `Q x V` future primary values.
    pub y: Matrix,
    /// Offset of the window start within its source split.
    pub origin_index: usize,
}

impl Instance {
    pub fn n_vars(&self) -> usize {
        self.x.vars()
    }
}

fn window_offsets(t: usize, p: usize, q: usize, stride: usize) -> Result<Vec<usize>> {
    if p == 0 || q == 0 || stride == 0 {
        return Err(VsfError::InvalidConfig(format!(
            "p, q and stride must be positive (p={p}, q={q}, stride={stride})"
        )));
    }
    if t < p + q {
        return Err(VsfError::TooShort(format!(
            "{t} rows cannot hold a window of {p} inputs and {q} targets"
        )));
    }
    Ok((0..=t - p - q).step_by(stride).collect())
}

/// Cuts single-feature windows at offsets `0, stride, 2*stride, ...`.
pub fn make_windows(series: &RawSeries, p: usize, q: usize, stride: usize) -> Result<Vec<Instance>> {
    make_windows_with_features(series, &[], p, q, stride)
}

/// Like [`make_windows`], with auxiliary feature channels appended after the
/// primary value. Each auxiliary series must match `primary` in shape.
pub fn make_windows_with_features(
    primary: &RawSeries,
    aux: &[RawSeries],
    p: usize,
    q: usize,
    stride: usize,
) -> Result<Vec<Instance>> {
    for a in aux {
        if a.len() != primary.len() || a.n_vars() != primary.n_vars() {
            return Err(VsfError::ShapeMismatch(
                "auxiliary feature series must match the primary series shape".into(),
            ));
        }
    }
    let n = primary.n_vars();
    let d = 1 + aux.len();
    let offsets = window_offsets(primary.len(), p, q, stride)?;
    Ok(offsets
        .into_iter()
        .map(|offset| {
            let mut x = Tensor3::zeros(p, n, d);
            for step in 0..p {
                let t = offset + step;
                for v in 0..n {
                    x.set(step, v, 0, primary.values.get(t, v));
                    for (k, a) in aux.iter().enumerate() {
                        x.set(step, v, k + 1, a.values.get(t, v));
                    }
                }
            }
            let y = primary.values.row_range(offset + p, offset + p + q);
            Instance {
                x,
                y,
                origin_index: offset,
            }
        })
        .collect())
}

/// Scaling, splitting, normalization and windowing settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepareOptions {
    pub scale: f64,
    pub split: SplitSpec,
    pub p: usize,
    pub q: usize,
    pub stride: usize,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            scale: 1.0,
            split: SplitSpec::default(),
            p: 12,
            q: 12,
            stride: 1,
        }
    }
}

/// A normalized dataset cut into per-split windows.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub normalizer: Normalizer,
    pub n_vars: usize,
    /// Normalized train split, kept for correlation analysis.
    pub train: RawSeries,
    pub train_windows: Vec<Instance>,
    pub val_windows: Vec<Instance>,
    pub test_windows: Vec<Instance>,
}

/// Scale, split, fit the normalizer on train, normalize and window each split.
/// Windows never straddle split boundaries.
pub fn prepare(series: &RawSeries, opts: &PrepareOptions) -> Result<PreparedData> {
    let scaled = scale_values(series, opts.scale)?;
    let (train, val, test) = split_chronological(&scaled, &opts.split, opts.p + opts.q)?;
    let normalizer = fit_normalizer(&train)?;
    let train = apply_normalizer(&train, &normalizer, false);
    let val = apply_normalizer(&val, &normalizer, false);
    let test = apply_normalizer(&test, &normalizer, false);
    Ok(PreparedData {
        normalizer,
        n_vars: series.n_vars(),
        train_windows: make_windows(&train, opts.p, opts.q, opts.stride)?,
        val_windows: make_windows(&val, opts.p, opts.q, opts.stride)?,
        test_windows: make_windows(&test, opts.p, opts.q, opts.stride)?,
        train,
    })
}
