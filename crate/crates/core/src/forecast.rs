//! The black-box forecaster interface and closed-form baselines.
//!
//! Every model maps a `P x V x D` input to a `V x Q` forecast and accepts any
//! `V >= 1` at predict time. Row `i` of the output forecasts input row `i`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Instance;
use crate::error::{Result, VsfError};
use crate::subset::SubsetMask;
use crate::tensor::{Matrix, Tensor3};

/// `V x Q` forecast, optionally tagged with the subset its rows belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastMatrix {
    pub yhat: Matrix,
    pub subset: Option<SubsetMask>,
}

impl ForecastMatrix {
    pub fn horizon(&self) -> usize {
        self.yhat.cols()
    }

    pub fn n_rows(&self) -> usize {
        self.yhat.rows()
    }
}

/// A forecaster `f`.
///
/// `vars` names the variable behind each input row. `None` means the input holds
/// every variable in order. Models that act on each variable independently may
/// ignore it.
pub trait ForecastModel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Forecast horizon `Q`.
    fn horizon(&self) -> usize;

    fn fit(&mut self, train: &[Instance]) -> Result<()>;

    fn predict(&self, x: &Tensor3, vars: Option<&SubsetMask>) -> Result<Matrix>;
}

fn check_vars(x: &Tensor3, vars: Option<&SubsetMask>) -> Result<()> {
    if x.vars() == 0 || x.steps() == 0 {
        return Err(VsfError::ShapeMismatch("empty input tensor".into()));
    }
    if let Some(mask) = vars {
        if mask.len() != x.vars() {
            return Err(VsfError::ShapeMismatch(format!(
                "input has {} variable rows but subset lists {}",
                x.vars(),
                mask.len()
            )));
        }
    }
    Ok(())
}

fn repeat_rows(values: impl Iterator<Item = f64>, q: usize) -> Matrix {
    let data: Vec<f64> = values.flat_map(|v| std::iter::repeat_n(v, q)).collect();
    let rows = data.len() / q;
    Matrix::from_vec(rows, q, data).expect("rows * q values")
}

/// Repeats each variable's last observed primary value.
#[derive(Debug, Clone)]
pub struct Persistence {
    q: usize,
}

pub fn persistence_model(q: usize) -> Persistence {
    Persistence { q }
}

impl ForecastModel for Persistence {
    fn name(&self) -> &'static str {
        "persistence"
    }

    fn horizon(&self) -> usize {
        self.q
    }

    fn fit(&mut self, _train: &[Instance]) -> Result<()> {
        Ok(())
    }

    fn predict(&self, x: &Tensor3, vars: Option<&SubsetMask>) -> Result<Matrix> {
        check_vars(x, vars)?;
        let last = x.steps() - 1;
        Ok(repeat_rows((0..x.vars()).map(|v| x.get(last, v, 0)), self.q))
    }
}

/// Repeats each variable's mean primary value over the input window.
#[derive(Debug, Clone)]
pub struct WindowMean {
    q: usize,
}

pub fn mean_model(q: usize) -> WindowMean {
    WindowMean { q }
}

impl ForecastModel for WindowMean {
    fn name(&self) -> &'static str {
        "mean"
    }

    fn horizon(&self) -> usize {
        self.q
    }

    fn fit(&mut self, _train: &[Instance]) -> Result<()> {
        Ok(())
    }

    fn predict(&self, x: &Tensor3, vars: Option<&SubsetMask>) -> Result<Matrix> {
        check_vars(x, vars)?;
        let p = x.steps() as f64;
        let means = (0..x.vars()).map(|v| x.primary(v).iter().sum::<f64>() / p);
        Ok(repeat_rows(means, self.q))
    }
}

/// Solves `(A^T A + lambda I) W = A^T B` given the accumulated Gram matrix and
/// cross-products. With `lambda = 0` the minimum-norm least-squares solution is
/// returned, so rank-deficient designs still fit.
fn ridge_solve(gram: DMatrix<f64>, cross: DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let k = gram.nrows();
    if lambda > 0.0 {
        let system = gram + DMatrix::identity(k, k) * lambda;
        return system
            .cholesky()
            .map(|c| c.solve(&cross))
            .ok_or(VsfError::SingularSystem);
    }
    let svd = gram.svd(true, true);
    let max_sv = svd.singular_values.max();
    if max_sv.is_nan() || max_sv <= 0.0 {
        return Err(VsfError::SingularSystem);
    }
    let solution = svd
        .solve(&cross, max_sv * 1e-12)
        .map_err(|_| VsfError::SingularSystem)?;
    if solution.iter().all(|v| v.is_finite()) {
        Ok(solution)
    } else {
        Err(VsfError::SingularSystem)
    }
}

/// Ridge autoregression from a variable's `P` primary lags to each horizon step.
/// Coefficients are shared by every variable.
#[derive(Debug, Clone)]
pub struct LinearAr {
    q: usize,
    ridge_lambda: f64,
    /// `coefs[h]` maps the `P` lags to horizon step `h`.
    coefs: Option<Vec<Vec<f64>>>,
}

pub fn linear_ar_model(q: usize, ridge_lambda: f64) -> LinearAr {
    LinearAr {
        q,
        ridge_lambda,
        coefs: None,
    }
}

impl LinearAr {
    pub fn coefficients(&self) -> Option<&[Vec<f64>]> {
        self.coefs.as_deref()
    }
}

impl ForecastModel for LinearAr {
    fn name(&self) -> &'static str {
        "linear_ar"
    }

    fn horizon(&self) -> usize {
        self.q
    }

    fn fit(&mut self, train: &[Instance]) -> Result<()> {
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(VsfError::InvalidConfig(format!(
                "ridge_lambda must be non-negative, got {}",
                self.ridge_lambda
            )));
        }
        let first = train.first().ok_or(VsfError::EmptyInput)?;
        let p = first.x.steps();
        let q = self.q;
        let mut gram = DMatrix::<f64>::zeros(p, p);
        let mut cross = DMatrix::<f64>::zeros(p, q);
        for inst in train {
            if inst.x.steps() != p || inst.y.rows() < q {
                return Err(VsfError::ShapeMismatch("inconsistent training windows".into()));
            }
            for v in 0..inst.x.vars() {
                let lags = inst.x.primary(v);
                for i in 0..p {
                    for j in i..p {
                        gram[(i, j)] += lags[i] * lags[j];
                    }
                    for h in 0..q {
                        cross[(i, h)] += lags[i] * inst.y.get(h, v);
                    }
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                gram[(i, j)] = gram[(j, i)];
            }
        }
        let w = ridge_solve(gram, cross, self.ridge_lambda)?;
        self.coefs = Some(
            (0..q)
                .map(|h| (0..p).map(|i| w[(i, h)]).collect())
                .collect(),
        );
        Ok(())
    }

    fn predict(&self, x: &Tensor3, vars: Option<&SubsetMask>) -> Result<Matrix> {
        check_vars(x, vars)?;
        let coefs = self.coefs.as_ref().ok_or(VsfError::NotFitted)?;
        if coefs[0].len() != x.steps() {
            return Err(VsfError::ShapeMismatch(format!(
                "model fitted on {} lags, input has {}",
                coefs[0].len(),
                x.steps()
            )));
        }
        let mut out = Matrix::zeros(x.vars(), self.q);
        for v in 0..x.vars() {
            let lags = x.primary(v);
            for (h, c) in coefs.iter().enumerate() {
                out.set(v, h, c.iter().zip(&lags).map(|(a, b)| a * b).sum());
            }
        }
        Ok(out)
    }
}

/// Forecasts every variable as a learned linear combination of the last observed
/// primary values of all variables.
///
/// Variables absent from the input contribute nothing, which is how this model
/// degrades when only a subset is observed.
#[derive(Debug, Clone)]
pub struct CoupledLinear {
    q: usize,
    ridge_lambda: f64,
    /// `weights[h]` is `N x N`: row = forecast variable, column = input variable.
    weights: Option<Vec<Matrix>>,
}

pub fn coupled_linear_model(q: usize, ridge_lambda: f64) -> CoupledLinear {
    CoupledLinear {
        q,
        ridge_lambda,
        weights: None,
    }
}

impl CoupledLinear {
    pub fn weights(&self) -> Option<&[Matrix]> {
        self.weights.as_deref()
    }
}

impl ForecastModel for CoupledLinear {
    fn name(&self) -> &'static str {
        "coupled_linear"
    }

    fn horizon(&self) -> usize {
        self.q
    }

    fn fit(&mut self, train: &[Instance]) -> Result<()> {
        let first = train.first().ok_or(VsfError::EmptyInput)?;
        let n = first.x.vars();
        let q = self.q;
        let mut gram = DMatrix::<f64>::zeros(n, n);
        let mut cross = DMatrix::<f64>::zeros(n, q * n);
        for inst in train {
            if inst.x.vars() != n || inst.y.rows() < q {
                return Err(VsfError::ShapeMismatch("inconsistent training windows".into()));
            }
            let last_step = inst.x.steps() - 1;
            let last: Vec<f64> = (0..n).map(|v| inst.x.get(last_step, v, 0)).collect();
            for i in 0..n {
                for j in i..n {
                    gram[(i, j)] += last[i] * last[j];
                }
                for h in 0..q {
                    let target = inst.y.row(h);
                    for (out, t) in target.iter().enumerate() {
                        cross[(i, h * n + out)] += last[i] * t;
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                gram[(i, j)] = gram[(j, i)];
            }
        }
        let w = ridge_solve(gram, cross, self.ridge_lambda)?;
        let weights = (0..q)
            .map(|h| {
                let mut m = Matrix::zeros(n, n);
                for out in 0..n {
                    for inp in 0..n {
                        m.set(out, inp, w[(inp, h * n + out)]);
                    }
                }
                m
            })
            .collect();
        self.weights = Some(weights);
        Ok(())
    }

    fn predict(&self, x: &Tensor3, vars: Option<&SubsetMask>) -> Result<Matrix> {
        check_vars(x, vars)?;
        let weights = self.weights.as_ref().ok_or(VsfError::NotFitted)?;
        let n = weights[0].rows();
        let full;
        let ids = match vars {
            Some(mask) if mask.n_total() == n => mask.indices(),
            Some(mask) => {
                return Err(VsfError::ShapeMismatch(format!(
                    "subset over {} variables, model fitted on {n}",
                    mask.n_total()
                )))
            }
            None if x.vars() == n => {
                full = (0..n).collect::<Vec<_>>();
                &full
            }
            None => {
                return Err(VsfError::ShapeMismatch(format!(
                    "input has {} variables, model fitted on {n}; pass the subset",
                    x.vars()
                )))
            }
        };
        let last_step = x.steps() - 1;
        let last: Vec<f64> = (0..x.vars()).map(|v| x.get(last_step, v, 0)).collect();
        let mut out = Matrix::zeros(ids.len(), self.q);
        for (h, w) in weights.iter().enumerate() {
            for (row, &var) in ids.iter().enumerate() {
                let wrow = w.row(var);
                let value: f64 = ids.iter().zip(&last).map(|(&j, l)| wrow[j] * l).sum();
                out.set(row, h, value);
            }
        }
        Ok(out)
    }
}

/// Built-in model choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Persistence,
    Mean,
    LinearAr,
    CoupledLinear,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Persistence,
        ModelKind::Mean,
        ModelKind::LinearAr,
        ModelKind::CoupledLinear,
    ];

    pub fn build(self, q: usize, ridge_lambda: f64) -> Box<dyn ForecastModel> {
        match self {
            ModelKind::Persistence => Box::new(persistence_model(q)),
            ModelKind::Mean => Box::new(mean_model(q)),
            ModelKind::LinearAr => Box::new(linear_ar_model(q, ridge_lambda)),
            ModelKind::CoupledLinear => Box::new(coupled_linear_model(q, ridge_lambda)),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Persistence => "persistence",
            ModelKind::Mean => "mean",
            ModelKind::LinearAr => "linear_ar",
            ModelKind::CoupledLinear => "coupled_linear",
        })
    }
}

impl FromStr for ModelKind {
    type Err = VsfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "persistence" => Ok(ModelKind::Persistence),
            "mean" => Ok(ModelKind::Mean),
            "linear_ar" => Ok(ModelKind::LinearAr),
            "coupled_linear" => Ok(ModelKind::CoupledLinear),
            other => Err(VsfError::InvalidConfig(format!("unknown model {other:?}"))),
        }
    }
}

/// Forecast with every variable present, keeping only the subset rows.
pub fn oracle_forecast(
    model: &dyn ForecastModel,
    instance: &Instance,
    subset: &SubsetMask,
) -> Result<ForecastMatrix> {
    if instance.n_vars() != subset.n_total() {
        return Err(VsfError::ShapeMismatch(format!(
            "oracle needs the full instance: {} variables, subset over {}",
            instance.n_vars(),
            subset.n_total()
        )));
    }
    let full = model.predict(&instance.x, None)?;
    Ok(ForecastMatrix {
        yhat: full.select_rows(subset.indices()),
        subset: Some(subset.clone()),
    })
}

/// Forecast after dropping every variable outside the subset from the input.
pub fn partial_forecast(
    model: &dyn ForecastModel,
    instance: &Instance,
    subset: &SubsetMask,
) -> Result<ForecastMatrix> {
    let x = instance.x.project(subset)?;
    let yhat = model.predict(&x, Some(subset))?;
    Ok(ForecastMatrix {
        yhat,
        subset: Some(subset.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_windows, RawSeries};

    fn instance(rows: &[Vec<f64>], q: usize) -> Instance {
        let x = Tensor3::from_matrix(&Matrix::from_rows(rows).unwrap());
        let n = x.vars();
        Instance {
            x,
            y: Matrix::zeros(q, n),
            origin_index: 0,
        }
    }

    #[test]
    fn persistence() {
        let m = persistence_model(3);
        let out = m.predict(&instance(&[vec![1.0], vec![7.0]], 3).x, None).unwrap();
        assert_eq!(out.row(0), [7.0, 7.0, 7.0]);

        let m = persistence_model(2);
        let out = m
            .predict(&instance(&[vec![0.0, 0.0], vec![1.0, -2.0]], 2).x, None)
            .unwrap();
        assert_eq!(out, Matrix::from_rows(&[vec![1.0, 1.0], vec![-2.0, -2.0]]).unwrap());

        let out = m.predict(&instance(&[vec![4.0], vec![4.0]], 2).x, None).unwrap();
        assert_eq!(out.row(0), [4.0, 4.0]);
    }

    #[test]
    fn window_mean() {
        let m = mean_model(2);
        let x = instance(&[vec![1.0], vec![2.0], vec![3.0]], 2).x;
        assert_eq!(m.predict(&x, None).unwrap().row(0), [2.0, 2.0]);
        let x = instance(&[vec![0.0, 0.0], vec![0.0, 0.0]], 2).x;
        assert!(m.predict(&x, None).unwrap().as_slice().iter().all(|v| *v == 0.0));
        let m = mean_model(4);
        let x = instance(&[vec![4.0]], 4).x;
        assert_eq!(m.predict(&x, None).unwrap().row(0), [4.0; 4]);
    }

    #[test]
    fn linear_ar_identity_dynamics() {
        // Constant per-variable levels: x_{t+q} = x_t for every q.
        let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![1.5, -0.5, 2.0]).collect();
        let s = RawSeries::from_matrix(Matrix::from_rows(&rows).unwrap()).unwrap();
        let w = make_windows(&s, 4, 3, 1).unwrap();
        let mut m = linear_ar_model(3, 0.0);
        m.fit(&w).unwrap();
        let mut mse = 0.0;
        let mut count = 0.0;
        for inst in &w {
            let out = m.predict(&inst.x, None).unwrap();
            for v in 0..3 {
                for h in 0..3 {
                    mse += (out.get(v, h) - inst.y.get(h, v)).powi(2);
                    count += 1.0;
                }
            }
        }
        assert!(mse / count < 1e-8);
    }

    #[test]
    fn linear_ar_ramp_is_exact() {
        let rows: Vec<Vec<f64>> = (0..60).map(|t| vec![t as f64]).collect();
        let s = RawSeries::from_matrix(Matrix::from_rows(&rows).unwrap()).unwrap();
        let w = make_windows(&s, 3, 4, 1).unwrap();
        let mut m = linear_ar_model(4, 0.0);
        m.fit(&w).unwrap();
        // Unseen continuation of the ramp.
        let x = Tensor3::from_vec(3, 1, 1, vec![100.0, 101.0, 102.0]).unwrap();
        let out = m.predict(&x, None).unwrap();
        for h in 0..4 {
            assert!((out.get(0, h) - (103.0 + h as f64)).abs() < 1e-6);
        }
    }

    #[test]
    fn linear_ar_shrinks_to_zero() {
        let rows: Vec<Vec<f64>> = (0..30).map(|t| vec![(t as f64 * 0.3).sin()]).collect();
        let s = RawSeries::from_matrix(Matrix::from_rows(&rows).unwrap()).unwrap();
        let w = make_windows(&s, 4, 2, 1).unwrap();
        let mut m = linear_ar_model(2, 1e12);
        m.fit(&w).unwrap();
        let out = m.predict(&w[0].x, None).unwrap();
        assert!(out.as_slice().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn linear_ar_zero_design_is_singular() {
        let rows: Vec<Vec<f64>> = (0..10).map(|_| vec![0.0, 0.0]).collect();
        let s = RawSeries::from_matrix(Matrix::from_rows(&rows).unwrap()).unwrap();
        let w = make_windows(&s, 3, 2, 1).unwrap();
        assert!(matches!(
            linear_ar_model(2, 0.0).fit(&w),
            Err(VsfError::SingularSystem)
        ));
        assert!(matches!(
            linear_ar_model(2, 0.0).predict(&w[0].x, None),
            Err(VsfError::NotFitted)
        ));
    }

    #[test]
    fn oracle_and_partial_shapes() {
        let rows: Vec<Vec<f64>> = (0..3).map(|t| (0..207).map(|v| (t * v) as f64).collect()).collect();
        let inst = instance(&rows, 12);
        let subset = SubsetMask::new((0..31).map(|i| i * 6).collect(), 207).unwrap();
        let m = persistence_model(12);
        let o = oracle_forecast(&m, &inst, &subset).unwrap();
        assert_eq!((o.n_rows(), o.horizon()), (31, 12));
        let p = partial_forecast(&m, &inst, &subset).unwrap();
        assert_eq!(o, p);
        for (row, &var) in subset.indices().iter().enumerate() {
            assert_eq!(o.yhat.get(row, 0), inst.x.get(2, var, 0));
        }

        let full = SubsetMask::full(207);
        let o = oracle_forecast(&m, &inst, &full).unwrap();
        assert_eq!(o.yhat, m.predict(&inst.x, None).unwrap());

        let one = SubsetMask::new(vec![5], 207).unwrap();
        assert_eq!(partial_forecast(&m, &inst, &one).unwrap().n_rows(), 1);
    }

    #[test]
    fn oracle_requires_full_instance() {
        let inst = instance(&[vec![1.0, 2.0]], 2);
        let subset = SubsetMask::new(vec![0], 3).unwrap();
        assert!(matches!(
            oracle_forecast(&persistence_model(2), &inst, &subset),
            Err(VsfError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn coupled_linear_uses_other_variables() {
        // Variable 1 tomorrow equals variable 0 today.
        let mut rows = Vec::new();
        for t in 0..200 {
            let a = ((t as f64) * 0.7).sin();
            let prev = ((t as f64 - 1.0) * 0.7).sin();
            rows.push(vec![a, prev]);
        }
        let s = RawSeries::from_matrix(Matrix::from_rows(&rows).unwrap()).unwrap();
        let w = make_windows(&s, 2, 1, 1).unwrap();
        let mut m = coupled_linear_model(1, 1e-9);
        m.fit(&w).unwrap();
        let inst = &w[10];
        let full = oracle_forecast(&m, inst, &SubsetMask::new(vec![1], 2).unwrap()).unwrap();
        assert!((full.yhat.get(0, 0) - inst.y.get(0, 1)).abs() < 1e-4);
        let partial = partial_forecast(&m, inst, &SubsetMask::new(vec![1], 2).unwrap()).unwrap();
        assert!((partial.yhat.get(0, 0) - full.yhat.get(0, 0)).abs() > 1e-3);
    }

    #[test]
    fn model_kind_round_trip() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.to_string().parse::<ModelKind>().unwrap(), kind);
            assert_eq!(kind.build(3, 0.1).name(), kind.to_string());
        }
        assert!("lstm".parse::<ModelKind>().is_err());
    }
}
