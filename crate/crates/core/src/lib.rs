//! Forecasting when only a subset of the training variables is observed at
//! inference time: subset-restricted neighbor retrieval, spliced inputs and
//! weighted ensembling of the resulting forecasts.

pub mod config;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod retrieval;
pub mod scalable;
pub mod subset;
pub mod synthetic;
pub mod tensor;

pub use config::RunConfig;
pub use dataset::{Instance, Normalizer, PreparedData, RawSeries};
pub use ensemble::{EnsembleConfig, Scheme, WeightVector};
pub use error::{Result, VsfError};
pub use eval::EvalReport;
pub use forecast::{ForecastModel, ModelKind};
pub use retrieval::{NeighborSet, RetrievalCorpus};
pub use subset::SubsetMask;
pub use tensor::{Matrix, Tensor3};
