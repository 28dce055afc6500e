//! Shared fixtures for the benchmarks in `benches/`.

use vsf_core::config::RunConfig;
use vsf_core::dataset::{prepare, PreparedData};
use vsf_core::synthetic::MixtureSpec;

/// The 40-variable mixture benchmark, normalized and windowed with default settings.
pub fn mixture(t_len: usize) -> PreparedData {
    let series = MixtureSpec {
        t_len,
        ..Default::default()
    }
    .generate(7)
    .expect("synthetic series");
    prepare(&series, &RunConfig::default().prepare_options()).expect("prepared data")
}
