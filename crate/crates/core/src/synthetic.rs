//! Seeded synthetic benchmarks driven by latent linear dynamics.
//!
//! Latent state follows `z[t+1] = A z[t] + e[t]` and each observed variable is a
//! noisy linear read-out `x[t] = L z[t] + n[t]`, optionally with sparse spikes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::RawSeries;
use crate::error::{Result, VsfError};
use crate::tensor::Matrix;

/// Linear state-space generator.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSystem {
    /// `K x K` transition.
    pub transition: Matrix,
    /// `N x K` read-out.
    pub loadings: Matrix,
    pub state_noise: f64,
    pub obs_noise: f64,
    /// Probability that an observation receives an additive spike.
    pub spike_prob: f64,
    pub spike_scale: f64,
}

impl LatentSystem {
    pub fn n_factors(&self) -> usize {
        self.transition.rows()
    }

    pub fn n_vars(&self) -> usize {
        self.loadings.rows()
    }

    /// Simulates `t_len` observations after a burn-in of 200 steps.
    pub fn simulate(&self, t_len: usize, seed: u64) -> Result<RawSeries> {
        let k = self.n_factors();
        let n = self.n_vars();
        if self.transition.cols() != k || self.loadings.cols() != k {
            return Err(VsfError::ShapeMismatch("transition and loadings disagree on factor count".into()));
        }
        if t_len == 0 {
            return Err(VsfError::EmptyInput);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let burn_in = 200;
        let mut z = vec![0.0; k];
        let mut next = vec![0.0; k];
        let mut values = Matrix::zeros(t_len, n);
        for t in 0..burn_in + t_len {
            for (i, slot) in next.iter_mut().enumerate() {
                let drift: f64 = (0..k).map(|j| self.transition.get(i, j) * z[j]).sum();
                let e: f64 = rng.sample(StandardNormal);
                *slot = drift + self.state_noise * e;
            }
            std::mem::swap(&mut z, &mut next);
            if t < burn_in {
                continue;
            }
            let row = values.row_mut(t - burn_in);
            for (v, x) in row.iter_mut().enumerate() {
                let signal: f64 = (0..k).map(|j| self.loadings.get(v, j) * z[j]).sum();
                let e: f64 = rng.sample(StandardNormal);
                *x = signal + self.obs_noise * e;
                if self.spike_prob > 0.0 && rng.random::<f64>() < self.spike_prob {
                    let s: f64 = rng.sample(StandardNormal);
                    *x += self.spike_scale * s;
                }
            }
        }
        RawSeries::from_matrix(values)
    }
}

/// Noisy mixtures of a few latent factors: two damped rotations and one AR(1) factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureSpec {
    pub n_vars: usize,
    pub t_len: usize,
    pub periods: [f64; 2],
    pub damping: f64,
    pub ar_coef: f64,
    pub state_noise: f64,
    pub obs_noise: f64,
    pub spike_prob: f64,
    pub spike_scale: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            n_vars: 40,
            t_len: 3000,
            periods: [24.0, 40.0],
            damping: 0.995,
            ar_coef: 0.95,
            state_noise: 0.15,
            obs_noise: 0.05,
            spike_prob: 0.0,
            spike_scale: 0.0,
        }
    }
}

impl MixtureSpec {
    pub const N_FACTORS: usize = 5;

    /// The generator, with loadings drawn from `seed`.
    pub fn system(&self, seed: u64) -> LatentSystem {
        let k = Self::N_FACTORS;
        let mut a = Matrix::zeros(k, k);
        for (block, period) in self.periods.iter().enumerate() {
            let theta = 2.0 * std::f64::consts::PI / period;
            let (s, c) = theta.sin_cos();
            let o = 2 * block;
            a.set(o, o, self.damping * c);
            a.set(o, o + 1, -self.damping * s);
            a.set(o + 1, o, self.damping * s);
            a.set(o + 1, o + 1, self.damping * c);
        }
        a.set(4, 4, self.ar_coef);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let loadings = Matrix::from_vec(
            self.n_vars,
            k,
            (0..self.n_vars * k).map(|_| normal.sample(&mut rng)).collect(),
        )
        .expect("loadings shape");
        LatentSystem {
            transition: a,
            loadings,
            state_noise: self.state_noise,
            obs_noise: self.obs_noise,
            spike_prob: self.spike_prob,
            spike_scale: self.spike_scale,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<RawSeries> {
        self.system(seed).simulate(self.t_len, seed)
    }

    /// The default mixture with 2% of observations hit by spikes of scale 8.
    pub fn contaminated() -> Self {
        Self {
            spike_prob: 0.02,
            spike_scale: 8.0,
            ..Self::default()
        }
    }
}

/// Variables grouped into clusters, each loading on its own factor. Factor `i`
/// is driven by its ring neighbours: `z_i <- a z_i + f z_{i+1} + g z_{i-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockSpec {
    pub n_clusters: usize,
    pub per_cluster: usize,
    pub t_len: usize,
    pub self_coef: f64,
    pub forward: f64,
    pub backward: f64,
    pub state_noise: f64,
    pub obs_noise: f64,
}

impl Default for BlockSpec {
    fn default() -> Self {
        Self {
            n_clusters: 8,
            per_cluster: 8,
            t_len: 3000,
            self_coef: 0.0,
            forward: 0.97,
            backward: 0.0,
            state_noise: 1.0,
            obs_noise: 0.15,
        }
    }
}

impl BlockSpec {
    pub fn n_vars(&self) -> usize {
        self.n_clusters * self.per_cluster
    }

    /// Planted cluster of every variable.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.n_vars()).map(|v| v / self.per_cluster).collect()
    }

    pub fn system(&self, seed: u64) -> LatentSystem {
        let k = self.n_clusters;
        let mut a = Matrix::zeros(k, k);
        for i in 0..k {
            a.set(i, i, self.self_coef);
            if k > 1 {
                let up = (i + 1) % k;
                let down = (i + k - 1) % k;
                a.set(i, up, a.get(i, up) + self.forward);
                a.set(i, down, a.get(i, down) + self.backward);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
        let mut loadings = Matrix::zeros(self.n_vars(), k);
        for (v, &c) in self.labels().iter().enumerate() {
            loadings.set(v, c, rng.random_range(0.8..1.2));
        }
        LatentSystem {
            transition: a,
            loadings,
            state_noise: self.state_noise,
            obs_noise: self.obs_noise,
            spike_prob: 0.0,
            spike_scale: 0.0,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<RawSeries> {
        self.system(seed).simulate(self.t_len, seed)
    }
}

/// Seasonal series: every variable repeats a random harmonic profile each period,
/// with slowly drifting per-period level and amplitude shared across variables,
/// plus white observation noise. Period effects are interpolated linearly so the
/// series has no jumps at period boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeasonalSpec {
    pub n_vars: usize,
    pub t_len: usize,
    pub period: usize,
    pub harmonics: usize,
    /// AR(1) coefficient of the per-period effects.
    pub drift_coef: f64,
    pub drift_scale: f64,
    pub obs_noise: f64,
}

impl Default for SeasonalSpec {
    fn default() -> Self {
        Self {
            n_vars: 20,
            t_len: 1500,
            period: 200,
            harmonics: 3,
            drift_coef: 0.6,
            drift_scale: 0.0,
            obs_noise: 0.005,
        }
    }
}

impl SeasonalSpec {
    pub fn generate(&self, seed: u64) -> Result<RawSeries> {
        if self.t_len == 0 || self.n_vars == 0 {
            return Err(VsfError::EmptyInput);
        }
        if self.period < 2 {
            return Err(VsfError::InvalidConfig("period must be at least 2".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = self.harmonics.max(1);
        // Per-variable harmonic coefficients and sensitivities to the period effects.
        let coefs: Vec<Vec<(f64, f64)>> = (0..self.n_vars)
            .map(|_| {
                (0..h)
                    .map(|k| {
                        let scale = 1.0 / (k + 1) as f64;
                        (scale * rng.sample::<f64, _>(StandardNormal), scale * rng.sample::<f64, _>(StandardNormal))
                    })
                    .collect()
            })
            .collect();
        let sens: Vec<(f64, f64)> = (0..self.n_vars)
            .map(|_| (rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let n_periods = self.t_len / self.period + 2;
        let mut effects = Vec::with_capacity(n_periods);
        let (mut amp, mut level) = (0.0f64, 0.0f64);
        let innov = self.drift_scale * (1.0 - self.drift_coef * self.drift_coef).max(0.0).sqrt();
        for _ in 0..n_periods {
            amp = self.drift_coef * amp + innov * rng.sample::<f64, _>(StandardNormal);
            level = self.drift_coef * level + innov * rng.sample::<f64, _>(StandardNormal);
            effects.push((amp, level));
        }
        let mut values = Matrix::zeros(self.t_len, self.n_vars);
        for t in 0..self.t_len {
            let day = t / self.period;
            let frac = (t % self.period) as f64 / self.period as f64;
            let (a0, l0) = effects[day];
            let (a1, l1) = effects[day + 1];
            let amp = a0 + (a1 - a0) * frac;
            let level = l0 + (l1 - l0) * frac;
            let phase = 2.0 * std::f64::consts::PI * frac;
            for v in 0..self.n_vars {
                let profile: f64 = coefs[v]
                    .iter()
                    .enumerate()
                    .map(|(k, (c, s))| {
                        let w = phase * (k + 1) as f64;
                        c * w.cos() + s * w.sin()
                    })
                    .sum();
                let e: f64 = rng.sample(StandardNormal);
                let x = profile * (1.0 + sens[v].0 * amp) + sens[v].1 * level + self.obs_noise * e;
                values.set(t, v, x);
            }
        }
        RawSeries::from_matrix(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let spec = MixtureSpec {
            t_len: 50,
            ..Default::default()
        };
        let a = spec.generate(3).unwrap();
        let b = spec.generate(3).unwrap();
        let c = spec.generate(4).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        assert_eq!(a.n_vars(), 40);
        assert_eq!(a.len(), 50);
    }

    #[test]
    fn block_labels_and_ring_coupling() {
        let spec = BlockSpec {
            self_coef: 0.5,
            forward: 0.4,
            backward: -0.3,
            ..Default::default()
        };
        assert_eq!(spec.labels()[..9], [0, 0, 0, 0, 0, 0, 0, 0, 1]);
        let sys = spec.system(0);
        assert_eq!(sys.transition.get(0, 1), 0.4);
        assert_eq!(sys.transition.get(0, 7), -0.3);
        assert_eq!(sys.transition.get(0, 0), 0.5);
        assert_eq!(sys.transition.get(0, 2), 0.0);
        assert_eq!(sys.loadings.get(9, 0), 0.0);
        assert!(sys.loadings.get(9, 1) >= 0.8);
    }

    #[test]
    fn seasonal_repeats_each_period_without_noise() {
        let spec = SeasonalSpec {
            t_len: 60,
            period: 20,
            obs_noise: 0.0,
            ..Default::default()
        };
        let x = spec.generate(1).unwrap();
        for t in 0..40 {
            for v in 0..spec.n_vars {
                assert!((x.values().get(t, v) - x.values().get(t + 20, v)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn contaminated_mixture_has_spikes() {
        let spec = MixtureSpec::contaminated();
        assert!(spec.spike_prob > 0.0 && spec.spike_scale > 0.0);
        assert_eq!(spec.n_vars, MixtureSpec::default().n_vars);
    }

    #[test]
    fn rotation_blocks_are_damped() {
        let sys = MixtureSpec::default().system(0);
        let a = &sys.transition;
        let det = a.get(0, 0) * a.get(1, 1) - a.get(0, 1) * a.get(1, 0);
        assert!((det - 0.995f64.powi(2)).abs() < 1e-12);
    }
}
