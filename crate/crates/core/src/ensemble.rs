//! Seed ensembles. Each seed is an independent run; results are collected in
//! seed order so they do not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gas::{
    norm_growth_exponent, run_observed, saturation_time, significance_time, Pairing, RunConfig,
};
use crate::maps::CollisionModel;
use crate::spectral::{default_window, fit_growth, linear_delta, GrowthFit, ModeIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedTimes {
    pub seed: u64,
    pub saturation: Option<usize>,
    pub significance: Option<usize>,
    /// Per-step log-growth of the whole-gas tangent norm before saturation.
    pub norm_exponent: Option<f64>,
}

/// Saturation and significance times for every seed in `seeds`.
pub fn time_ensemble(
    model: &CollisionModel,
    n_particles: usize,
    steps: usize,
    pairing: Pairing,
    seeds: &[u64],
) -> Result<Vec<SeedTimes>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = RunConfig::new(n_particles, steps, seed, pairing);
            let diags = run_observed(&cfg, model, |_, _| {})?;
            let saturation = saturation_time(&diags, n_particles);
            let end = saturation.unwrap_or(steps);
            // Needs two affected particles before the norm can grow.
            let norm_exponent = norm_growth_exponent(&diags, 1, end);
            Ok(SeedTimes {
                seed,
                saturation,
                significance: significance_time(&diags, cfg.epsilon),
                norm_exponent,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedGrowth {
    pub seed: u64,
    pub window: (usize, usize),
    pub fit: GrowthFit,
}

/// Fits `ln|Δñ_k(t)|` (tangent-linear) over the default pre-saturation window
/// for every seed and every mode. Output is indexed `[seed][mode]`.
pub fn growth_ensemble(
    model: &CollisionModel,
    n_particles: usize,
    pairing: Pairing,
    modes: &[ModeIndex],
    seeds: &[u64],
) -> Result<Vec<Vec<SeedGrowth>>> {
    let steps = (n_particles as f64).log2().ceil() as usize;
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = RunConfig::new(n_particles, steps, seed, pairing);
            let mut deltas = vec![Vec::with_capacity(steps + 1); modes.len()];
            let diags = run_observed(&cfg, model, |run, _| {
                let s = run.state();
                for (series, &mode) in deltas.iter_mut().zip(modes) {
                    series.push(linear_delta(&s.points, &s.tangents, mode));
                }
            })?;
            let window = default_window(n_particles, saturation_time(&diags, n_particles), steps);
            deltas
                .iter()
                .map(|series| {
                    Ok(SeedGrowth {
                        seed,
                        window,
                        fit: fit_growth(series, window)?,
                    })
                })
                .collect()
        })
        .collect()
}

/// Median of finite values; `NaN` when there are none.
pub fn median_of(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    crate::gas::median(&mut v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ensemble_results_are_in_seed_order() {
        let model = CollisionModel::cat();
        let seeds: Vec<u64> = (10..16).collect();
        let out = time_ensemble(&model, 64, 20, Pairing::Random, &seeds).unwrap();
        assert_eq!(out.iter().map(|s| s.seed).collect::<Vec<_>>(), seeds);
        let again = time_ensemble(&model, 64, 20, Pairing::Random, &seeds).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn norm_grows_faster_than_rounded_exponent() {
        let model = CollisionModel::cat();
        let seeds: Vec<u64> = (0..100).collect();
        for pairing in [Pairing::Random, Pairing::TreeFaithful] {
            let out = time_ensemble(&model, 1024, 30, pairing, &seeds).unwrap();
            let med = median_of(out.iter().filter_map(|s| s.norm_exponent));
            assert!(med >= 0.18, "{pairing:?}: {med}");
        }
    }

    #[test]
    fn random_pairing_saturates_within_twice_log2n() {
        let model = CollisionModel::cat();
        let seeds: Vec<u64> = (0..100).collect();
        let out = time_ensemble(&model, 1024, 40, Pairing::Random, &seeds).unwrap();
        let within = out.iter().filter(|s| s.saturation.is_some_and(|t| t <= 20)).count();
        assert!(within >= 95, "{within}");
        let sig = out
            .iter()
            .filter(|s| s.significance.is_some_and(|t| (10..=30).contains(&t)))
            .count();
        assert!(sig >= 90, "{sig}");
    }

    #[test]
    fn growth_is_positive_for_all_low_modes() {
        let model = CollisionModel::cat();
        let modes = crate::spectral::modes_up_to(4);
        let seeds: Vec<u64> = (0..100).collect();
        let fits = growth_ensemble(&model, 1024, Pairing::TreeFaithful, &modes, &seeds).unwrap();
        for (j, mode) in modes.iter().enumerate() {
            // window starts at t = 2, where four particles are affected
            assert_eq!(fits[0][j].window.0, 2);
            let med = median_of(fits.iter().map(|per_seed| per_seed[j].fit.slope));
            assert!(med > 0.0, "{mode:?}: {med}");
        }
    }
}
