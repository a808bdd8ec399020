//! Nonparametric bootstrap over notes.
//!
//! Replicate `i` draws its resample from an rng keyed by `(seed, i)` alone, so
//! replicates can run in any order on any number of threads and still give the
//! same estimate.
//!
//! ```
//! use deidaudit::stats::bootstrap;
//!
//! let xs = [1.0, 2.0, 3.0, 4.0];
//! let mean = |s: &[&f64]| Some(s.iter().copied().sum::<f64>() / s.len() as f64);
//! let est = bootstrap(&xs, mean, 2000, 7).unwrap();
//! assert_eq!(est.point, 2.5);
//! assert!(est.ci_low < 2.5 && 2.5 < est.ci_high);
//! assert_eq!(est, bootstrap(&xs, mean, 2000, 7).unwrap());
//! ```

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::rng::{derive_key, keyed_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    /// Statistic on the full sample.
    pub point: f64,
    /// Sample standard deviation (n − 1 denominator) of the defined replicates.
    pub standard_error: f64,
    /// 2.5th and 97.5th percentiles (linear interpolation between order statistics).
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_resamples: usize,
    /// Replicates on which the statistic was undefined and which were dropped.
    pub n_undefined: usize,
    pub seed: u64,
    /// Set when the percentile interval excludes the point estimate, which can
    /// happen for non-monotone statistics on tiny samples.
    pub point_outside_ci: bool,
}

/// Percentile with linear interpolation between closest ranks (the common
/// "type 7" definition). `sorted` must be non-empty and ascending.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sample standard deviation with n − 1 denominator; 0 for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 || values.iter().all(|v| *v == values[0]) {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Indices of the `replicate`-th resample of `n` items.
pub fn resample_indices(n: usize, seed: u64, replicate: u64) -> Vec<usize> {
    let mut rng = keyed_rng(derive_key(seed, &[replicate]));
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn summarize(point: f64, mut reps: Vec<f64>, n_resamples: usize, seed: u64) -> Result<BootstrapEstimate, StatsError> {
    let n_undefined = n_resamples - reps.len();
    if reps.is_empty() {
        return Err(StatsError::AllResamplesUndefined);
    }
    if n_undefined > 0 {
        log::warn!("bootstrap: statistic undefined on {n_undefined} of {n_resamples} resamples");
    }
    let standard_error = sample_sd(&reps);
    reps.sort_by(f64::total_cmp);
    let ci_low = percentile(&reps, 0.025);
    let ci_high = percentile(&reps, 0.975);
    Ok(BootstrapEstimate {
        point,
        standard_error,
        ci_low,
        ci_high,
        n_resamples,
        n_undefined,
        seed,
        point_outside_ci: point < ci_low || point > ci_high,
    })
}

/// Bootstraps several statistics over the same resamples.
pub fn bootstrap_many<T, F>(items: &[T], stats: &[F], n_resamples: usize, seed: u64) -> Result<Vec<BootstrapEstimate>, StatsError>
where
    T: Sync,
    F: Fn(&[&T]) -> Option<f64> + Sync,
{
    if items.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if n_resamples == 0 {
        return Err(StatsError::ZeroResamples);
    }
    let full: Vec<&T> = items.iter().collect();
    let points = stats
        .iter()
        .map(|f| f(&full).ok_or(StatsError::UndefinedPoint))
        .collect::<Result<Vec<f64>, _>>()?;
    let replicates: Vec<Vec<Option<f64>>> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|i| {
            let sample: Vec<&T> = resample_indices(items.len(), seed, i)
                .into_iter()
                .map(|j| &items[j])
                .collect();
            stats.iter().map(|f| f(&sample)).collect()
        })
        .collect();
    points
        .into_iter()
        .enumerate()
        .map(|(s, point)| {
            let reps: Vec<f64> = replicates.iter().filter_map(|r| r[s]).collect();
            summarize(point, reps, n_resamples, seed)
        })
        .collect()
}

/// Bootstraps one statistic of a multiset of items (notes).
pub fn bootstrap<T, F>(items: &[T], stat: F, n_resamples: usize, seed: u64) -> Result<BootstrapEstimate, StatsError>
where
    T: Sync,
    F: Fn(&[&T]) -> Option<f64> + Sync,
{
    Ok(bootstrap_many(items, &[stat], n_resamples, seed)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_statistic() {
        let est = bootstrap(&[1, 2, 3], |_| Some(0.7), 500, 1).unwrap();
        assert_eq!((est.standard_error, est.ci_low, est.ci_high), (0.0, 0.7, 0.7));
    }

    #[test]
    fn percentile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&xs, 0.5), 3.0);
        assert!((percentile(&xs, 0.1) - 1.4).abs() < 1e-15);
        assert_eq!(percentile(&[2.0], 0.975), 2.0);
    }

    #[test]
    fn undefined_replicates_are_counted() {
        // undefined whenever the resample contains item 0
        let stat = |s: &[&u8]| (!s.contains(&&0)).then_some(1.0);
        let est = bootstrap(&[1u8, 2, 3, 0], |s: &[&u8]| Some(s.len() as f64), 10, 3).unwrap();
        assert_eq!(est.n_undefined, 0);
        assert_eq!(bootstrap(&[0u8, 1], stat, 50, 3), Err(StatsError::UndefinedPoint));
        let est = bootstrap(&[1u8, 2, 0], |s: &[&u8]| Some(s.iter().filter(|&&&x| x == 0).count() as f64).filter(|&c| c < 2.0), 200, 3).unwrap();
        assert!(est.n_undefined > 0 && est.n_undefined < 200);
    }

    #[test]
    fn errors() {
        let empty: [u8; 0] = [];
        assert_eq!(bootstrap(&empty, |_| Some(1.0), 10, 0), Err(StatsError::EmptySample));
        assert_eq!(bootstrap(&[1], |_| Some(1.0), 0, 0), Err(StatsError::ZeroResamples));
    }

    #[test]
    fn independent_of_thread_count() {
        let xs: Vec<f64> = (0..50).map(|i| (i * i % 17) as f64).collect();
        let mean = |s: &[&f64]| Some(s.iter().copied().sum::<f64>() / s.len() as f64);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| bootstrap(&xs, mean, 300, 11).unwrap());
        let b = bootstrap(&xs, mean, 300, 11).unwrap();
        assert_eq!(a, b);
    }
}
