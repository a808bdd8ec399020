//! Pearson correlation with a permutation p-value.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::rng::{derive_key, keyed_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided: `(1 + #{|r*| ≥ |r|}) / (1 + n_permutations)`.
    pub p_value: f64,
    pub n: usize,
    pub n_permutations: usize,
    /// True when no permutation reached |r|, so `p_value` is the floor
    /// `1 / (n_permutations + 1)` and the true p is below it.
    pub at_floor: bool,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Correlates a per-template feature with per-template average recall.
pub fn correlate(feature: &[f64], recall: &[f64], n_permutations: usize, seed: u64) -> Result<Correlation, StatsError> {
    if feature.len() != recall.len() {
        return Err(StatsError::LengthMismatch(feature.len(), recall.len()));
    }
    if feature.len() < 3 {
        return Err(StatsError::TooFewPoints(feature.len()));
    }
    if feature.iter().chain(recall).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    if feature.iter().all(|v| *v == feature[0]) {
        return Err(StatsError::ConstantFeature);
    }
    let r = pearson(feature, recall).ok_or(StatsError::ConstantResponse)?;
    let tol = 1e-12;
    let hits = (0..n_permutations as u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = keyed_rng(derive_key(seed, &[i]));
            let mut y = recall.to_vec();
            y.shuffle(&mut rng);
            pearson(feature, &y).is_some_and(|rs| rs.abs() >= r.abs() - tol)
        })
        .count();
    Ok(Correlation {
        r,
        p_value: (hits + 1) as f64 / (n_permutations + 1) as f64,
        n: feature.len(),
        n_permutations,
        at_floor: hits == 0,
    })
}
