//! Log-log slope fits of attack cost against the number of episodes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RunSummary;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScalingError {
    #[error("need at least 3 distinct episode counts, got {0}")]
    TooFewHorizons(usize),
    #[error("need at least 3 seeds at every episode count; T={episodes} has {seeds}")]
    TooFewSeeds { episodes: u64, seeds: usize },
    #[error("no fittable series for {0}")]
    NothingFittable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ContaminationAmount,
    RewardManipulations,
    ActionManipulations,
    TrueRegret,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::ContaminationAmount,
        Metric::RewardManipulations,
        Metric::ActionManipulations,
        Metric::TrueRegret,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ContaminationAmount => "contamination_amount",
            Metric::RewardManipulations => "reward_manipulations",
            Metric::ActionManipulations => "action_manipulations",
            Metric::TrueRegret => "true_regret",
        }
    }

    pub fn of(self, run: &RunSummary) -> f64 {
        match self {
            Metric::ContaminationAmount => run.ledger.contamination_amount,
            Metric::RewardManipulations => run.ledger.reward_manipulations as f64,
            Metric::ActionManipulations => run.ledger.action_manipulations as f64,
            Metric::TrueRegret => run.final_regret,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFit {
    pub seed: u64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub metric: Metric,
    /// Median over seeds of the per-seed slope.
    pub exponent: f64,
    /// Median over seeds of the per-seed intercept (natural log scale).
    pub intercept: f64,
    /// Median over seeds of the per-seed R^2.
    pub r_squared: f64,
    pub per_seed: Vec<SeedFit>,
    /// Seeds with a non-positive cost somewhere.
    pub excluded_seeds: Vec<u64>,
}

/// Ordinary least squares of `y` on `x`: `(slope, intercept, r^2)`.
pub fn ols(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        let ss_res: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    (slope, intercept, r2)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fits `log(metric)` against `log(T)` per seed and reports medians.
pub fn fit_scaling(runs: &[RunSummary], metric: Metric) -> Result<ScalingFit, ScalingError> {
    let mut by_t: BTreeMap<u64, usize> = BTreeMap::new();
    let mut by_seed: BTreeMap<u64, Vec<(u64, f64)>> = BTreeMap::new();
    for run in runs {
        *by_t.entry(run.episodes).or_default() += 1;
        by_seed.entry(run.seed).or_default().push((run.episodes, metric.of(run)));
    }
    if by_t.len() < 3 {
        return Err(ScalingError::TooFewHorizons(by_t.len()));
    }
    if let Some((&episodes, &seeds)) = by_t.iter().find(|(_, &n)| n < 3) {
        return Err(ScalingError::TooFewSeeds { episodes, seeds });
    }
    let mut per_seed = Vec::new();
    let mut excluded = Vec::new();
    for (seed, series) in by_seed {
        if series.iter().any(|&(t, c)| t == 0 || c.is_nan() || c <= 0.0) {
            log::warn!("{}: seed {seed} has a zero cost; excluded from the fit", metric.name());
            excluded.push(seed);
            continue;
        }
        let points: Vec<(f64, f64)> = series.iter().map(|&(t, c)| ((t as f64).ln(), c.ln())).collect();
        let distinct = points.iter().map(|p| p.0.to_bits()).collect::<std::collections::BTreeSet<_>>();
        if distinct.len() < 2 {
            excluded.push(seed);
            continue;
        }
        let (slope, intercept, r_squared) = ols(&points);
        per_seed.push(SeedFit { seed, slope, intercept, r_squared });
    }
    if per_seed.is_empty() {
        return Err(ScalingError::NothingFittable(metric.name().to_string()));
    }
    let mut slopes: Vec<f64> = per_seed.iter().map(|f| f.slope).collect();
    let mut intercepts: Vec<f64> = per_seed.iter().map(|f| f.intercept).collect();
    let mut r2: Vec<f64> = per_seed.iter().map(|f| f.r_squared).collect();
    Ok(ScalingFit {
        metric,
        exponent: median(&mut slopes),
        intercept: median(&mut intercepts),
        r_squared: median(&mut r2),
        per_seed,
        excluded_seeds: excluded,
    })
}
