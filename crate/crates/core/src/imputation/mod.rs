//! Gap filling: nearest-day, linear and natural cubic spline imputers, the
//! random patch mask used for evaluation, and normalized-RMSE scoring.
//!
//! Every imputer returns observed positions bit-identical to the input. Gaps
//! before the first or after the last observation are filled by extending the
//! nearest observed value.

mod spline;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, MetricsError, NormStats};
use crate::series::{CarbonSeries, MaskError, MaskedSeries, Resolution};

pub use spline::NaturalCubicSpline;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImputeError {
    #[error("every value is missing")]
    AllMissing,
    #[error("mask plan cannot reach {target} masked positions with patch length {patch} in a series of {length}")]
    InfeasibleTarget {
        target: usize,
        patch: usize,
        length: usize,
    },
    #[error("target fraction must be in (0, 1) and patch length positive")]
    InvalidPlan,
    #[error("nothing is masked")]
    NoMaskedPositions,
    #[error("ground truth has missing values")]
    IncompleteTruth,
    #[error("unknown imputation method `{0}`")]
    UnknownMethod(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImputeMethod {
    Naive,
    Linear,
    CubicSpline,
}

impl ImputeMethod {
    pub const ALL: [ImputeMethod; 3] = [
        ImputeMethod::Naive,
        ImputeMethod::Linear,
        ImputeMethod::CubicSpline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ImputeMethod::Naive => "naive",
            ImputeMethod::Linear => "linear",
            ImputeMethod::CubicSpline => "cubic-spline",
        }
    }
}

impl std::str::FromStr for ImputeMethod {
    type Err = ImputeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ImputeMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ImputeError::UnknownMethod(s.to_string()))
    }
}

/// Random fixed-length patch masking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub target_fraction: f64,
    pub patch_length: usize,
    pub seed: u64,
}

impl MaskPlan {
    /// Default patch length: one hour of 5-minute data, four hours of hourly.
    pub fn default_patch_length(resolution: Resolution) -> usize {
        match resolution {
            Resolution::Hourly => 4,
            Resolution::FiveMinute => 12,
        }
    }

    pub fn new(target_fraction: f64, patch_length: usize, seed: u64) -> Self {
        Self {
            target_fraction,
            patch_length,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedMask {
    /// `true` = observed.
    pub mask: Vec<bool>,
    pub masked_count: usize,
    pub achieved_fraction: f64,
}

/// Places `ceil(floor(f * length) / patch)` patches uniformly at random over
/// all placements in which patches neither overlap nor touch, so each patch
/// shows up as its own run. At least one position stays observed.
pub fn generate_mask(length: usize, plan: &MaskPlan) -> Result<GeneratedMask, ImputeError> {
    let p = plan.patch_length;
    if p == 0 || !(plan.target_fraction > 0.0 && plan.target_fraction < 1.0) {
        return Err(ImputeError::InvalidPlan);
    }
    let target = (plan.target_fraction * length as f64 + 1e-9).floor() as usize;
    let infeasible = ImputeError::InfeasibleTarget {
        target,
        patch: p,
        length,
    };
    if p >= length {
        return Err(infeasible);
    }
    let patches = target.div_ceil(p);
    let mut mask = vec![true; length];
    if patches > 0 {
        // With gaps of at least one, patch i starts at b_i + i * p where b is
        // a strictly increasing draw from 0..=length - patches * p.
        let slots = (length + 1)
            .checked_sub(patches * p)
            .ok_or(infeasible.clone())?;
        if patches > slots || patches * p >= length {
            return Err(infeasible);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        let mut picks = sample(&mut rng, slots, patches).into_vec();
        picks.sort_unstable();
        for (i, b) in picks.into_iter().enumerate() {
            let start = b + i * p;
            mask[start..start + p].iter_mut().for_each(|m| *m = false);
        }
    }
    let masked_count = patches * p;
    Ok(GeneratedMask {
        mask,
        masked_count,
        achieved_fraction: masked_count as f64 / length.max(1) as f64,
    })
}

fn observed(masked: &MaskedSeries) -> Result<(Vec<usize>, Vec<f64>), ImputeError> {
    let (idx, vals): (Vec<usize>, Vec<f64>) = masked
        .series()
        .values()
        .iter()
        .zip(masked.mask())
        .enumerate()
        .filter_map(|(i, (v, &m))| if m { v.map(|x| (i, x)) } else { None })
        .unzip();
    if idx.is_empty() {
        return Err(ImputeError::AllMissing);
    }
    Ok((idx, vals))
}

fn finish(masked: &MaskedSeries, mut fill: impl FnMut(usize) -> f64) -> CarbonSeries {
    let values = masked
        .series()
        .values()
        .iter()
        .zip(masked.mask())
        .enumerate()
        .map(|(i, (v, &m))| if m { *v } else { Some(fill(i).max(0.0)) })
        .collect();
    masked
        .series()
        .with_values(values)
        .expect("imputed values are finite and non-negative")
}

/// Same time of day from the nearest day that has it observed (past wins
/// ties); when no such day exists, the nearest observation in time.
pub fn impute_naive(masked: &MaskedSeries) -> Result<CarbonSeries, ImputeError> {
    let (obs_idx, obs_val) = observed(masked)?;
    let values = masked.series().values();
    let mask = masked.mask();
    let n = values.len();
    let period = masked.series().resolution().steps_per_day();
    let at = |j: usize| if mask[j] { values[j] } else { None };
    Ok(finish(masked, |i| {
        let mut k = 1;
        while k * period <= i || i + k * period < n {
            if let Some(v) = i.checked_sub(k * period).and_then(at) {
                return v;
            }
            if let Some(v) = (i + k * period < n).then(|| at(i + k * period)).flatten() {
                return v;
            }
            k += 1;
        }
        nearest_in_time(&obs_idx, &obs_val, i)
    }))
}

fn nearest_in_time(obs_idx: &[usize], obs_val: &[f64], i: usize) -> f64 {
    let pos = obs_idx.partition_point(|&j| j < i);
    match (pos.checked_sub(1), obs_idx.get(pos)) {
        (Some(l), Some(&r)) => {
            if i - obs_idx[l] <= r - i {
                obs_val[l]
            } else {
                obs_val[pos]
            }
        }
        (Some(l), None) => obs_val[l],
        (None, Some(_)) => obs_val[pos],
        (None, None) => unreachable!("at least one observation"),
    }
}

/// Straight line between the observations bracketing each gap.
pub fn impute_linear(masked: &MaskedSeries) -> Result<CarbonSeries, ImputeError> {
    let (obs_idx, obs_val) = observed(masked)?;
    Ok(finish(masked, |i| linear_at(&obs_idx, &obs_val, i)))
}

fn linear_at(obs_idx: &[usize], obs_val: &[f64], i: usize) -> f64 {
    let pos = obs_idx.partition_point(|&j| j < i);
    if pos == 0 {
        return obs_val[0];
    }
    if pos == obs_idx.len() {
        return obs_val[pos - 1];
    }
    let (x0, x1) = (obs_idx[pos - 1] as f64, obs_idx[pos] as f64);
    let (y0, y1) = (obs_val[pos - 1], obs_val[pos]);
    y0 + (y1 - y0) * (i as f64 - x0) / (x1 - x0)
}

/// Natural cubic spline through every observation, evaluated at the gaps and
/// clamped at zero. Falls back to linear with fewer than three observations.
pub fn impute_cubic_spline(masked: &MaskedSeries) -> Result<CarbonSeries, ImputeError> {
    let (obs_idx, obs_val) = observed(masked)?;
    if obs_idx.len() < 3 {
        return impute_linear(masked);
    }
    let (first, last) = (obs_idx[0], obs_idx[obs_idx.len() - 1]);
    let (y_first, y_last) = (obs_val[0], obs_val[obs_val.len() - 1]);
    let spline = NaturalCubicSpline::new(obs_idx.iter().map(|&i| i as f64).collect(), obs_val);
    Ok(finish(masked, |i| {
        if i < first {
            y_first
        } else if i > last {
            y_last
        } else {
            spline.eval(i as f64)
        }
    }))
}

pub fn impute(masked: &MaskedSeries, method: ImputeMethod) -> Result<CarbonSeries, ImputeError> {
    match method {
        ImputeMethod::Naive => impute_naive(masked),
        ImputeMethod::Linear => impute_linear(masked),
        ImputeMethod::CubicSpline => impute_cubic_spline(masked),
    }
}

/// RMSE over the masked positions on z-scored values, with mean and standard
/// deviation taken from the observed positions.
pub fn score_imputation(
    truth: &CarbonSeries,
    masked: &MaskedSeries,
    estimate: &CarbonSeries,
) -> Result<f64, ImputeError> {
    let truth_vals = truth.dense_values().ok_or(ImputeError::IncompleteTruth)?;
    let est_vals = estimate
        .dense_values()
        .ok_or(ImputeError::IncompleteTruth)?;
    let positions = masked.missing_positions();
    if positions.is_empty() {
        return Err(ImputeError::NoMaskedPositions);
    }
    let observed: Vec<f64> = truth_vals
        .iter()
        .zip(masked.mask())
        .filter_map(|(v, &m)| m.then_some(*v))
        .collect();
    let stats = NormStats::from_values(&observed)?;
    Ok(metrics::normalized_rmse(
        &truth_vals,
        &est_vals,
        &positions,
        stats,
    )?)
}

pub fn evaluate_imputation(
    truth: &CarbonSeries,
    masked: &MaskedSeries,
    method: ImputeMethod,
) -> Result<f64, ImputeError> {
    if !truth.is_complete() {
        return Err(ImputeError::IncompleteTruth);
    }
    if masked.missing_positions().is_empty() {
        return Err(ImputeError::NoMaskedPositions);
    }
    let estimate = impute(masked, method)?;
    score_imputation(truth, masked, &estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::missing_mask;
    use approx::assert_relative_eq;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn series(values: Vec<Option<f64>>) -> CarbonSeries {
        let t0 = Utc.with_ymd_and_hms(2024, 2, 1, 0, 0, 0).unwrap();
        CarbonSeries::new("G", t0, Resolution::Hourly, values).unwrap()
    }

    fn dense(values: &[f64]) -> CarbonSeries {
        series(values.iter().copied().map(Some).collect())
    }

    /// Lengths of runs of `false` in a mask.
    fn runs(mask: &[bool]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = 0;
        for &m in mask {
            if m {
                if cur > 0 {
                    out.push(cur);
                }
                cur = 0;
            } else {
                cur += 1;
            }
        }
        if cur > 0 {
            out.push(cur);
        }
        out
    }

    #[test]
    fn mask_half_in_five_patches() {
        let g = generate_mask(100, &MaskPlan::new(0.5, 10, 42)).unwrap();
        assert_eq!(g.mask.iter().filter(|m| !**m).count(), 50);
        assert_eq!(runs(&g.mask), vec![10; 5]);
        assert_eq!(g.achieved_fraction, 0.5);
    }

    #[test]
    fn minimal_mask() {
        let g = generate_mask(100, &MaskPlan::new(0.01, 1, 7)).unwrap();
        assert_eq!(g.masked_count, 1);
        assert_eq!(g.mask.iter().filter(|m| !**m).count(), 1);
    }

    #[test]
    fn full_length_patch_is_infeasible() {
        assert!(matches!(
            generate_mask(100, &MaskPlan::new(0.5, 100, 1)),
            Err(ImputeError::InfeasibleTarget { .. })
        ));
        // 17 of 19 with patch 6 needs three separated patches: 3*6 + 2 > 19.
        assert!(matches!(
            generate_mask(19, &MaskPlan::new(0.9, 6, 1)),
            Err(ImputeError::InfeasibleTarget { .. })
        ));
    }

    #[test]
    fn naive_prefers_past_on_ties() {
        let mut v: Vec<Option<f64>> = vec![Some(250.0); 72];
        v[10] = Some(300.0);
        v[34] = None;
        v[58] = Some(500.0);
        let out = impute_naive(&missing_mask(&series(v))).unwrap();
        assert_eq!(out.values()[34], Some(300.0));
    }

    #[test]
    fn naive_single_candidate() {
        let mut v: Vec<Option<f64>> = vec![None; 48];
        v[10] = Some(321.0);
        v[0] = Some(1.0);
        let out = impute_naive(&missing_mask(&series(v))).unwrap();
        assert_eq!(out.values()[34], Some(321.0));
        // Hour 5 has no same-hour observation: nearest in time is index 10
        // for t=5 (distance 5) versus index 0 (distance 5): past wins.
        assert_eq!(out.values()[5], Some(1.0));
        assert_eq!(out.values()[7], Some(321.0));
    }

    #[test]
    fn linear_examples() {
        let out = impute_linear(&missing_mask(&series(vec![Some(0.0), None, Some(2.0)]))).unwrap();
        assert_eq!(out.values()[1], Some(1.0));

        let lead = impute_linear(&missing_mask(&series(vec![
            None,
            None,
            Some(5.0),
            Some(7.0),
            None,
        ])))
        .unwrap();
        assert_eq!(
            lead.values(),
            &[Some(5.0), Some(5.0), Some(5.0), Some(7.0), Some(7.0)]
        );
    }

    #[test]
    fn spline_examples() {
        let s = series(vec![
            Some(0.0),
            None,
            Some(10.0),
            None,
            Some(20.0),
            Some(25.0),
        ]);
        let lin = impute_linear(&missing_mask(&s)).unwrap();
        let spl = impute_cubic_spline(&missing_mask(&s)).unwrap();
        for (a, b) in lin.values().iter().zip(spl.values()) {
            assert_relative_eq!(a.unwrap(), b.unwrap(), epsilon = 1e-12);
        }
        let full = dense(&[3.0, 1.0, 4.0]);
        assert_eq!(impute_cubic_spline(&missing_mask(&full)).unwrap(), full);
    }

    #[test]
    fn spline_clamps_overshoot() {
        // A spike next to zeros makes the spline dip below zero in the gaps.
        let s = series(vec![
            Some(0.0),
            Some(0.0),
            None,
            Some(100.0),
            None,
            Some(0.0),
            Some(0.0),
            None,
            Some(0.0),
        ]);
        let out = impute_cubic_spline(&missing_mask(&s)).unwrap();
        assert!(out.values().iter().all(|v| v.unwrap() >= 0.0));
    }

    #[test]
    fn all_missing_errors() {
        let s = series(vec![None, None]);
        for m in ImputeMethod::ALL {
            assert_eq!(impute(&missing_mask(&s), m), Err(ImputeError::AllMissing));
        }
    }

    #[test]
    fn evaluate_requires_masked_positions() {
        let truth = dense(&[1.0, 2.0, 3.0]);
        assert_eq!(
            evaluate_imputation(&truth, &missing_mask(&truth), ImputeMethod::Linear),
            Err(ImputeError::NoMaskedPositions)
        );
    }

    #[test]
    fn method_names_round_trip() {
        for m in ImputeMethod::ALL {
            assert_eq!(m.name().parse::<ImputeMethod>().unwrap(), m);
        }
        assert!("moment".parse::<ImputeMethod>().is_err());
    }

    proptest! {
        #[test]
        fn mask_is_deterministic_with_disjoint_runs(
            length in 20usize..400,
            frac in 0.05f64..0.75,
            patch in 1usize..12,
            seed in any::<u64>(),
        ) {
            let plan = MaskPlan::new(frac, patch, seed);
            if let Ok(g) = generate_mask(length, &plan) {
                prop_assert_eq!(&g, &generate_mask(length, &plan).unwrap());
                let r = runs(&g.mask);
                prop_assert!(r.iter().all(|&x| x == patch));
                let target = (frac * length as f64).floor();
                prop_assert!((g.masked_count as f64 - target).abs() < patch as f64);
                prop_assert!(g.mask.iter().any(|m| *m));
            }
        }

        #[test]
        fn imputers_pass_through_observed(
            vals in prop::collection::vec(prop::option::weighted(0.7, 0.0f64..900.0), 1..120),
        ) {
            let s = series(vals);
            prop_assume!(s.count_present() > 0);
            let m = missing_mask(&s);
            for method in ImputeMethod::ALL {
                let out = impute(&m, method).unwrap();
                prop_assert!(out.is_complete());
                for (a, b) in s.values().iter().zip(out.values()) {
                    if let Some(x) = a {
                        prop_assert_eq!(x.to_bits(), b.unwrap().to_bits());
                    }
                }
            }
        }

        #[test]
        fn linear_exact_on_affine(
            len in 10usize..300,
            slope in -2.0f64..2.0,
            frac in 0.1f64..0.7,
            seed in any::<u64>(),
        ) {
            let intercept = 1000.0;
            let truth = dense(&(0..len).map(|i| intercept + slope * i as f64).collect::<Vec<_>>());
            if let Ok(g) = generate_mask(len, &MaskPlan::new(frac, 3, seed)) {
                prop_assume!(g.masked_count > 0 && g.mask[0] && g.mask[len - 1]);
                let masked = MaskedSeries::from_mask(&truth, g.mask).unwrap();
                prop_assume!(masked.observed_count() >= 2);
                let stats = NormStats::from_values(&masked.series().values().iter().flatten().copied().collect::<Vec<_>>()).unwrap();
                prop_assume!(stats.std > 1e-6);
                let err = evaluate_imputation(&truth, &masked, ImputeMethod::Linear).unwrap();
                prop_assert!(err <= 1e-9, "nrmse {}", err);
            }
        }
    }
}
