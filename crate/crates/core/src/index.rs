//! Index return, observable volatility and residual series.
//!
//! For weights `w_a(t)` (non-negative, summing to 1 on each day):
//!
//! ```text
//! r(t)     = sum_a w_a(t) * r_a(t)
//! sigma(t) = (1/sqrt(3)) * sum_a w_a(t) * |r_a(t)|
//! omega(t) = r(t) / sigma(t)          where sigma(t) > 0
//! ```
//!
//! The triangle inequality gives `|r(t)| <= sqrt(3) * sigma(t)`, so the
//! residual always lies in `[-sqrt(3), sqrt(3)]`. Days on which every
//! constituent return is zero have `sigma = 0`; they are masked rather than
//! errored, and all downstream statistics skip them.

use thiserror::Error;

use crate::panel::{PricePanel, ReturnMatrix};
use crate::SQRT_3;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("weight matrix is {got_stocks}x{got_days}, return matrix is {want_stocks}x{want_days}")]
    DimensionMismatch {
        got_stocks: usize,
        got_days: usize,
        want_stocks: usize,
        want_days: usize,
    },
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("negative weight {value} for stock {stock} on day {day}")]
    NegativeWeight { stock: usize, day: usize, value: f64 },
    #[error("weights on day {0} are all zero")]
    ZeroWeightDay(usize),
    #[error("price panel is not rectangular; align it before deriving weights")]
    GappyPanel,
}

/// Constituent weighting of the index.
///
/// `Equal` weights every stock `1/N`. The per-day variants hold an
/// `n_stocks x n_days` matrix normalized to sum to 1 on each day;
/// capitalization weighting is the explicit variant with externally supplied
/// weights.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightScheme {
    Equal,
    PerDay { kind: WeightKind, weights: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Price,
    Explicit,
}

impl WeightScheme {
    /// Price weighting, `w_a(t) = S_a(t-1) / sum_b S_b(t-1)`: each return day
    /// is weighted by the previous close, so no look-ahead. The panel must be
    /// the aligned one the returns were computed from (T+1 dates for T days).
    pub fn price_weighted(panel: &PricePanel) -> Result<Self, IndexError> {
        if !panel.is_rectangular() {
            return Err(IndexError::GappyPanel);
        }
        let n = panel.n_stocks();
        let n_days = panel.n_dates() - 1;
        let mut weights = vec![vec![0.0; n_days]; n];
        for t in 0..n_days {
            let total: f64 = (0..n).map(|a| panel.prices[a][t].unwrap()).sum();
            for (a, row) in weights.iter_mut().enumerate() {
                row[t] = panel.prices[a][t].unwrap() / total;
            }
        }
        Ok(WeightScheme::PerDay { kind: WeightKind::Price, weights })
    }

    /// Explicit per-day weights (e.g. capitalization). Rows are stocks,
    /// columns return days. Weights must be non-negative with a positive sum
    /// on every day; they are normalized here.
    pub fn explicit(mut weights: Vec<Vec<f64>>) -> Result<Self, IndexError> {
        let n_days = weights.first().map_or(0, |r| r.len());
        for t in 0..n_days {
            let mut total = 0.0;
            for (a, row) in weights.iter().enumerate() {
                let w = row[t];
                if !w.is_finite() || w < 0.0 {
                    return Err(IndexError::NegativeWeight { stock: a, day: t, value: w });
                }
                total += w;
            }
            if total <= 0.0 {
                return Err(IndexError::ZeroWeightDay(t));
            }
            for row in weights.iter_mut() {
                row[t] /= total;
            }
        }
        Ok(WeightScheme::PerDay { kind: WeightKind::Explicit, weights })
    }

    fn check_dims(&self, rm: &ReturnMatrix) -> Result<(), IndexError> {
        if let WeightScheme::PerDay { weights, .. } = self {
            let got_stocks = weights.len();
            let got_days = weights.first().map_or(0, |r| r.len());
            let rectangular = weights.iter().all(|r| r.len() == got_days);
            if !rectangular || got_stocks != rm.n_stocks() || got_days != rm.n_days() {
                return Err(IndexError::DimensionMismatch {
                    got_stocks,
                    got_days,
                    want_stocks: rm.n_stocks(),
                    want_days: rm.n_days(),
                });
            }
        }
        Ok(())
    }

    #[inline]
    fn weight(&self, stock: usize, day: usize, n_stocks: usize) -> f64 {
        match self {
            WeightScheme::Equal => 1.0 / n_stocks as f64,
            WeightScheme::PerDay { weights, .. } => weights[stock][day],
        }
    }
}

/// The three derived daily series with their date axis and validity mask.
///
/// Wherever `valid[t]` is true, `r[t] = sigma[t] * omega[t]` holds to within
/// 1e-12 absolute and `|omega[t]| <= sqrt(3)`. On invalid days (`sigma = 0`)
/// `omega` is stored as 0 and must be excluded from statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSeries {
    pub dates: Vec<String>,
    pub r: Vec<f64>,
    pub sigma: Vec<f64>,
    pub omega: Vec<f64>,
    pub valid: Vec<bool>,
}

impl IndexSeries {
    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// |r(t)| series, the absolute index return.
    pub fn abs_r(&self) -> Vec<f64> {
        self.r.iter().map(|x| x.abs()).collect()
    }

    /// |omega(t)| series.
    pub fn abs_omega(&self) -> Vec<f64> {
        self.omega.iter().map(|x| x.abs()).collect()
    }
}

/// Weighted index return, `r(t) = sum_a w_a(t) r_a(t)`.
pub fn index_return(rm: &ReturnMatrix, scheme: &WeightScheme) -> Result<Vec<f64>, IndexError> {
    scheme.check_dims(rm)?;
    let n = rm.n_stocks();
    Ok((0..rm.n_days())
        .map(|t| (0..n).map(|a| scheme.weight(a, t, n) * rm.returns[a][t]).sum())
        .collect())
}

/// Observable volatility, `sigma(t) = (1/sqrt(3)) sum_a w_a(t) |r_a(t)|`.
///
/// The 1/sqrt(3) normalization lives here so reported sigma levels are the
/// estimator's own scale, not a rescaled residual.
pub fn observable_volatility(rm: &ReturnMatrix, scheme: &WeightScheme) -> Result<Vec<f64>, IndexError> {
    scheme.check_dims(rm)?;
    let n = rm.n_stocks();
    Ok((0..rm.n_days())
        .map(|t| {
            let s: f64 = (0..n).map(|a| scheme.weight(a, t, n) * rm.returns[a][t].abs()).sum();
            s / SQRT_3
        })
        .collect())
}

/// Residual series `omega(t) = r(t)/sigma(t)` plus the validity mask.
/// Days with `sigma = 0` are masked and carry `omega = 0`.
pub fn residual_series(r: &[f64], sigma: &[f64]) -> Result<(Vec<f64>, Vec<bool>), IndexError> {
    if r.len() != sigma.len() {
        return Err(IndexError::LengthMismatch(r.len(), sigma.len()));
    }
    let mut omega = Vec::with_capacity(r.len());
    let mut valid = Vec::with_capacity(r.len());
    for (&ri, &si) in r.iter().zip(sigma) {
        if si > 0.0 {
            omega.push(ri / si);
            valid.push(true);
        } else {
            omega.push(0.0);
            valid.push(false);
        }
    }
    Ok((omega, valid))
}

/// Bundles [`index_return`], [`observable_volatility`] and
/// [`residual_series`] into an [`IndexSeries`].
pub fn build_index_series(rm: &ReturnMatrix, scheme: &WeightScheme) -> Result<IndexSeries, IndexError> {
    let r = index_return(rm, scheme)?;
    let sigma = observable_volatility(rm, scheme)?;
    let (omega, valid) = residual_series(&r, &sigma)?;
    Ok(IndexSeries { dates: rm.dates.clone(), r, sigma, omega, valid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(returns: Vec<Vec<f64>>) -> ReturnMatrix {
        let n_days = returns[0].len();
        ReturnMatrix {
            dates: (0..n_days).map(|t| format!("d{t}")).collect(),
            tickers: (0..returns.len()).map(|a| format!("S{a}")).collect(),
            returns,
        }
    }

    #[test]
    fn symmetric_returns_cancel() {
        let rm = matrix(vec![vec![0.02], vec![-0.02]]);
        let r = index_return(&rm, &WeightScheme::Equal).unwrap();
        assert_eq!(r, vec![0.0]);
    }

    #[test]
    fn single_stock_index_is_the_stock() {
        let rm = matrix(vec![vec![0.01, -0.03, 0.002]]);
        let r = index_return(&rm, &WeightScheme::Equal).unwrap();
        assert_eq!(r, rm.returns[0]);
    }

    #[test]
    fn three_stock_mean() {
        let rm = matrix(vec![vec![0.01], vec![0.02], vec![0.03]]);
        let r = index_return(&rm, &WeightScheme::Equal).unwrap();
        assert_relative_eq!(r[0], 0.02, epsilon = 1e-15);
    }

    #[test]
    fn volatility_of_symmetric_pair() {
        let rm = matrix(vec![vec![0.02], vec![-0.02]]);
        let sigma = observable_volatility(&rm, &WeightScheme::Equal).unwrap();
        // (|0.02| + |-0.02|) / (2 sqrt(3))
        assert_relative_eq!(sigma[0], 0.011547005383792516, epsilon = 1e-15);
    }

    #[test]
    fn flat_day_has_zero_sigma_and_is_masked() {
        let rm = matrix(vec![vec![0.0, 0.01], vec![0.0, -0.01]]);
        let series = build_index_series(&rm, &WeightScheme::Equal).unwrap();
        assert_eq!(series.sigma[0], 0.0);
        assert_eq!(series.omega[0], 0.0);
        assert!(!series.valid[0]);
        assert!(series.valid[1]);
    }

    #[test]
    fn single_positive_return_scales_by_sqrt3() {
        let rm = matrix(vec![vec![0.015]]);
        let sigma = observable_volatility(&rm, &WeightScheme::Equal).unwrap();
        assert_relative_eq!(sigma[0], 0.015 / SQRT_3, epsilon = 1e-16);
    }

    #[test]
    fn residual_of_equal_parts_is_one() {
        let (omega, valid) = residual_series(&[0.01], &[0.01]).unwrap();
        assert_eq!(omega, vec![1.0]);
        assert_eq!(valid, vec![true]);
    }

    #[test]
    fn residual_length_mismatch_errors() {
        assert!(matches!(
            residual_series(&[0.01], &[0.01, 0.02]),
            Err(IndexError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn single_stock_residual_saturates_at_sqrt3() {
        let rm = matrix(vec![vec![0.01, -0.02, 0.005]]);
        let series = build_index_series(&rm, &WeightScheme::Equal).unwrap();
        for (t, &w) in series.omega.iter().enumerate() {
            let expected = rm.returns[0][t].signum() * SQRT_3;
            assert_relative_eq!(w, expected, epsilon = 1e-12);
        }
    }

    fn random_matrix(n: usize, days: usize, seed: u64) -> ReturnMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        matrix(
            (0..n)
                .map(|_| (0..days).map(|_| rng.random_range(-0.05..0.05)).collect())
                .collect(),
        )
    }

    #[test]
    fn identity_and_bound_hold_on_random_panels() {
        for seed in 0..20 {
            let rm = random_matrix(7, 60, seed);
            let s = build_index_series(&rm, &WeightScheme::Equal).unwrap();
            for t in 0..s.n_days() {
                if s.valid[t] {
                    assert!((s.r[t] - s.sigma[t] * s.omega[t]).abs() < 1e-12);
                    assert!(s.omega[t].abs() <= SQRT_3 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn ticker_permutation_leaves_series_unchanged() {
        let rm = random_matrix(5, 40, 7);
        let mut permuted = rm.clone();
        permuted.returns.rotate_left(2);
        permuted.tickers.rotate_left(2);
        let a = build_index_series(&rm, &WeightScheme::Equal).unwrap();
        let b = build_index_series(&permuted, &WeightScheme::Equal).unwrap();
        for t in 0..a.n_days() {
            assert_relative_eq!(a.r[t], b.r[t], epsilon = 1e-15);
            assert_relative_eq!(a.sigma[t], b.sigma[t], epsilon = 1e-15);
            assert_relative_eq!(a.omega[t], b.omega[t], epsilon = 1e-12);
        }
    }

    #[test]
    fn common_scaling_moves_r_and_sigma_but_not_omega() {
        let rm = random_matrix(4, 30, 11);
        let mut scaled = rm.clone();
        for row in scaled.returns.iter_mut() {
            for x in row.iter_mut() {
                *x *= 2.5;
            }
        }
        let a = build_index_series(&rm, &WeightScheme::Equal).unwrap();
        let b = build_index_series(&scaled, &WeightScheme::Equal).unwrap();
        for t in 0..a.n_days() {
            assert_relative_eq!(b.r[t], 2.5 * a.r[t], epsilon = 1e-15);
            assert_relative_eq!(b.sigma[t], 2.5 * a.sigma[t], epsilon = 1e-15);
            assert_relative_eq!(b.omega[t], a.omega[t], epsilon = 1e-12);
        }
    }

    #[test]
    fn price_weights_use_previous_close() {
        let panel = PricePanel {
            dates: vec!["d0".into(), "d1".into(), "d2".into()],
            tickers: vec!["A".into(), "B".into()],
            prices: vec![
                vec![Some(100.0), Some(110.0), Some(121.0)],
                vec![Some(300.0), Some(300.0), Some(300.0)],
            ],
        };
        let scheme = WeightScheme::price_weighted(&panel).unwrap();
        match &scheme {
            WeightScheme::PerDay { weights, .. } => {
                assert_relative_eq!(weights[0][0], 0.25, epsilon = 1e-15);
                assert_relative_eq!(weights[0][1], 110.0 / 410.0, epsilon = 1e-15);
            }
            _ => unreachable!(),
        }
        let rm = crate::panel::compute_returns(&panel).unwrap();
        let r = index_return(&rm, &scheme).unwrap();
        // day 0: w_A = 1/4, r_A = ln(1.1), r_B = 0
        assert_relative_eq!(r[0], 0.25 * (1.1f64).ln(), epsilon = 1e-15);
    }

    #[test]
    fn explicit_weights_are_normalized_and_validated() {
        let scheme = WeightScheme::explicit(vec![vec![3.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let rm = matrix(vec![vec![0.04, 0.02], vec![0.0, 0.0]]);
        let r = index_return(&rm, &scheme).unwrap();
        assert_relative_eq!(r[0], 0.03, epsilon = 1e-15);
        assert_relative_eq!(r[1], 0.01, epsilon = 1e-15);

        assert!(matches!(
            WeightScheme::explicit(vec![vec![1.0], vec![-0.1]]),
            Err(IndexError::NegativeWeight { stock: 1, day: 0, .. })
        ));
        assert!(matches!(
            WeightScheme::explicit(vec![vec![0.0], vec![0.0]]),
            Err(IndexError::ZeroWeightDay(0))
        ));
    }

    #[test]
    fn weight_dimension_mismatch_is_rejected() {
        let rm = matrix(vec![vec![0.01, 0.02], vec![0.03, 0.04]]);
        let scheme = WeightScheme::explicit(vec![vec![1.0], vec![1.0]]).unwrap();
        assert!(matches!(
            index_return(&rm, &scheme),
            Err(IndexError::DimensionMismatch { .. })
        ));
    }
}
