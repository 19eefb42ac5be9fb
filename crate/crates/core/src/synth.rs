//! Seeded synthetic market with a known common volatility factor.
//!
//! Each day draws a common volatility `sigma_true(t)` (lognormal AR(1) or
//! constant), an index residual `u(t)` from the residual law, and per-stock
//! absolute-return magnitudes i.i.d. from the law of `|residual|`, optionally
//! dispersed by a mean-one lognormal idiosyncratic factor. Signs are then
//! assigned so that the day's signed sum divided by its absolute sum equals
//! `u(t)/sqrt(3)` exactly: a greedy signed partition gets within the smallest
//! magnitude of the target and one designated stock's magnitude closes the
//! residual gap in closed form. As a result the equal-weight index residual
//! recovered by the estimator reproduces `u(t)` to rounding, while the
//! observable volatility remains the noisy cross-sectional mean
//! `sigma_true(t) * mean(|magnitudes|) / sqrt(3)` that concentrates at
//! `sigma_true(t)/2` like `1/sqrt(N)`.
//!
//! Everything is deterministic given the seed: the volatility path, the index
//! residuals, each stock's magnitudes and each stock's idiosyncratic factors
//! draw from their own counter-derived ChaCha8 substreams, so generation may
//! be parallelized across stocks without changing a single draw.

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{PricePanel, ReturnMatrix};
use crate::SQRT_3;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("n_stocks must be >= 1")]
    NoStocks,
    #[error("n_days must be >= 2, got {0}")]
    TooFewDays(usize),
    #[error("AR(1) persistence phi must lie in [0, 1), got {0}")]
    BadPhi(f64),
    #[error("{0} must be non-negative and finite")]
    BadScale(&'static str),
    #[error("constant volatility level must be positive, got {0}")]
    BadLevel(f64),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("sigma_true must be positive everywhere (index {0})")]
    NonPositiveTruth(usize),
}

/// Law of the common volatility factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "model")]
pub enum VolModel {
    /// `ln sigma(t) = mean_log + phi (ln sigma(t-1) - mean_log) + shock_scale * eps(t)`,
    /// initialized at the stationary distribution.
    LognormalAr1 { mean_log: f64, phi: f64, shock_scale: f64 },
    Constant { level: f64 },
}

/// Law of the index residual and of per-stock magnitude draws.
///
/// `Gaussian` exists to show the battery discriminates: its index residual is
/// a standard normal clamped to `[-sqrt(3), sqrt(3)]` (the estimator's hard
/// range), which fails the uniformity test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualModel {
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_stocks: usize,
    pub n_days: usize,
    pub vol_model: VolModel,
    pub residual_model: ResidualModel,
    /// Log-sd of the mean-one lognormal per-stock dispersion factor; 0 is the
    /// pure common-factor case in which all identities are exact.
    pub idio_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_stocks: 65,
            n_days: 10_000,
            vol_model: VolModel::LognormalAr1 {
                mean_log: -4.828313737302301, // ln(0.008)
                phi: 0.98,
                shock_scale: 0.1,
            },
            residual_model: ResidualModel::Uniform,
            idio_scale: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_stocks < 1 {
            return Err(SynthError::NoStocks);
        }
        if self.n_days < 2 {
            return Err(SynthError::TooFewDays(self.n_days));
        }
        match self.vol_model {
            VolModel::LognormalAr1 { phi, shock_scale, .. } => {
                if !(0.0..1.0).contains(&phi) || !phi.is_finite() {
                    return Err(SynthError::BadPhi(phi));
                }
                if !shock_scale.is_finite() || shock_scale < 0.0 {
                    return Err(SynthError::BadScale("shock_scale"));
                }
            }
            VolModel::Constant { level } => {
                if !level.is_finite() || level <= 0.0 {
                    return Err(SynthError::BadLevel(level));
                }
            }
        }
        if !self.idio_scale.is_finite() || self.idio_scale < 0.0 {
            return Err(SynthError::BadScale("idio_scale"));
        }
        Ok(())
    }
}

/// A generated panel together with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPanel {
    pub returns: ReturnMatrix,
    pub sigma_true: Vec<f64>,
    pub config: SynthConfig,
}

impl SynthPanel {
    /// Price panel with `S(0) = 100` and exponentiated cumulative returns,
    /// in the same shape [`crate::panel::parse_price_csv`] produces.
    pub fn to_price_panel(&self) -> PricePanel {
        let n_days = self.returns.n_days();
        let mut dates = Vec::with_capacity(n_days + 1);
        dates.push(date_label(0));
        dates.extend(self.returns.dates.iter().cloned());
        let prices = self
            .returns
            .returns
            .iter()
            .map(|row| {
                let mut path = Vec::with_capacity(n_days + 1);
                let mut level = 100.0f64;
                path.push(Some(level));
                for r in row {
                    level *= r.exp();
                    path.push(Some(level));
                }
                path
            })
            .collect();
        PricePanel { dates, tickers: self.returns.tickers.clone(), prices }
    }
}

/// Comparison of the estimated volatility against the generator's truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub pearson: f64,
    /// Mean of the day-wise ratio `sigma_hat / sigma_true`.
    pub ratio_mean: f64,
    /// Coefficient of variation of the day-wise ratio.
    pub ratio_cv: f64,
}

// Substream layout of the master seed.
const STREAM_VOL: u64 = 0;
const STREAM_INDEX_RESIDUAL: u64 = 1;

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn date_label(offset: usize) -> String {
    let base = NaiveDate::from_ymd_opt(1973, 1, 1).unwrap();
    base.checked_add_days(Days::new(offset as u64)).unwrap().format("%Y-%m-%d").to_string()
}

/// The common volatility path; deterministic given the seed.
pub fn gen_volatility_path(cfg: &SynthConfig) -> Result<Vec<f64>, SynthError> {
    cfg.validate()?;
    match cfg.vol_model {
        VolModel::Constant { level } => Ok(vec![level; cfg.n_days]),
        VolModel::LognormalAr1 { mean_log, phi, shock_scale } => {
            let mut rng = substream(cfg.seed, STREAM_VOL);
            let stationary_sd = shock_scale / (1.0 - phi * phi).sqrt();
            let eps0: f64 = StandardNormal.sample(&mut rng);
            let mut log_sigma = mean_log + stationary_sd * eps0;
            let mut path = Vec::with_capacity(cfg.n_days);
            path.push(log_sigma.exp());
            for _ in 1..cfg.n_days {
                let eps: f64 = StandardNormal.sample(&mut rng);
                log_sigma = mean_log + phi * (log_sigma - mean_log) + shock_scale * eps;
                path.push(log_sigma.exp());
            }
            Ok(path)
        }
    }
}

fn draw_index_residuals(cfg: &SynthConfig) -> Vec<f64> {
    let mut rng = substream(cfg.seed, STREAM_INDEX_RESIDUAL);
    (0..cfg.n_days)
        .map(|_| match cfg.residual_model {
            ResidualModel::Uniform => rng.random_range(-SQRT_3..SQRT_3),
            ResidualModel::Gaussian => {
                let z: f64 = StandardNormal.sample(&mut rng);
                z.clamp(-SQRT_3, SQRT_3)
            }
        })
        .collect()
}

fn draw_magnitude(rng: &mut ChaCha8Rng, model: ResidualModel) -> f64 {
    match model {
        ResidualModel::Uniform => rng.random_range(0.0..SQRT_3),
        ResidualModel::Gaussian => {
            let z: f64 = StandardNormal.sample(rng);
            z.abs()
        }
    }
}

/// Assigns signs to `magnitudes` so that the signed sum equals
/// `rho * (absolute sum)` exactly, `rho in [-1, 1]`.
///
/// All but one stock keep their drawn magnitude and receive greedy signs
/// (largest first, each toward the remaining target); the stock with the
/// smallest magnitude is the closer: its magnitude is replaced by the
/// non-negative closed-form value that zeroes the residual gap.
fn balance_signs(magnitudes: &mut [f64], rho: f64) -> Vec<f64> {
    let n = magnitudes.len();
    if rho == 1.0 || rho == -1.0 {
        // saturated residual: every stock takes the residual's sign and any
        // magnitudes satisfy the ratio
        return vec![rho; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| magnitudes[b].total_cmp(&magnitudes[a]));
    let closer = *order.last().unwrap();

    let mut signs = vec![1.0f64; n];
    let abs_sum: f64 = order[..n - 1].iter().map(|&a| magnitudes[a]).sum();
    let mut remaining = rho * abs_sum;
    for &a in &order[..n - 1] {
        let s = if remaining >= 0.0 { 1.0 } else { -1.0 };
        signs[a] = s;
        remaining -= s * magnitudes[a];
    }

    // signed sum so far is rho*abs_sum + gap; solve the closer's magnitude x
    // and sign s so that (signed + s*x) = rho*(abs_sum + x)
    let gap = -remaining;
    let (sign, x) = if gap == 0.0 {
        (1.0, 0.0)
    } else if gap > 0.0 {
        (-1.0, gap / (1.0 + rho))
    } else {
        (1.0, -gap / (1.0 - rho))
    };
    signs[closer] = sign;
    magnitudes[closer] = x;
    signs
}

/// Generates the synthetic panel; deterministic given the seed.
pub fn gen_market(cfg: &SynthConfig) -> Result<SynthPanel, SynthError> {
    let sigma_true = gen_volatility_path(cfg)?;
    let residuals = draw_index_residuals(cfg);
    let n = cfg.n_stocks;
    let t_len = cfg.n_days;

    // per-stock draws come from dedicated substreams
    let mut magnitudes: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            let mut rng = substream(cfg.seed, 2 + a as u64);
            (0..t_len).map(|_| draw_magnitude(&mut rng, cfg.residual_model)).collect()
        })
        .collect();
    if cfg.idio_scale > 0.0 {
        let half_var = 0.5 * cfg.idio_scale * cfg.idio_scale;
        for (a, row) in magnitudes.iter_mut().enumerate() {
            let mut rng = substream(cfg.seed, 2 + n as u64 + a as u64);
            for m in row.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *m *= (cfg.idio_scale * z - half_var).exp();
            }
        }
    }

    let mut returns = vec![vec![0.0f64; t_len]; n];
    let mut day = vec![0.0f64; n];
    for t in 0..t_len {
        if n == 1 {
            // a single stock cannot carry a sub-sqrt(3) index residual; it
            // keeps its drawn magnitude and the residual's sign
            returns[0][t] = sigma_true[t] * residuals[t].signum() * magnitudes[0][t];
            continue;
        }
        for (a, row) in magnitudes.iter().enumerate() {
            day[a] = row[t];
        }
        let signs = balance_signs(&mut day, residuals[t] / SQRT_3);
        for a in 0..n {
            returns[a][t] = sigma_true[t] * signs[a] * day[a];
        }
    }

    Ok(SynthPanel {
        returns: ReturnMatrix {
            dates: (1..=t_len).map(date_label).collect(),
            tickers: (0..n).map(|a| format!("S{:03}", a + 1)).collect(),
            returns,
        },
        sigma_true,
        config: *cfg,
    })
}

/// Pearson correlation, mean ratio and ratio dispersion of the estimated
/// volatility against the true factor.
pub fn oracle_compare(sigma_hat: &[f64], sigma_true: &[f64]) -> Result<OracleComparison, SynthError> {
    if sigma_hat.len() != sigma_true.len() {
        return Err(SynthError::LengthMismatch(sigma_hat.len(), sigma_true.len()));
    }
    if let Some(i) = sigma_true.iter().position(|&s| !(s > 0.0)) {
        return Err(SynthError::NonPositiveTruth(i));
    }
    let n = sigma_hat.len() as f64;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / n;
    let (mh, mt) = (mean(sigma_hat), mean(sigma_true));
    let mut cov = 0.0;
    let mut vh = 0.0;
    let mut vt = 0.0;
    for (&h, &t) in sigma_hat.iter().zip(sigma_true) {
        cov += (h - mh) * (t - mt);
        vh += (h - mh) * (h - mh);
        vt += (t - mt) * (t - mt);
    }
    let pearson = if vh > 0.0 && vt > 0.0 { cov / (vh.sqrt() * vt.sqrt()) } else { 1.0 };

    let ratios: Vec<f64> = sigma_hat.iter().zip(sigma_true).map(|(&h, &t)| h / t).collect();
    let ratio_mean = mean(&ratios);
    let ratio_var = ratios.iter().map(|r| (r - ratio_mean) * (r - ratio_mean)).sum::<f64>() / n;
    let ratio_cv = if ratio_mean != 0.0 { ratio_var.sqrt() / ratio_mean } else { 0.0 };

    Ok(OracleComparison { pearson, ratio_mean, ratio_cv })
}
