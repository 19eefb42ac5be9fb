//! Assembles the statistical battery over an [`IndexSeries`].

use marketvol::derived_seed;
use marketvol::index::IndexSeries;
use marketvol::stats::{
    bootstrap_bands, compute_k, cross_correlation, fraction_within_bands, rescale_check,
    sample_moments, uniformity_test, CorrelationCurve, MomentSummary, RescaleReport, StatsError,
    UniformityReport,
};

use crate::report::VanishingSummary;

/// Moment ratio `<|omega|>^2 / <omega^2>` of the uniform residual law.
pub const UNIFORM_MOMENT_RATIO: f64 = 0.75;

#[derive(Debug, Clone, Copy)]
pub struct BatteryOptions {
    pub tau_max: usize,
    pub block_len: usize,
    pub n_boot: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        Self { tau_max: 250, block_len: 25, n_boot: 1_000, bins: 20, seed: 0 }
    }
}

/// The battery's outputs minus provenance (the caller owns that).
#[derive(Debug, Clone)]
pub struct Battery {
    pub sigma_moments: MomentSummary,
    pub omega_moments: MomentSummary,
    pub k: f64,
    pub curves: Vec<CorrelationCurve>,
    pub vanishing: Vec<VanishingSummary>,
    pub uniformity: UniformityReport,
    pub rescale: RescaleReport,
}

/// Labels of the curves whose vanishing is asserted (everything of Fig. 1
/// except the volatility autocorrelation).
pub const VANISHING_LABELS: [&str; 5] =
    ["abs_omega,abs_omega", "omega,sigma", "sigma,omega", "omega,abs_r", "abs_r,omega"];

/// Runs moments, the nine lagged correlation curves with bootstrap bands,
/// the uniformity test and the rescaling check.
///
/// Each curve's bootstrap draws from a seed derived from the master seed and
/// the curve's position, so the battery is reproducible as a whole.
pub fn run_battery(series: &IndexSeries, opts: &BatteryOptions) -> Result<Battery, StatsError> {
    let abs_r = series.abs_r();
    let abs_omega = series.abs_omega();
    let mask = &series.valid;

    let pairs: [(&str, &[f64], &[f64]); 9] = [
        ("sigma,sigma", &series.sigma, &series.sigma),
        ("abs_omega,abs_omega", &abs_omega, &abs_omega),
        ("omega,sigma", &series.omega, &series.sigma),
        ("sigma,omega", &series.sigma, &series.omega),
        ("omega,abs_r", &series.omega, &abs_r),
        ("abs_r,omega", &abs_r, &series.omega),
        ("abs_r,abs_r", &abs_r, &abs_r),
        ("abs_r,sigma", &abs_r, &series.sigma),
        ("sigma,abs_r", &series.sigma, &abs_r),
    ];

    let mut curves = Vec::with_capacity(pairs.len());
    for (i, (label, x, y)) in pairs.iter().enumerate() {
        let curve = cross_correlation(label, x, y, mask, opts.tau_max)?;
        let effective_tau = curve.tau_max();
        let bands = bootstrap_bands(
            x,
            y,
            mask,
            effective_tau,
            opts.block_len,
            opts.n_boot,
            derived_seed(opts.seed, 100 + i as u64),
        )?;
        curves.push(curve.with_bands(&bands)?);
    }

    let vanishing = VANISHING_LABELS
        .iter()
        .map(|label| {
            let curve = curves.iter().find(|c| c.label == *label).expect("curve exists");
            VanishingSummary {
                label: label.to_string(),
                fraction_within_bands: fraction_within_bands(curve, 1).unwrap_or(f64::NAN),
            }
        })
        .collect();

    let sigma_moments = sample_moments(&series.sigma, mask)?;
    let omega_moments = sample_moments(&series.omega, mask)?;
    let k = compute_k(&sigma_moments, UNIFORM_MOMENT_RATIO)?;
    let uniformity = uniformity_test(&series.omega, mask, opts.bins)?;
    let rescale = rescale_check(&curves[6], &curves[7], &curves[8], &curves[0], k)?;

    Ok(Battery { sigma_moments, omega_moments, k, curves, vanishing, uniformity, rescale })
}
