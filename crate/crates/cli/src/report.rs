//! The machine-readable analysis report and its provenance block.

use marketvol::stats::{CorrelationCurve, MomentSummary, RescaleReport, UniformityReport};
use marketvol::MissingPolicy;
use serde::{Deserialize, Serialize};

/// Everything needed to re-run an analysis bit-for-bit: the input digest,
/// the full option set and the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    /// sha256 of the raw input CSV bytes.
    pub input_digest: String,
    pub seed: u64,
    pub options: AnalysisOptions,
    pub n_stocks: usize,
    pub n_days: usize,
    pub n_valid_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub weights: String,
    pub missing: MissingPolicy,
    pub tau_max: usize,
    pub block_len: usize,
    pub n_boot: usize,
    pub bins: usize,
    pub date_col: String,
    pub ticker_col: String,
    pub close_col: String,
}

/// Fraction of lags (tau >= 1) at which a curve stays inside its 95%
/// independence bands; the quantitative reading of "vanishing".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingSummary {
    pub label: String,
    pub fraction_within_bands: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub provenance: Provenance,
    pub sigma_moments: MomentSummary,
    pub omega_moments: MomentSummary,
    /// Rescaling constant from the sigma moments with the uniform-law
    /// moment ratio 3/4.
    pub k: f64,
    /// All lagged correlation curves, each with its independence bands.
    pub curves: Vec<CorrelationCurve>,
    pub vanishing: Vec<VanishingSummary>,
    pub uniformity: UniformityReport,
    pub rescale: RescaleReport,
}
