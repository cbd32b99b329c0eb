//! Multi-domain feature extraction: 12 time-domain statistics, 4 spectral
//! features over the periodogram, and 6 wavelet energies (db1/db2, levels
//! 1-3), assembled into 2-D feature matrices for 2-D CNN input.

mod freq;
mod matrix;
mod time;
mod wavelet;

pub use freq::{freq_features, freq_features_opts, psd, FreqFeatures, Psd, FREQ_FEATURE_NAMES};
pub use matrix::{
    build_feature_matrix, DomainSet, FeatureMatrix, FeatureRecipe, WAVELET_LEVELS,
};
pub use time::{time_features, TimeFeatures, GUARD_EPS, TIME_FEATURE_NAMES};
pub use wavelet::{dwt_decompose, dwt_energy, Wavelet, WAVELET_FEATURE_NAMES};
