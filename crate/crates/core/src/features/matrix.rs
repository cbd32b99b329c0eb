//! Feature matrices: sub-window features stacked into a 2-D tensor for
//! 2-D CNN input.
//!
//! Axis 0 is the feature index, axis 1 the sub-window index (oldest first).
//! The tri-domain feature order is fixed as
//! `[time 12 | freq 4 | db1 L1..L3 | db2 L1..L3]`, 22 rows; a model file's
//! `input_shape` must match this layout.

use super::freq::{freq_features_opts, psd, FREQ_FEATURE_NAMES};
use super::time::{time_features, TIME_FEATURE_NAMES};
use super::wavelet::{dwt_energy, Wavelet, WAVELET_FEATURE_NAMES};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};
use serde::{Deserialize, Serialize};

pub const WAVELET_LEVELS: usize = 3;

/// Which feature domains a matrix carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSet {
    pub time: bool,
    pub frequency: bool,
    pub wavelet: bool,
}

impl DomainSet {
    pub const TRI: DomainSet = DomainSet { time: true, frequency: true, wavelet: true };
    pub const TIME: DomainSet = DomainSet { time: true, frequency: false, wavelet: false };

    pub fn feature_count(&self) -> usize {
        let mut n = 0;
        if self.time {
            n += TIME_FEATURE_NAMES.len();
        }
        if self.frequency {
            n += FREQ_FEATURE_NAMES.len();
        }
        if self.wavelet {
            n += WAVELET_FEATURE_NAMES.len();
        }
        n
    }

    pub fn feature_names(&self) -> Vec<&'static str> {
        let mut names = Vec::new();
        if self.time {
            names.extend(TIME_FEATURE_NAMES);
        }
        if self.frequency {
            names.extend(FREQ_FEATURE_NAMES);
        }
        if self.wavelet {
            names.extend(WAVELET_FEATURE_NAMES);
        }
        names
    }

    pub fn parse(s: &str) -> Result<DomainSet> {
        match s {
            "time" => Ok(DomainSet::TIME),
            "frequency" | "freq" => {
                Ok(DomainSet { time: false, frequency: true, wavelet: false })
            }
            "wavelet" => Ok(DomainSet { time: false, frequency: false, wavelet: true }),
            "tri" | "tri-domain" => Ok(DomainSet::TRI),
            other => Err(Error::Window(format!(
                "unknown domain set '{other}' (expected time|frequency|wavelet|tri)"
            ))),
        }
    }
}

/// Sliding sub-window geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRecipe {
    pub window: usize,
    pub subwindow: usize,
    pub stride: usize,
    pub domains: DomainSet,
}

impl FeatureRecipe {
    pub fn columns(&self) -> usize {
        (self.window - self.subwindow) / self.stride + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Window("stride must be >= 1".into()));
        }
        if self.subwindow < 8 {
            return Err(Error::Window(format!(
                "subwindow {} is shorter than 2^3 samples",
                self.subwindow
            )));
        }
        if self.window < self.subwindow {
            return Err(Error::Window(format!(
                "window {} shorter than subwindow {}",
                self.window, self.subwindow
            )));
        }
        if self.domains.wavelet && self.subwindow % (1 << WAVELET_LEVELS) != 0 {
            return Err(Error::Window(format!(
                "subwindow {} must be divisible by 2^{WAVELET_LEVELS} for wavelet energies",
                self.subwindow
            )));
        }
        if self.domains.feature_count() == 0 {
            return Err(Error::Window("no feature domain selected".into()));
        }
        Ok(())
    }

    /// The CNN input shape this recipe produces.
    pub fn matrix_shape(&self) -> Shape {
        Shape::new_2d(1, self.domains.feature_count(), self.columns())
    }
}

#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    /// 1 channel, feature rows, sub-window columns.
    pub tensor: Tensor,
    pub recipe: FeatureRecipe,
    /// Per-column guard flag: a denominator guard fired somewhere in that
    /// sub-window.
    pub guard_flags: Vec<bool>,
}

/// Feature vector of a single sub-window in the fixed order.
fn column_features(sub: &[f64], domains: &DomainSet) -> Result<(Vec<f64>, bool)> {
    let mut out = Vec::with_capacity(domains.feature_count());
    let mut guarded = false;
    if domains.time {
        let t = time_features(sub)?;
        guarded |= t.guarded;
        out.extend(t.as_array());
    }
    if domains.frequency {
        let p = psd(sub)?;
        match freq_features_opts(&p, false) {
            Ok(f) => {
                guarded |= f.guarded;
                out.extend(f.as_array());
            }
            // an all-zero sub-window inside a longer series gets guard values
            Err(Error::SilentWindow) => {
                guarded = true;
                out.extend([0.0; 4]);
            }
            Err(e) => return Err(e),
        }
    }
    if domains.wavelet {
        for w in [Wavelet::Db1, Wavelet::Db2] {
            out.extend(dwt_energy(sub, w, WAVELET_LEVELS)?);
        }
    }
    Ok((out, guarded))
}

/// Slide a sub-window across `series` (whose length must equal the recipe's
/// window) and stack per-position features into columns, oldest first.
pub fn build_feature_matrix(series: &[f64], recipe: &FeatureRecipe) -> Result<FeatureMatrix> {
    recipe.validate()?;
    if series.len() != recipe.window {
        return Err(Error::Window(format!(
            "series length {} does not match recipe window {}",
            series.len(),
            recipe.window
        )));
    }
    let cols = recipe.columns();
    let rows = recipe.domains.feature_count();
    let mut data = vec![0.0f32; rows * cols];
    let mut guard_flags = Vec::with_capacity(cols);
    for t in 0..cols {
        let start = t * recipe.stride;
        let sub = &series[start..start + recipe.subwindow];
        let (features, guarded) = column_features(sub, &recipe.domains)?;
        guard_flags.push(guarded);
        for (r, v) in features.iter().enumerate() {
            debug_assert!(v.is_finite(), "feature {r} of column {t} is not finite");
            data[r * cols + t] = *v as f32;
        }
    }
    let tensor = Tensor::new(Shape::new_2d(1, rows, cols), data)?;
    Ok(FeatureMatrix { tensor, recipe: *recipe, guard_flags })
}
