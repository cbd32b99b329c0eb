//! Time-domain statistics of a sample window.

use crate::error::{Error, Result};

/// Denominators smaller than this yield the guard value 0 and set the
/// window's guard flag, keeping feature matrices free of NaN.
pub const GUARD_EPS: f64 = 1e-12;

pub const TIME_FEATURE_NAMES: [&str; 12] = [
    "min", "mean", "rms", "var", "std", "peak", "p2p", "crest", "skew", "kurt", "form", "pulse",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeFeatures {
    pub min: f64,
    pub mean: f64,
    pub rms: f64,
    pub var: f64,
    pub std: f64,
    pub peak: f64,
    pub p2p: f64,
    pub crest: f64,
    pub skew: f64,
    pub kurt: f64,
    pub form: f64,
    pub pulse: f64,
    /// Set when any denominator guard fired.
    pub guarded: bool,
}

impl TimeFeatures {
    pub fn as_array(&self) -> [f64; 12] {
        [
            self.min, self.mean, self.rms, self.var, self.std, self.peak, self.p2p, self.crest,
            self.skew, self.kurt, self.form, self.pulse,
        ]
    }
}

/// Twelve time-domain features of a window of at least two samples.
///
/// Variance and standard deviation use the n-1 divisor; skewness and
/// kurtosis use 1/n central moments over sigma powers. Ratios whose
/// denominator vanishes (constant or zero-mean windows) come out as 0 with
/// the guard flag set.
pub fn time_features(z: &[f64]) -> Result<TimeFeatures> {
    let n = z.len();
    if n < 2 {
        return Err(Error::Window(format!(
            "time features need at least 2 samples, got {n}"
        )));
    }
    let nf = n as f64;
    let min = z.iter().copied().fold(f64::INFINITY, f64::min);
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = z.iter().sum::<f64>() / nf;
    let sq_sum: f64 = z.iter().map(|v| v * v).sum();
    let rms = (sq_sum / nf).sqrt();
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &v in z {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let var = m2 / (nf - 1.0);
    let std = var.sqrt();
    let peak = z.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let p2p = max - min;

    let mut guarded = false;
    let mut ratio = |num: f64, den: f64| {
        if den.abs() < GUARD_EPS {
            guarded = true;
            0.0
        } else {
            num / den
        }
    };
    let crest = ratio(peak, rms);
    let skew = ratio(m3 / nf, std * std * std);
    let kurt = ratio(m4 / nf, std * std * std * std);
    let form = ratio(rms, mean);
    let pulse = ratio(peak, mean);

    Ok(TimeFeatures { min, mean, rms, var, std, peak, p2p, crest, skew, kurt, form, pulse, guarded })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_window() {
        let f = time_features(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(f.min, 1.0);
        assert_eq!(f.mean, 1.0);
        assert_eq!(f.rms, 1.0);
        assert_eq!(f.var, 0.0);
        assert_eq!(f.std, 0.0);
        assert_eq!(f.peak, 1.0);
        assert_eq!(f.p2p, 0.0);
        assert_eq!(f.crest, 1.0);
        assert_eq!(f.form, 1.0);
        assert_eq!(f.pulse, 1.0);
        assert_eq!(f.skew, 0.0); // sigma guard
        assert_eq!(f.kurt, 0.0);
        assert!(f.guarded);
    }

    #[test]
    fn symmetric_pair() {
        let f = time_features(&[-2.0, 2.0]).unwrap();
        assert_eq!(f.peak, 2.0);
        assert_eq!(f.p2p, 4.0);
        assert_eq!(f.rms, 2.0);
        assert_eq!(f.mean, 0.0);
        assert_eq!(f.crest, 1.0);
        assert_eq!(f.form, 0.0); // mean guard
        assert_eq!(f.pulse, 0.0);
        assert!(f.guarded);
    }

    #[test]
    fn sinusoid_closed_forms() {
        let z: Vec<f64> = (0..1000)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 100.0).sin())
            .collect();
        let f = time_features(&z).unwrap();
        assert!((f.rms - 0.70710678).abs() < 1e-3, "rms {}", f.rms);
        assert!(f.mean.abs() < 1e-12);
        assert!((f.kurt - 1.5).abs() < 1e-2, "kurt {}", f.kurt);
        assert!(!z.iter().any(|v| v.is_nan()));
    }

    #[test]
    fn too_short_window() {
        assert!(matches!(time_features(&[1.0]), Err(Error::Window(_))));
    }

    #[test]
    fn scaling_behaviour() {
        let z = [0.3, -1.2, 2.4, 0.9, -0.5, 1.1];
        let c = 3.7;
        let scaled: Vec<f64> = z.iter().map(|v| v * c).collect();
        let a = time_features(&z).unwrap();
        let b = time_features(&scaled).unwrap();
        for (x, y) in [
            (a.min, b.min),
            (a.mean, b.mean),
            (a.rms, b.rms),
            (a.std, b.std),
            (a.peak, b.peak),
            (a.p2p, b.p2p),
        ] {
            assert!((x * c - y).abs() < 1e-9, "{x} {y}");
        }
        for (x, y) in [
            (a.crest, b.crest),
            (a.form, b.form),
            (a.pulse, b.pulse),
            (a.skew, b.skew),
            (a.kurt, b.kurt),
        ] {
            assert!((x - y).abs() < 1e-9, "{x} {y}");
        }
    }
}
