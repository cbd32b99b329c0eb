//! Power spectral density and frequency-domain features.
//!
//! The periodogram runs on a radix-2 FFT after zero-padding the window to
//! the next power of two; `S(f_i) = |X_i|^2 / N` with N the padded length,
//! over the one-sided bins `i = 0..=N/2`. Frequencies are in cycles per
//! sample; a sample rate only rescales the axis for reporting.

use super::time::GUARD_EPS;
use crate::error::{Error, Result};

pub const FREQ_FEATURE_NAMES: [&str; 4] = ["sp", "mpf", "sskew", "skurt"];

/// In-place iterative radix-2 FFT; lengths must be a power of two.
fn fft_radix2(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * std::f64::consts::PI / len as f64;
        let (wr, wi) = (ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let mut cr = 1.0;
            let mut ci = 0.0;
            for k in 0..len / 2 {
                let (ar, ai) = (re[i + k], im[i + k]);
                let (br, bi) = (re[i + k + len / 2], im[i + k + len / 2]);
                let tr = br * cr - bi * ci;
                let ti = br * ci + bi * cr;
                re[i + k] = ar + tr;
                im[i + k] = ai + ti;
                re[i + k + len / 2] = ar - tr;
                im[i + k + len / 2] = ai - ti;
                let ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
            i += len;
        }
        len <<= 1;
    }
}

/// One-sided periodogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    /// Bin frequencies `i / padded_len` in cycles per sample.
    pub freqs: Vec<f64>,
    /// Bin powers `|X_i|^2 / padded_len`.
    pub power: Vec<f64>,
    pub original_len: usize,
    pub padded_len: usize,
}

impl Psd {
    /// Total signal energy recovered from the one-sided bins; equals
    /// `sum(z^2)` by Parseval.
    pub fn two_sided_energy(&self) -> f64 {
        let n = self.padded_len;
        let mut total = 0.0;
        for (i, &s) in self.power.iter().enumerate() {
            let mirrored = i != 0 && !(n % 2 == 0 && i == n / 2);
            total += if mirrored { 2.0 * s } else { s };
        }
        total
    }
}

/// Periodogram of a window of at least two samples.
pub fn psd(z: &[f64]) -> Result<Psd> {
    let n = z.len();
    if n < 2 {
        return Err(Error::Window(format!("psd needs at least 2 samples, got {n}")));
    }
    let padded = n.next_power_of_two();
    let mut re = vec![0.0; padded];
    let mut im = vec![0.0; padded];
    re[..n].copy_from_slice(z);
    fft_radix2(&mut re, &mut im);
    let bins = padded / 2 + 1;
    let mut freqs = Vec::with_capacity(bins);
    let mut power = Vec::with_capacity(bins);
    for i in 0..bins {
        freqs.push(i as f64 / padded as f64);
        power.push((re[i] * re[i] + im[i] * im[i]) / padded as f64);
    }
    Ok(Psd { freqs, power, original_len: n, padded_len: padded })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqFeatures {
    /// Spectral power `sum f^3 S(f)`.
    pub sp: f64,
    /// Mean power frequency `(1/k) sum f S(f) / sum S(f)`; the leading 1/k
    /// follows the feature table verbatim. See [`freq_features_opts`] for
    /// the conventional variant without it.
    pub mpf: f64,
    /// Spectral skewness `sum ((f - fbar)/sigma)^3 S(f)` with fbar and sigma
    /// the mean and standard deviation of the power-normalized spectrum.
    pub sskew: f64,
    /// Spectral kurtosis, fourth power of the same standardization.
    pub skurt: f64,
    pub guarded: bool,
}

impl FreqFeatures {
    pub fn as_array(&self) -> [f64; 4] {
        [self.sp, self.mpf, self.sskew, self.skurt]
    }
}

pub fn freq_features(psd: &Psd) -> Result<FreqFeatures> {
    freq_features_opts(psd, false)
}

/// `standard_mpf` drops the table's leading 1/k factor and reports the
/// conventional `sum f S / sum S`.
pub fn freq_features_opts(psd: &Psd, standard_mpf: bool) -> Result<FreqFeatures> {
    let k = psd.power.len() as f64;
    let total: f64 = psd.power.iter().sum();
    if total <= 0.0 {
        return Err(Error::SilentWindow);
    }
    let mut sp = 0.0;
    let mut f_weighted = 0.0;
    for (&f, &s) in psd.freqs.iter().zip(&psd.power) {
        sp += f * f * f * s;
        f_weighted += f * s;
    }
    let f_bar = f_weighted / total;
    let sigma_sq: f64 = psd
        .freqs
        .iter()
        .zip(&psd.power)
        .map(|(&f, &s)| (f - f_bar) * (f - f_bar) * s / total)
        .sum();
    let sigma = sigma_sq.sqrt();

    let mut guarded = false;
    let (mut sskew, mut skurt) = (0.0, 0.0);
    if sigma < GUARD_EPS {
        guarded = true;
    } else {
        for (&f, &s) in psd.freqs.iter().zip(&psd.power) {
            let u = (f - f_bar) / sigma;
            let u3 = u * u * u;
            sskew += u3 * s;
            skurt += u3 * u * s;
        }
    }
    let mpf = if standard_mpf { f_weighted / total } else { f_weighted / total / k };
    Ok(FreqFeatures { sp, mpf, sskew, skurt, guarded })
}
