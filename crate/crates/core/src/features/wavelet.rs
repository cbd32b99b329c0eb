//! Discrete wavelet transform energies (Daubechies 1 and 2).
//!
//! Mallat cascade with periodized boundary extension:
//! `a_j[i] = sum_k lo[k] * a_{j-1}[(2i + k) mod len]` and likewise for the
//! detail band. Periodization keeps the per-level transform orthonormal, so
//! detail and approximation energies partition the signal energy exactly —
//! which requires the window length to be divisible by 2^levels.

use crate::error::{Error, Result};

pub const WAVELET_FEATURE_NAMES: [&str; 6] =
    ["db1_e1", "db1_e2", "db1_e3", "db2_e1", "db2_e2", "db2_e3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wavelet {
    Db1,
    Db2,
}

impl Wavelet {
    pub fn name(self) -> &'static str {
        match self {
            Wavelet::Db1 => "db1",
            Wavelet::Db2 => "db2",
        }
    }

    fn lowpass(self) -> Vec<f64> {
        let s2 = std::f64::consts::SQRT_2;
        match self {
            Wavelet::Db1 => vec![1.0 / s2, 1.0 / s2],
            Wavelet::Db2 => {
                let s3 = 3.0f64.sqrt();
                let d = 4.0 * s2;
                vec![(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d]
            }
        }
    }

    /// Quadrature mirror of the lowpass: `hi[k] = (-1)^k lo[L-1-k]`.
    fn highpass(self) -> Vec<f64> {
        let lo = self.lowpass();
        let l = lo.len();
        (0..l)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * lo[l - 1 - k]
            })
            .collect()
    }
}

/// One periodized analysis step: (approximation, detail), each half length.
fn analysis_step(x: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let len = x.len();
    debug_assert_eq!(len % 2, 0);
    let half = len / 2;
    let mut approx = Vec::with_capacity(half);
    let mut detail = Vec::with_capacity(half);
    for i in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for (k, (&l, &h)) in lo.iter().zip(hi).enumerate() {
            let v = x[(2 * i + k) % len];
            a += l * v;
            d += h * v;
        }
        approx.push(a);
        detail.push(d);
    }
    (approx, detail)
}

/// Full cascade: per-level detail coefficients plus the final approximation.
pub fn dwt_decompose(z: &[f64], wavelet: Wavelet, levels: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = z.len();
    if levels == 0 {
        return Err(Error::Window("decomposition needs at least one level".into()));
    }
    let block = 1usize << levels;
    if n < block {
        return Err(Error::Window(format!(
            "window of {n} samples is too short for {levels} levels (needs >= {block})"
        )));
    }
    if n % block != 0 {
        return Err(Error::Window(format!(
            "window of {n} samples must be divisible by 2^{levels} = {block} for periodized analysis"
        )));
    }
    let lo = wavelet.lowpass();
    let hi = wavelet.highpass();
    let mut cur = z.to_vec();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (approx, detail) = analysis_step(&cur, &lo, &hi);
        details.push(detail);
        cur = approx;
    }
    Ok((details, cur))
}

/// Wavelet energy per level: `sum(detail_j^2) / N` with N the original
/// window length.
pub fn dwt_energy(z: &[f64], wavelet: Wavelet, levels: usize) -> Result<Vec<f64>> {
    let n = z.len() as f64;
    let (details, _) = dwt_decompose(z, wavelet, levels)?;
    Ok(details
        .iter()
        .map(|d| d.iter().map(|v| v * v).sum::<f64>() / n)
        .collect())
}
