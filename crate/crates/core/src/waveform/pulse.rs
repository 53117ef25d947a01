use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Root-raised-cosine FIR taps sampled at `sps` per symbol over `span`
/// symbols (`span·sps + 1` taps), scaled to unit energy.
pub fn rrc_taps(rolloff: f64, span: usize, sps: usize) -> Result<Vec<f64>> {
    if !(rolloff > 0.0 && rolloff <= 1.0) || span == 0 || sps == 0 || (span * sps) % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "rrc_taps: rolloff {rolloff} must be in (0, 1], span·sps = {} must be even and positive",
            span * sps
        )));
    }
    let half = (span * sps / 2) as i64;
    let b = rolloff;
    let pi = std::f64::consts::PI;
    let mut h: Vec<f64> = (-half..=half)
        .map(|k| {
            let t = k as f64 / sps as f64;
            if k == 0 {
                1.0 - b + 4.0 * b / pi
            } else if ((4.0 * b * t).abs() - 1.0).abs() < 1e-12 {
                b / 2f64.sqrt()
                    * ((1.0 + 2.0 / pi) * (pi / (4.0 * b)).sin() + (1.0 - 2.0 / pi) * (pi / (4.0 * b)).cos())
            } else {
                ((pi * t * (1.0 - b)).sin() + 4.0 * b * t * (pi * t * (1.0 + b)).cos())
                    / (pi * t * (1.0 - (4.0 * b * t).powi(2)))
            }
        })
        .collect();
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter_mut().for_each(|v| *v /= norm);
    Ok(h)
}

/// Raised-cosine spectrum, frequency in units of the symbol rate; 1 at DC.
pub fn raised_cosine(f_norm: f64, rolloff: f64) -> f64 {
    let f = f_norm.abs();
    let lo = (1.0 - rolloff) / 2.0;
    let hi = (1.0 + rolloff) / 2.0;
    if f <= lo {
        1.0
    } else if f > hi {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI / rolloff * (f - lo)).cos())
    }
}

/// Signed frequency of FFT bin `k` out of `n` at sample rate `fs`.
pub(crate) fn bin_freq(k: usize, n: usize, fs: f64) -> f64 {
    let k = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
    k * fs / n as f64
}

/// Circular filtering by a frequency response given per bin.
pub(crate) fn filter_freq(x: &mut [Complex64], response: &[Complex64]) {
    let n = x.len();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(x);
    for (v, h) in x.iter_mut().zip(response) {
        *v *= h;
    }
    planner.plan_fft_inverse(n).process(x);
    let s = 1.0 / n as f64;
    x.iter_mut().for_each(|v| *v *= s);
}

/// Per-bin shaping response for `n` samples at `sps` per symbol. The exact
/// spectrum when `fir_span` is None, otherwise the DFT of the truncated taps.
/// Either way the Tx-Rx cascade has unit gain at the symbol instants.
pub(crate) fn shaping_response(n: usize, sps: usize, rolloff: f64, fir_span: Option<usize>) -> Result<Vec<Complex64>> {
    match fir_span {
        None => Ok((0..n)
            .map(|k| {
                let f = bin_freq(k, n, sps as f64);
                Complex64::new((sps as f64 * raised_cosine(f, rolloff)).sqrt(), 0.0)
            })
            .collect()),
        Some(span) => {
            let taps = rrc_taps(rolloff, span, sps)?;
            if taps.len() > n {
                return Err(Error::InvalidArgument(format!(
                    "filter span of {} samples exceeds frame of {n}",
                    taps.len()
                )));
            }
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            let half = taps.len() / 2;
            for (i, t) in taps.iter().enumerate() {
                buf[(i + n - half) % n] = Complex64::new(*t, 0.0);
            }
            FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
            Ok(buf)
        }
    }
}

/// Zero-stuffs symbols to `sps` samples each and applies the shaping filter.
pub(crate) fn shape(symbols: &[Complex64], sps: usize, response: &[Complex64]) -> Vec<Complex64> {
    let mut x = vec![Complex64::new(0.0, 0.0); symbols.len() * sps];
    for (i, s) in symbols.iter().enumerate() {
        x[i * sps] = *s;
    }
    filter_freq(&mut x, response);
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cascade_isi(rolloff: f64, span: usize, sps: usize) -> f64 {
        let h = rrc_taps(rolloff, span, sps).unwrap();
        let n = h.len();
        let mut full = vec![0.0; 2 * n - 1];
        for (i, a) in h.iter().enumerate() {
            for (j, b) in h.iter().enumerate() {
                full[i + j] += a * b;
            }
        }
        let c = n - 1;
        let peak = full[c];
        let mut worst: f64 = 0.0;
        let mut k = sps;
        while k <= c {
            worst = worst.max(full[c - k].abs() / peak).max(full[c + k].abs() / peak);
            k += sps;
        }
        worst
    }

    #[test]
    fn taps_shape() {
        let h = rrc_taps(0.01, 64, 2).unwrap();
        assert_eq!(h.len(), 129);
        let e: f64 = h.iter().map(|v| v * v).sum();
        assert!((e - 1.0).abs() < 1e-9);
        let max = h.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(h[64], max);
        assert!(rrc_taps(0.0, 64, 2).is_err());
        assert!(rrc_taps(0.5, 3, 1).is_err());
    }

    #[test]
    fn singular_points_are_continuous() {
        // t = 1/(4β) falls on a sample for β = 0.25 at 4 sps.
        let h = rrc_taps(0.25, 16, 4).unwrap();
        let c = h.len() / 2;
        let lim = rrc_taps(0.25 + 1e-7, 16, 4).unwrap();
        assert!((h[c + 4] - lim[c + 4]).abs() < 1e-5);
    }

    #[test]
    fn cascade_is_nyquist() {
        assert!(cascade_isi(0.1, 64, 2) < 1e-3);
        assert!(cascade_isi(0.25, 64, 2) < 1e-3);
        // At 1 % roll-off the truncated tails decay slowly; the bound needs a longer span.
        assert!(cascade_isi(0.01, 256, 2) < 1e-3);
    }

    #[test]
    fn spectral_cascade_recovers_symbols() {
        let sps = 2;
        let n_sym = 512;
        let resp = shaping_response(n_sym * sps, sps, 0.01, None).unwrap();
        let syms: Vec<Complex64> = (0..n_sym)
            .map(|i| Complex64::new(((i * 7) % 5) as f64 - 2.0, ((i * 3) % 4) as f64 - 1.5))
            .collect();
        let mut x = shape(&syms, sps, &resp);
        let p: f64 = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64;
        let ps: f64 = syms.iter().map(|v| v.norm_sqr()).sum::<f64>() / n_sym as f64;
        assert!((p - ps / sps as f64).abs() / ps < 0.02);
        filter_freq(&mut x, &resp);
        for (i, s) in syms.iter().enumerate() {
            assert!((x[i * sps] - s).norm() < 1e-9);
        }
    }

    #[test]
    fn fir_response_matches_taps() {
        let resp = shaping_response(1024, 2, 0.1, Some(64)).unwrap();
        let h = rrc_taps(0.1, 64, 2).unwrap();
        let dc: f64 = h.iter().sum();
        assert!((resp[0].re - dc).abs() < 1e-9);
        // close to the exact spectrum's DC value sqrt(sps)
        assert!((dc - 2f64.sqrt()).abs() < 1e-2);
    }
}
