//! Physical constants and dB helpers.

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// dB per km to nepers-style power attenuation per km (1/km).
pub const DB_TO_NATURAL: f64 = std::f64::consts::LN_10 / 10.0;

#[inline]
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

#[inline]
pub fn dbm_to_watt(dbm: f64) -> f64 {
    1e-3 * db_to_lin(dbm)
}

#[inline]
pub fn watt_to_dbm(w: f64) -> f64 {
    lin_to_db(w / 1e-3)
}

#[inline]
pub fn freq_to_wavelength_nm(freq_hz: f64) -> f64 {
    SPEED_OF_LIGHT / freq_hz * 1e9
}

#[inline]
pub fn wavelength_nm_to_freq(wavelength_nm: f64) -> f64 {
    SPEED_OF_LIGHT / (wavelength_nm * 1e-9)
}

#[inline]
pub fn photon_energy(freq_hz: f64) -> f64 {
    PLANCK * freq_hz
}

/// Combines SNR terms given in dB by summing their inverse linear values.
/// Infinite terms contribute nothing; an empty or all-infinite input yields
/// +inf.
pub fn combine_snr_db<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let inv: f64 = terms
        .into_iter()
        .filter(|t| t.is_finite() || *t == f64::NEG_INFINITY)
        .map(|t| 1.0 / db_to_lin(t))
        .sum();
    if inv == 0.0 {
        f64::INFINITY
    } else {
        -lin_to_db(inv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_two_equal_terms_loses_3db() {
        let t = combine_snr_db([20.0, 20.0]);
        assert!((t - (20.0 - lin_to_db(2.0))).abs() < 1e-12);
        assert!((t - 16.9897).abs() < 1e-4);
    }

    #[test]
    fn combine_ignores_infinite_terms() {
        assert_eq!(combine_snr_db([21.6, f64::INFINITY]), 21.6);
        assert_eq!(combine_snr_db([f64::INFINITY]), f64::INFINITY);
        assert_eq!(combine_snr_db([]), f64::INFINITY);
    }

    #[test]
    fn wavelength_round_trip() {
        let f = wavelength_nm_to_freq(1550.0);
        assert!((freq_to_wavelength_nm(f) - 1550.0).abs() < 1e-9);
    }
}
