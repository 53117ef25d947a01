use serde::{Deserialize, Serialize};

use super::{gmi_monte_carlo, Constellation};
use crate::error::{Error, Result};
use crate::rate::{select_by_decoded_rate, FecModel};
use crate::seed::mix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormatChoice {
    /// Index into the list passed in.
    pub index: usize,
    pub bits: u32,
    pub gmi: f64,
    pub code_rate: f64,
    /// Decoded information bits per 2D symbol, `m·R`.
    pub net_bits: f64,
}

/// Estimates each format's GMI at `snr_db` and keeps the one with the
/// highest decoded rate. Each format's noise stream is keyed by its
/// cardinality, so the answer does not depend on list order.
pub fn select_best_format(
    snr_db: f64,
    formats: &[Constellation],
    fec: &FecModel,
    seed: u64,
    n_samples: usize,
) -> Result<FormatChoice> {
    if formats.is_empty() {
        return Err(Error::InvalidArgument("no formats to choose from".into()));
    }
    let gmis: Vec<(u32, f64)> = formats
        .iter()
        .map(|c| Ok((c.bits(), gmi_monte_carlo(c, snr_db, n_samples, mix(seed, c.bits() as u64))?.gmi)))
        .collect::<Result<_>>()?;
    let (index, code_rate) = select_by_decoded_rate(&gmis, fec).expect("non-empty");
    let (bits, gmi) = gmis[index];
    Ok(FormatChoice {
        index,
        bits,
        gmi,
        code_rate,
        net_bits: bits as f64 * code_rate,
    })
}
