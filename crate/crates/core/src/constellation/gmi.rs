use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::BitMetric;
use super::Constellation;
use crate::error::{Error, Result};
use crate::seed::{mix, rng, Rng};
use crate::units::db_to_lin;

pub const MIN_SAMPLES: usize = 1000;
const BATCHES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmiEstimate {
    /// Bits per 2D symbol.
    pub gmi: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub snr_db: f64,
}

impl GmiEstimate {
    pub fn ngmi(&self, bits: u32) -> f64 {
        crate::rate::ngmi(self.gmi, bits)
    }
}

/// Metric-ratio loss for one received sample, with an explicit noise
/// variance. Exposed for invariance checks.
pub fn bit_metric_loss(c: &Constellation, k: usize, y: Complex64, noise_var: f64) -> f64 {
    let metric = BitMetric::new(c.points(), c.labels(), c.bits());
    let mut ws = metric.workspace();
    metric.loss(k, y, noise_var.recip(), &mut ws)
}

/// Monte-Carlo GMI under AWGN with the matched Gaussian metric. Transmitted
/// symbols cycle through shuffled passes over the alphabet; the standard
/// error comes from the spread of 20 contiguous batch means.
pub fn gmi_monte_carlo(c: &Constellation, snr_db: f64, n_samples: usize, seed: u64) -> Result<GmiEstimate> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument("SNR must be finite".into()));
    }
    let m = c.bits() as f64;
    let noise_var = db_to_lin(snr_db).recip();
    let inv_var = noise_var.recip();
    let sd = (noise_var / 2.0).sqrt();
    let mut r: Rng = rng(seed);
    let n_pts = c.cardinality();
    let mut order: Vec<usize> = (0..n_pts).collect();
    let metric = BitMetric::new(c.points(), c.labels(), c.bits());
    let mut ws = metric.workspace();

    let mut batch_sums = [0.0f64; BATCHES];
    let mut batch_counts = [0usize; BATCHES];
    for n in 0..n_samples {
        if n % n_pts == 0 {
            order.shuffle(&mut r);
        }
        let k = order[n % n_pts];
        let nr: f64 = r.sample(StandardNormal);
        let ni: f64 = r.sample(StandardNormal);
        let y = c.points()[k] + Complex64::new(nr * sd, ni * sd);
        let loss = metric.loss(k, y, inv_var, &mut ws);
        let b = n * BATCHES / n_samples;
        batch_sums[b] += loss;
        batch_counts[b] += 1;
    }

    let ln2 = std::f64::consts::LN_2;
    let batch_gmi: Vec<f64> = batch_sums
        .iter()
        .zip(&batch_counts)
        .map(|(s, &n)| m - s / n as f64 / ln2)
        .collect();
    let total_loss: f64 = batch_sums.iter().sum();
    let gmi = (m - total_loss / n_samples as f64 / ln2).clamp(0.0, m);
    let mean_b = batch_gmi.iter().sum::<f64>() / BATCHES as f64;
    let var_b = batch_gmi.iter().map(|g| (g - mean_b).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    Ok(GmiEstimate {
        gmi,
        std_error: (var_b / BATCHES as f64).sqrt(),
        n_samples,
        snr_db,
    })
}

/// GMI versus SNR for one constellation, used to map budget SNRs to rates
/// without re-running Monte Carlo per channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmiTable {
    pub bits: u32,
    pub snr_db: Vec<f64>,
    pub gmi: Vec<f64>,
    pub std_error: Vec<f64>,
}

impl GmiTable {
    /// Estimates each grid point with an independent stream, then enforces
    /// monotonicity with a running maximum.
    pub fn build(c: &Constellation, snr_grid_db: &[f64], n_samples: usize, seed: u64) -> Result<Self> {
        if snr_grid_db.len() < 2 || snr_grid_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "SNR grid needs at least two strictly increasing points".into(),
            ));
        }
        let est: Vec<GmiEstimate> = snr_grid_db
            .par_iter()
            .enumerate()
            .map(|(i, &s)| gmi_monte_carlo(c, s, n_samples, mix(seed, i as u64)))
            .collect::<Result<_>>()?;
        let mut gmi: Vec<f64> = est.iter().map(|e| e.gmi).collect();
        for i in 1..gmi.len() {
            gmi[i] = gmi[i].max(gmi[i - 1]);
        }
        Ok(GmiTable {
            bits: c.bits(),
            snr_db: snr_grid_db.to_vec(),
            gmi,
            std_error: est.iter().map(|e| e.std_error).collect(),
        })
    }

    /// Linear interpolation, clamped to the end points.
    pub fn gmi_at(&self, snr_db: f64) -> f64 {
        let x = &self.snr_db;
        let last = x.len() - 1;
        if snr_db.is_nan() {
            return 0.0;
        }
        if snr_db <= x[0] {
            return self.gmi[0];
        }
        if snr_db >= x[last] {
            return self.gmi[last];
        }
        let i = x.partition_point(|&v| v <= snr_db) - 1;
        let t = (snr_db - x[i]) / (x[i + 1] - x[i]);
        self.gmi[i] + t * (self.gmi[i + 1] - self.gmi[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limits() {
        for bits in [2, 4, 6, 8, 10] {
            let c = Constellation::square_qam(bits).unwrap();
            let hi = gmi_monte_carlo(&c, 60.0, 2000, 1).unwrap();
            assert!((hi.gmi - bits as f64).abs() < 1e-3, "{bits}: {hi:?}");
            let lo = gmi_monte_carlo(&c, -30.0, 5000, 2).unwrap();
            assert!(lo.gmi < 0.05, "{bits}: {lo:?}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let c = Constellation::square_qam(4).unwrap();
        let a = gmi_monte_carlo(&c, 8.0, 4000, 9).unwrap();
        let b = gmi_monte_carlo(&c, 8.0, 4000, 9).unwrap();
        let d = gmi_monte_carlo(&c, 8.0, 4000, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.gmi, d.gmi);
        assert!(a.std_error > 0.0);
    }

    #[test]
    fn rejects_few_samples() {
        let c = Constellation::square_qam(2).unwrap();
        assert!(gmi_monte_carlo(&c, 0.0, 999, 0).is_err());
    }

    #[test]
    fn table_is_monotone_and_interpolates() {
        let c = Constellation::square_qam(4).unwrap();
        let grid: Vec<f64> = (0..=20).map(|s| s as f64).collect();
        let t = GmiTable::build(&c, &grid, 2000, 5).unwrap();
        assert!(t.gmi.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(t.gmi_at(-10.0), t.gmi[0]);
        assert_eq!(t.gmi_at(50.0), t.gmi[20]);
        let mid = t.gmi_at(3.5);
        assert!((mid - 0.5 * (t.gmi[3] + t.gmi[4])).abs() < 1e-12);
    }

    #[test]
    fn loss_is_scale_invariant() {
        let c = Constellation::square_qam(4).unwrap();
        let y = c.points()[3] + Complex64::new(0.12, -0.05);
        let a = bit_metric_loss(&c, 3, y, 0.05);
        let scaled: Vec<Complex64> = c.points().iter().map(|p| p * 3.0).collect();
        let metric = BitMetric::new(&scaled, c.labels(), 4);
        let mut ws = metric.workspace();
        let b = metric.loss(3, y * 3.0, 1.0 / (0.05 * 9.0), &mut ws);
        assert!((a - b).abs() < 1e-12);
    }
}
