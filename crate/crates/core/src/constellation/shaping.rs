use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::kernel::BitMetric;
use super::quadrature::gmi_quadrature;
use super::Constellation;
use crate::error::{Error, Result};
use crate::seed::{mix, rng, Rng};
use crate::units::db_to_lin;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapingConfig {
    pub iterations: usize,
    /// Step size as a fraction of the square-QAM minimum distance
    /// (Adam-normalised gradient ascent, decayed linearly to 10 %).
    pub step: f64,
    /// Noise draws per point per iteration.
    pub samples_per_point: usize,
    /// Gauss-Hermite order of the before/after check.
    pub quadrature_order: usize,
    pub seed: u64,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        ShapingConfig {
            iterations: 300,
            step: 0.03,
            samples_per_point: 16,
            quadrature_order: 12,
            seed: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapingStatus {
    Improved,
    /// The optimised geometry did not beat square QAM; the baseline is returned.
    NoImprovement,
}

#[derive(Clone, Debug)]
pub struct ShapingOutcome {
    pub constellation: Constellation,
    pub status: ShapingStatus,
    pub baseline_gmi: f64,
    pub gmi: f64,
    pub target_snr_db: f64,
}

/// Gradient ascent on the Monte-Carlo GMI starting from Gray square QAM.
/// Labels stay fixed; energy is renormalised after every step. The result is
/// kept only if the quadrature GMI beats the baseline.
pub fn optimize_shaping(bits: u32, target_snr_db: f64, cfg: &ShapingConfig) -> Result<ShapingOutcome> {
    if ![4, 6, 8, 10].contains(&bits) {
        return Err(Error::InvalidArgument(format!(
            "shaping supports 4, 6, 8 or 10 bits, got {bits}"
        )));
    }
    if !target_snr_db.is_finite() || !cfg.step.is_finite() || cfg.step < 0.0 {
        return Err(Error::InvalidArgument("SNR and step must be finite, step >= 0".into()));
    }
    let baseline = Constellation::square_qam(bits)?;
    let noise_var = db_to_lin(target_snr_db).recip();
    let n_pts = baseline.cardinality();
    let spp = cfg.samples_per_point.max(MIN_DRAWS_PER_ITERATION.div_ceil(n_pts)).max(1);
    // learning rate as a fraction of the square-QAM minimum distance
    let lr = cfg.step * min_distance(&baseline);
    let mut current = baseline.clone();
    let mut r: Rng = rng(mix(cfg.seed, bits as u64));
    let mut adam = Adam::new(n_pts);

    if cfg.step > 0.0 {
        for it in 0..cfg.iterations {
            let (mut grad, loss) = loss_gradient(&current, noise_var, spp, &mut r);
            project_to_energy_sphere(&mut grad, current.points());
            if it % 25 == 0 {
                log::debug!("shaping m={bits} iter {it}: MC GMI {:.4}", bits as f64 - loss / std::f64::consts::LN_2);
            }
            let decay = 1.0 - 0.9 * it as f64 / cfg.iterations as f64;
            // descend the loss, i.e. ascend GMI
            let next: Vec<Complex64> = adam
                .step(&grad)
                .iter()
                .zip(current.points())
                .map(|(d, p)| p - d * (lr * decay))
                .collect();
            current = current.with_points(next)?;
        }
    }

    let baseline_gmi = gmi_quadrature(&baseline, target_snr_db, cfg.quadrature_order)?;
    let gmi = if current == baseline {
        baseline_gmi
    } else {
        gmi_quadrature(&current, target_snr_db, cfg.quadrature_order)?
    };
    let (constellation, status, gmi) = if gmi > baseline_gmi {
        (current, ShapingStatus::Improved, gmi)
    } else {
        (baseline, ShapingStatus::NoImprovement, baseline_gmi)
    };
    Ok(ShapingOutcome {
        constellation,
        status,
        baseline_gmi,
        gmi,
        target_snr_db,
    })
}

const MIN_DRAWS_PER_ITERATION: usize = 32768;

fn min_distance(c: &Constellation) -> f64 {
    let p = c.points();
    let mut d = f64::INFINITY;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            d = d.min((p[i] - p[j]).norm());
        }
    }
    d
}

/// Removes the radial component, which renormalisation would undo anyway and
/// which otherwise dominates the per-coordinate Adam scaling.
fn project_to_energy_sphere(grad: &mut [Complex64], points: &[Complex64]) {
    let dot: f64 = grad.iter().zip(points).map(|(g, p)| g.re * p.re + g.im * p.im).sum();
    let norm: f64 = points.iter().map(|p| p.norm_sqr()).sum();
    for (g, p) in grad.iter_mut().zip(points) {
        *g -= p * (dot / norm);
    }
}

/// Per-coordinate Adam moments; `step` returns the normalised direction.
struct Adam {
    m: Vec<Complex64>,
    v: Vec<Complex64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![Complex64::new(0.0, 0.0); n],
            v: vec![Complex64::new(0.0, 0.0); n],
            t: 0,
        }
    }

    fn step(&mut self, g: &[Complex64]) -> Vec<Complex64> {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let mut out = Vec::with_capacity(g.len());
        for ((m, v), g) in self.m.iter_mut().zip(&mut self.v).zip(g) {
            *m = *m * Self::B1 + g * (1.0 - Self::B1);
            *v = *v * Self::B2 + Complex64::new(g.re * g.re, g.im * g.im) * (1.0 - Self::B2);
            let dir = |m: f64, v: f64| (m / c1) / ((v / c2).sqrt() + 1e-12);
            out.push(Complex64::new(dir(m.re, v.re), dir(m.im, v.im)));
        }
        out
    }
}

/// Gradient of the mean per-sample loss (nats) w.r.t. each point, from
/// `spp` noise draws per point. GMI = m − loss/ln2, so ascent moves against it.
pub(crate) fn loss_gradient(c: &Constellation, noise_var: f64, spp: usize, r: &mut Rng) -> (Vec<Complex64>, f64) {
    let sd = (noise_var / 2.0).sqrt();
    let mut noise = Vec::with_capacity(c.cardinality() * spp);
    for _ in 0..c.cardinality() * spp {
        let a: f64 = r.sample(StandardNormal);
        let b: f64 = r.sample(StandardNormal);
        noise.push(Complex64::new(a * sd, b * sd));
    }
    gradient_for_noise(c.points(), c.labels(), c.bits(), noise_var, &noise)
}

/// Deterministic part of the gradient: noise draw `n` belongs to point
/// `n / spp`. Returns (gradient, mean loss).
pub(crate) fn gradient_for_noise(
    points: &[Complex64],
    labels: &[u32],
    bits: u32,
    noise_var: f64,
    noise: &[Complex64],
) -> (Vec<Complex64>, f64) {
    let n_pts = points.len();
    let spp = noise.len() / n_pts;
    let inv_var = noise_var.recip();
    let metric = BitMetric::new(points, labels, bits);
    let mut ws = metric.workspace();
    let mut sens = vec![0.0; n_pts];
    let mut grad = vec![Complex64::new(0.0, 0.0); n_pts];
    let mut total_loss = 0.0;
    for (idx, n) in noise.iter().enumerate() {
        let k = idx / spp;
        let y = points[k] + n;
        total_loss += metric.loss(k, y, inv_var, &mut ws);
        metric.log_metric_sensitivity(k, &ws, &mut sens);
        // d ln q_j / d x_j = 2(y − x_j)/σ², and y moves with x_k
        let mut via_y = Complex64::new(0.0, 0.0);
        for ((g, p), &s) in grad.iter_mut().zip(points).zip(&sens) {
            if s != 0.0 {
                let d = (y - p) * (2.0 * inv_var * s);
                *g += d;
                via_y += d;
            }
        }
        grad[k] -= via_y;
    }
    let scale = (noise.len() as f64).recip();
    grad.iter_mut().for_each(|g| *g *= scale);
    (grad, total_loss * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_finite_differences() {
        let c = Constellation::square_qam(4).unwrap();
        let var = 0.08;
        let mut r = rng(3);
        let spp = 4;
        let noise: Vec<Complex64> = (0..16 * spp)
            .map(|_| {
                let a: f64 = r.sample(StandardNormal);
                let b: f64 = r.sample(StandardNormal);
                Complex64::new(a, b) * (var / 2.0f64).sqrt()
            })
            .collect();
        let (grad, _) = gradient_for_noise(c.points(), c.labels(), 4, var, &noise);
        let h = 1e-6;
        for j in [0usize, 5, 10, 15] {
            for dir in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
                let mut plus = c.points().to_vec();
                let mut minus = c.points().to_vec();
                plus[j] += dir * h;
                minus[j] -= dir * h;
                let lp = gradient_for_noise(&plus, c.labels(), 4, var, &noise).1;
                let lm = gradient_for_noise(&minus, c.labels(), 4, var, &noise).1;
                let fd = (lp - lm) / (2.0 * h);
                let an = grad[j].re * dir.re + grad[j].im * dir.im;
                assert!((fd - an).abs() < 1e-6 * (1.0 + fd.abs()), "point {j}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn zero_step_returns_baseline() {
        let cfg = ShapingConfig { step: 0.0, iterations: 10, ..Default::default() };
        let out = optimize_shaping(4, 10.0, &cfg).unwrap();
        assert_eq!(out.constellation, Constellation::square_qam(4).unwrap());
        assert_eq!(out.status, ShapingStatus::NoImprovement);
    }

    #[test]
    fn rejects_unsupported_bits() {
        assert!(optimize_shaping(5, 10.0, &ShapingConfig::default()).is_err());
    }
}
