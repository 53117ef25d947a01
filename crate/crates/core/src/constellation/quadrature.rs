//! Deterministic GMI by Gauss-Hermite product quadrature over the complex
//! noise. Independent of the Monte-Carlo path; used to validate it and to
//! judge shaping results.

use num_complex::Complex64;

use super::Constellation;
use crate::error::{Error, Result};
use crate::units::db_to_lin;

pub const DEFAULT_ORDER: usize = 16;

/// Nodes and weights for ∫ e^{−x²} f(x) dx, roots found by Newton iteration
/// on the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// GMI of `c` at `snr_db` with an `order`×`order` node grid per point.
pub fn gmi_quadrature(c: &Constellation, snr_db: f64, order: usize) -> Result<f64> {
    if order < 2 {
        return Err(Error::InvalidArgument("quadrature order must be at least 2".into()));
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument("SNR must be finite".into()));
    }
    let noise_var = db_to_lin(snr_db).recip();
    let sigma = noise_var.sqrt();
    let (t, w) = gauss_hermite(order);
    let pts = c.points();
    let labels = c.labels();
    let bits = c.bits() as usize;
    let mut metric = vec![0.0; pts.len()];
    let mut num = vec![0.0; bits];

    let mut acc = 0.0;
    for (k, &xk) in pts.iter().enumerate() {
        let mut acc_k = 0.0;
        for (a, &ta) in t.iter().enumerate() {
            for (b, &tb) in t.iter().enumerate() {
                let y = xk + Complex64::new(sigma * ta, sigma * tb);
                // log q(y|x_j) relative to the transmitted point
                for (m, p) in metric.iter_mut().zip(pts) {
                    *m = -((y - p).norm_sqr() - (y - xk).norm_sqr()) / noise_var;
                }
                let peak = metric.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut den = 0.0;
                num.iter_mut().for_each(|v| *v = 0.0);
                for (j, &mj) in metric.iter().enumerate() {
                    if mj < peak - 50.0 {
                        continue;
                    }
                    let q = (mj - peak).exp();
                    den += q;
                    for (i, v) in num.iter_mut().enumerate() {
                        if (labels[j] >> i) & 1 == (labels[k] >> i) & 1 {
                            *v += q;
                        }
                    }
                }
                let log_den = peak + den.ln();
                let mut loss = 0.0;
                for (i, &v) in num.iter().enumerate() {
                    let log_num = if v > 0.0 {
                        peak + v.ln()
                    } else {
                        // Far-out nodes: the matching subset underflowed
                        // against the global peak, so rescale on its own.
                        let bit = (labels[k] >> i) & 1;
                        let agree = || metric.iter().zip(labels).filter(|(_, &l)| (l >> i) & 1 == bit);
                        let pk = agree().map(|(m, _)| *m).fold(f64::NEG_INFINITY, f64::max);
                        pk + agree().map(|(m, _)| (m - pk).exp()).sum::<f64>().ln()
                    };
                    loss += (log_num - log_den) / std::f64::consts::LN_2;
                }
                acc_k += w[a] * w[b] * loss;
            }
        }
        acc += acc_k / std::f64::consts::PI;
    }
    let gmi = bits as f64 + acc / pts.len() as f64;
    Ok(gmi.clamp(0.0, bits as f64))
}
