use num_complex::Complex64;

/// Metric terms this far (in nats) below the transmitted point's are dropped.
const PRUNE_NATS: f64 = 40.0;

/// Bit-metric loss evaluator shared by the Monte-Carlo estimator and the
/// shaping gradient. Labels are stored as per-bit 0/1 masks so the per-bit
/// sums reduce to dot products.
pub(crate) struct BitMetric<'a> {
    points: &'a [Complex64],
    labels: &'a [u32],
    ones: Vec<Vec<f64>>,
    zeros: Vec<Vec<f64>>,
}

/// Per-sample intermediate values, reused across calls.
pub(crate) struct Workspace {
    pub e: Vec<f64>,
    /// exp(min_e − e_j), zero for pruned terms.
    pub w: Vec<f64>,
    pub total: f64,
    /// Sum of `w` over points sharing bit i with the transmitted point.
    pub same: Vec<f64>,
    /// Indices with non-zero `w`.
    active: Vec<u32>,
}

impl<'a> BitMetric<'a> {
    pub fn new(points: &'a [Complex64], labels: &'a [u32], bits: u32) -> Self {
        let ones: Vec<Vec<f64>> = (0..bits)
            .map(|i| labels.iter().map(|l| ((l >> i) & 1) as f64).collect())
            .collect();
        let zeros = ones.iter().map(|m| m.iter().map(|v| 1.0 - v).collect()).collect();
        BitMetric {
            points,
            labels,
            ones,
            zeros,
        }
    }

    pub fn bits(&self) -> usize {
        self.ones.len()
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            e: vec![0.0; self.points.len()],
            w: vec![0.0; self.points.len()],
            total: 0.0,
            same: vec![0.0; self.bits()],
            active: Vec::with_capacity(self.points.len()),
        }
    }

    /// Σᵢ ln(Σ_x q(y|x) / Σ_{x: bᵢ(x)=bᵢ(k)} q(y|x)) in nats, with
    /// q = exp(−|y−x|²·inv_var).
    pub fn loss(&self, k: usize, y: Complex64, inv_var: f64, ws: &mut Workspace) -> f64 {
        let mut base = f64::INFINITY;
        for (e, p) in ws.e.iter_mut().zip(self.points) {
            *e = (y - p).norm_sqr() * inv_var;
            base = base.min(*e);
        }
        let cutoff = ws.e[k] + PRUNE_NATS;
        let mut total = 0.0;
        ws.active.clear();
        for (j, (w, &e)) in ws.w.iter_mut().zip(&ws.e).enumerate() {
            if e > cutoff {
                *w = 0.0;
            } else {
                *w = (base - e).exp();
                total += *w;
                ws.active.push(j as u32);
            }
        }
        ws.total = total;
        let lk = self.labels[k];
        let bits = self.bits();
        ws.same.iter_mut().for_each(|s| *s = 0.0);
        if ws.active.len() * 4 < ws.w.len() {
            // few unpruned terms (high SNR): visit only those
            for &j in &ws.active {
                let w = ws.w[j as usize];
                let agree = !(self.labels[j as usize] ^ lk);
                for (i, s) in ws.same.iter_mut().enumerate().take(bits) {
                    *s += w * ((agree >> i) & 1) as f64;
                }
            }
        } else {
            for i in 0..bits {
                let mask = if (lk >> i) & 1 == 1 { &self.ones[i] } else { &self.zeros[i] };
                ws.same[i] = mask.iter().zip(&ws.w).map(|(m, w)| m * w).sum();
            }
        }
        ws.same.iter().map(|s| (total / s).ln()).sum()
    }

    /// After `loss`, the derivative of the loss with respect to ln q(y|x_j),
    /// i.e. w_j·(m/W − Σᵢ [bᵢ(j)=bᵢ(k)]/Sᵢ), written into `out`.
    pub fn log_metric_sensitivity(&self, k: usize, ws: &Workspace, out: &mut [f64]) {
        let lk = self.labels[k];
        let m = self.bits() as f64;
        let mut base = m / ws.total;
        for i in 0..self.bits() {
            if (lk >> i) & 1 == 0 {
                base -= 1.0 / ws.same[i];
            }
        }
        out.iter_mut().for_each(|v| *v = base);
        for i in 0..self.bits() {
            // bit 1 at k: same-set indicator is the ones mask; bit 0: 1 − ones (constant part is in `base`)
            let c = if (lk >> i) & 1 == 1 { -1.0 } else { 1.0 } / ws.same[i];
            for (o, msk) in out.iter_mut().zip(&self.ones[i]) {
                *o += c * msk;
            }
        }
        for (o, w) in out.iter_mut().zip(&ws.w) {
            *o *= w;
        }
    }
}
