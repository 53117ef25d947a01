use num_complex::Complex64;

use super::{pulse, DspConfig, DualPol, Frame};
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::fiber::{gas_loss_db_at, GasLine};
use crate::units::{db_to_lin, lin_to_db};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub fn apply_frequency_offset(x: &mut DualPol, offset_hz: f64, sample_rate_hz: f64) {
    let w = 2.0 * std::f64::consts::PI * offset_hz / sample_rate_hz;
    for pol in x.iter_mut() {
        for (m, v) in pol.iter_mut().enumerate() {
            *v *= Complex64::from_polar(1.0, w * m as f64);
        }
    }
}

/// Pilot-block estimator. For each block of `fo_block_pilots` pilots the
/// 2×2 matrix avg(r·pᴴ) is formed; the phase of Σ tr(M_{k+1} M_kᴴ) over
/// consecutive blocks gives the rotation per block, independent of any
/// static polarisation mixing. `rx` is at symbol rate.
pub fn estimate_frequency_offset(rx: &DualPol, frame: &Frame, cfg: &DspConfig) -> f64 {
    let per_block = cfg.fo_block_pilots;
    let blocks: Vec<[[Complex64; 2]; 2]> = frame
        .pilot_positions
        .chunks_exact(per_block)
        .map(|chunk| {
            let mut m = [[ZERO; 2]; 2];
            for &n in chunk {
                for (a, row) in m.iter_mut().enumerate() {
                    for (b, v) in row.iter_mut().enumerate() {
                        *v += rx[a][n] * frame.symbols[b][n].conj();
                    }
                }
            }
            m
        })
        .collect();
    if blocks.len() < 2 {
        return 0.0;
    }
    let mut acc = ZERO;
    for w in blocks.windows(2) {
        for a in 0..2 {
            for b in 0..2 {
                acc += w[1][a][b] * w[0][a][b].conj();
            }
        }
    }
    if acc == ZERO {
        return 0.0;
    }
    let block_time = (per_block * frame.pilot_stride) as f64 / cfg.symbol_rate_baud;
    acc.arg() / (2.0 * std::f64::consts::PI * block_time)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EqualizerOutput {
    /// Symbol-rate output, carrier phase not yet removed.
    pub symbols: DualPol,
    /// Mean-square error per block over all adaptation passes.
    pub mse_trace: Vec<f64>,
}

struct Mimo {
    taps: usize,
    sps: usize,
    /// w[p][q][t]: contribution of input q to output p.
    w: [[Vec<Complex64>; 2]; 2],
    buf: [Vec<Complex64>; 2],
}

impl Mimo {
    fn new(taps: usize, sps: usize) -> Self {
        let mut w = [[vec![ZERO; taps], vec![ZERO; taps]], [vec![ZERO; taps], vec![ZERO; taps]]];
        w[0][0][taps / 2] = Complex64::new(1.0, 0.0);
        w[1][1][taps / 2] = Complex64::new(1.0, 0.0);
        Mimo {
            taps,
            sps,
            w,
            buf: [vec![ZERO; taps], vec![ZERO; taps]],
        }
    }

    /// Loads the input window around symbol `n` (circular).
    fn load(&mut self, x: &DualPol, n: usize) {
        let len = x[0].len() as isize;
        let centre = (n * self.sps) as isize + (self.taps / 2) as isize;
        for q in 0..2 {
            for t in 0..self.taps {
                let idx = (centre - t as isize).rem_euclid(len) as usize;
                self.buf[q][t] = x[q][idx];
            }
        }
    }

    fn output(&self) -> [Complex64; 2] {
        let mut y = [ZERO; 2];
        for (p, yp) in y.iter_mut().enumerate() {
            for q in 0..2 {
                *yp += self.w[p][q].iter().zip(&self.buf[q]).map(|(w, x)| w * x).sum::<Complex64>();
            }
        }
        y
    }

    fn update(&mut self, err: [Complex64; 2], mu: f64) {
        for (p, e) in err.iter().enumerate() {
            let g = e * mu;
            for q in 0..2 {
                for (w, x) in self.w[p][q].iter_mut().zip(&self.buf[q]) {
                    *w += g * x.conj();
                }
            }
        }
    }
}

/// Pilot-aided phase reference for the LMS error, refreshed at each pilot.
struct PhaseTracker {
    acc: [Complex64; 2],
    rot: [Complex64; 2],
}

impl PhaseTracker {
    fn new() -> Self {
        PhaseTracker {
            acc: [ZERO; 2],
            rot: [Complex64::new(1.0, 0.0); 2],
        }
    }

    fn observe(&mut self, y: [Complex64; 2], d: [Complex64; 2]) {
        for p in 0..2 {
            self.acc[p] = self.acc[p] * 0.5 + y[p] * d[p].conj();
            if self.acc[p] != ZERO {
                self.rot[p] = self.acc[p] / self.acc[p].norm();
            }
        }
    }
}

/// 2×2 fractionally spaced LMS equaliser. Pass one adapts on pilots only,
/// pass two adds decision-directed updates on payload, pass three repeats
/// that at a tenth of the step; the output is produced with the final taps
/// frozen. Error is `d·e^{jθ} − y` with θ from a pilot phase tracker.
pub fn mimo_equalize(rx: &DualPol, frame: &Frame, c: &Constellation, cfg: &DspConfig) -> Result<EqualizerOutput> {
    let sps = cfg.samples_per_symbol;
    let n_sym = frame.len();
    if rx[0].len() != n_sym * sps || rx[1].len() != n_sym * sps {
        return Err(Error::InvalidArgument(format!(
            "equaliser input has {} samples, expected {}",
            rx[0].len(),
            n_sym * sps
        )));
    }
    let input_power = rx[0].iter().chain(&rx[1]).map(|v| v.norm_sqr()).sum::<f64>() / (2 * rx[0].len()) as f64;
    let mut eq = Mimo::new(cfg.mimo_taps, sps);
    let mut trace = Vec::new();
    let mut over = 0usize;
    let passes = [(cfg.mimo_step, false), (cfg.mimo_step, true), (cfg.mimo_step / 10.0, true)];

    for (pass, &(mu, decision_directed)) in passes.iter().enumerate() {
        let mut tracker = PhaseTracker::new();
        let mut block_err = 0.0;
        let mut block_n = 0usize;
        for n in 0..n_sym {
            eq.load(rx, n);
            let y = eq.output();
            let pilot = frame.is_pilot(n);
            let d = if pilot {
                [frame.symbols[0][n], frame.symbols[1][n]]
            } else if decision_directed {
                let mut d = [ZERO; 2];
                for p in 0..2 {
                    d[p] = c.points()[c.nearest(y[p] * tracker.rot[p].conj())];
                }
                d
            } else {
                [ZERO; 2]
            };
            if pilot || decision_directed {
                let err = [d[0] * tracker.rot[0] - y[0], d[1] * tracker.rot[1] - y[1]];
                block_err += (err[0].norm_sqr() + err[1].norm_sqr()) / 2.0;
                block_n += 1;
                eq.update(err, mu);
            }
            if pilot {
                tracker.observe(y, d);
            }
            if (n + 1) % cfg.mse_block == 0 || n + 1 == n_sym {
                if block_n > 0 {
                    let mse = block_err / block_n as f64;
                    trace.push(mse);
                    if !mse.is_finite() {
                        return Err(Error::EqualizerDiverged { block: trace.len() - 1 });
                    }
                    // the pilot-only start-up pass is allowed to begin far off
                    if pass > 0 && mse > input_power {
                        over += 1;
                        if over >= 3 {
                            return Err(Error::EqualizerDiverged { block: trace.len() - 1 });
                        }
                    } else {
                        over = 0;
                    }
                }
                block_err = 0.0;
                block_n = 0;
            }
        }
    }

    let mut out: DualPol = [Vec::with_capacity(n_sym), Vec::with_capacity(n_sym)];
    for n in 0..n_sym {
        eq.load(rx, n);
        let y = eq.output();
        out[0].push(y[0]);
        out[1].push(y[1]);
    }
    Ok(EqualizerOutput {
        symbols: out,
        mse_trace: trace,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CprOutput {
    pub symbols: DualPol,
    /// Estimated carrier phase per symbol, per polarisation.
    pub phase: [Vec<f64>; 2],
}

/// Pilot-based phase recovery: centred sliding sum of pilot phasors over
/// `window` pilots, unwrapped, linearly interpolated between pilots and
/// held constant beyond the first and last pilot.
pub fn carrier_phase_recovery(symbols: &DualPol, frame: &Frame, window: usize) -> Result<CprOutput> {
    if window == 0 {
        return Err(Error::InvalidArgument("CPR window must be >= 1".into()));
    }
    let pos = &frame.pilot_positions;
    let n = symbols[0].len();
    if pos.is_empty() {
        return Err(Error::InvalidArgument("frame has no pilots".into()));
    }
    let before = (window - 1) / 2;
    let after = window - 1 - before;
    let mut out: DualPol = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut phase: [Vec<f64>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for p in 0..2 {
        let z: Vec<Complex64> = pos.iter().map(|&i| symbols[p][i] * frame.symbols[p][i].conj()).collect();
        let mut est = Vec::with_capacity(z.len());
        let mut prev = 0.0f64;
        for i in 0..z.len() {
            let lo = i.saturating_sub(before);
            let hi = (i + after).min(z.len() - 1);
            let s: Complex64 = z[lo..=hi].iter().sum();
            let mut a = s.arg();
            if i > 0 {
                let two_pi = 2.0 * std::f64::consts::PI;
                a -= two_pi * ((a - prev) / two_pi).round();
            }
            est.push(a);
            prev = a;
        }
        let mut k = 0usize;
        for m in 0..n {
            while k + 1 < pos.len() && pos[k + 1] <= m {
                k += 1;
            }
            let ph = if m <= pos[0] {
                est[0]
            } else if k + 1 >= pos.len() {
                est[pos.len() - 1]
            } else {
                let t = (m - pos[k]) as f64 / (pos[k + 1] - pos[k]) as f64;
                est[k] + t * (est[k + 1] - est[k])
            };
            phase[p].push(ph);
            out[p].push(symbols[p][m] * Complex64::from_polar(1.0, -ph));
        }
    }
    Ok(CprOutput { symbols: out, phase })
}

/// True when some line causes more than 0.01 dB of loss inside the occupied
/// channel bandwidth.
pub fn gla_lines_overlap(lines: &[GasLine], cfg: &DspConfig) -> bool {
    let edge = cfg.symbol_rate_baud * (1.0 + cfg.rrc_rolloff) / 2.0;
    lines.iter().any(|l| {
        let nearest = l.center_hz.clamp(-edge, edge);
        l.loss_db_at(nearest) > 0.01
    })
}

/// Regularised inverse of the gas-line magnitude response,
/// `G = (H* + λ)/(|H|² + λ)`: zero-forcing at λ = 0, identity as λ → ∞ or
/// where H = 1. Returns false and leaves `x` untouched when no line overlaps
/// the channel.
pub fn gla_compensate(x: &mut DualPol, lines: &[GasLine], cfg: &DspConfig, regularization: f64) -> bool {
    if !gla_lines_overlap(lines, cfg) {
        return false;
    }
    let n = x[0].len();
    let fs = cfg.sample_rate_hz();
    let resp: Vec<Complex64> = (0..n)
        .map(|k| {
            let h = db_to_lin(-gas_loss_db_at(lines, pulse::bin_freq(k, n, fs)) / 2.0);
            Complex64::new((h + regularization) / (h * h + regularization), 0.0)
        })
        .collect();
    if resp.iter().all(|g| *g == Complex64::new(1.0, 0.0)) {
        return false;
    }
    for pol in x.iter_mut() {
        pulse::filter_freq(pol, &resp);
    }
    true
}

/// Data-aided SNR over payload symbols with a least-squares gain per
/// polarisation, in dB. `rx` is at symbol rate.
pub fn data_aided_snr(rx: &DualPol, frame: &Frame) -> f64 {
    let mut signal = 0.0;
    let mut noise = 0.0;
    for p in 0..2 {
        let mut cross = ZERO;
        let mut energy = 0.0;
        for (n, slot) in frame.payload[p].iter().enumerate() {
            if slot.is_some() {
                cross += rx[p][n] * frame.symbols[p][n].conj();
                energy += frame.symbols[p][n].norm_sqr();
            }
        }
        if energy == 0.0 {
            continue;
        }
        let a = cross / energy;
        for (n, slot) in frame.payload[p].iter().enumerate() {
            if slot.is_some() {
                noise += (rx[p][n] - a * frame.symbols[p][n]).norm_sqr();
            }
        }
        signal += a.norm_sqr() * energy;
    }
    lin_to_db(signal / noise)
}
