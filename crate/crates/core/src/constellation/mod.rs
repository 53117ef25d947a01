//! Labelled 2D constellations, GMI estimation and geometric shaping.

mod format;
mod gmi;
mod kernel;
pub mod quadrature;
mod shaping;

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{Error, Result};

pub use format::{select_best_format, FormatChoice};
pub use gmi::{bit_metric_loss, gmi_monte_carlo, GmiEstimate, GmiTable, MIN_SAMPLES};
pub use shaping::{optimize_shaping, ShapingConfig, ShapingOutcome, ShapingStatus};

/// Unit-energy point set with a bijective binary labelling.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    labels: Vec<u32>,
    bits: u32,
}

impl Constellation {
    /// Validates labels and rescales to unit mean energy.
    pub fn new(points: Vec<Complex64>, labels: Vec<u32>) -> Result<Self> {
        let n = points.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::BadCardinality(n));
        }
        if labels.len() != n {
            return Err(Error::BadLabeling(format!(
                "{} labels for {n} points",
                labels.len()
            )));
        }
        let bits = n.trailing_zeros();
        let mut seen = HashSet::with_capacity(n);
        for &l in &labels {
            if (l as usize) >= n {
                return Err(Error::BadLabeling(format!("label {l} needs more than {bits} bits")));
            }
            if !seen.insert(l) {
                return Err(Error::BadLabeling(format!("label {l:0width$b} is used twice", width = bits as usize)));
            }
        }
        if points.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite constellation point".into()));
        }
        let mut c = Constellation { points, labels, bits };
        c.normalize()?;
        Ok(c)
    }

    /// Square QAM with a per-axis binary reflected Gray code. `bits` must be
    /// even (2 gives QPSK).
    pub fn square_qam(bits: u32) -> Result<Self> {
        if bits == 0 || bits % 2 != 0 || bits > 16 {
            return Err(Error::InvalidArgument(format!(
                "square QAM needs an even number of bits, got {bits}"
            )));
        }
        let side = 1u32 << (bits / 2);
        let mut points = Vec::with_capacity(1 << bits);
        let mut labels = Vec::with_capacity(1 << bits);
        for i in 0..side {
            for q in 0..side {
                let re = 2.0 * i as f64 - (side - 1) as f64;
                let im = 2.0 * q as f64 - (side - 1) as f64;
                points.push(Complex64::new(re, im));
                labels.push((gray(i) << (bits / 2)) | gray(q));
            }
        }
        Constellation::new(points, labels)
    }

    fn normalize(&mut self) -> Result<()> {
        let energy = self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64;
        if !(energy > 0.0) {
            return Err(Error::InvalidArgument("constellation has zero energy".into()));
        }
        let scale = energy.sqrt().recip();
        for p in &mut self.points {
            *p *= scale;
        }
        Ok(())
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Bits per 2D symbol.
    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn cardinality(&self) -> usize {
        self.points.len()
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Index of the closest point.
    pub fn nearest(&self, y: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Replaces the geometry, keeping labels; renormalises.
    pub(crate) fn with_points(&self, points: Vec<Complex64>) -> Result<Self> {
        Constellation::new(points, self.labels.clone())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path, message),
            other => other,
        })
    }

    /// Parses `label_bits, i, q` rows; `#` starts a comment line.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            label_bits: String,
            i: f64,
            q: f64,
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for row in reader.deserialize::<Row>() {
            rows.push(row.map_err(|e| Error::parse("<constellation>", e))?);
        }
        let n = rows.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::BadCardinality(n));
        }
        let bits = n.trailing_zeros() as usize;
        let mut points = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for r in rows {
            if r.label_bits.len() != bits || !r.label_bits.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(Error::BadLabeling(format!(
                    "label `{}` is not a {bits}-bit string",
                    r.label_bits
                )));
            }
            labels.push(u32::from_str_radix(&r.label_bits, 2).expect("checked binary"));
            points.push(Complex64::new(r.i, r.q));
        }
        Constellation::new(points, labels)
    }

    pub fn to_csv_string(&self, header_comment: Option<&str>) -> String {
        let mut out = Vec::new();
        if let Some(c) = header_comment {
            for line in c.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        let _ = writeln!(out, "label_bits,i,q");
        for (p, l) in self.points.iter().zip(&self.labels) {
            let _ = writeln!(
                out,
                "{:0width$b},{:.12},{:.12}",
                l,
                p.re,
                p.im,
                width = self.bits as usize
            );
        }
        String::from_utf8(out).expect("ascii")
    }

    pub fn save(&self, path: &Path, header_comment: Option<&str>) -> Result<()> {
        std::fs::write(path, self.to_csv_string(header_comment)).map_err(|e| Error::io(path, e))
    }
}

fn gray(x: u32) -> u32 {
    x ^ (x >> 1)
}
