//! Butterworth low-pass design and zero-phase forward–backward filtering.

use std::f64::consts::PI;

use crate::error::{HarError, Result};
use crate::signal::SignalRecord;

pub const DEFAULT_CUTOFF_HZ: f64 = 15.0;
pub const DEFAULT_ORDER: usize = 4;

/// One biquad in transposed direct form II, `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    /// State that makes the section output its DC gain times `x0` for a
    /// constant input `x0`.
    fn steady_state(&self, x0: f64) -> [f64; 2] {
        let y = self.dc_gain() * x0;
        [y - self.b[0] * x0, self.b[2] * x0 - self.a[2] * y]
    }

    fn run(&self, data: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        for v in data.iter_mut() {
            let x = *v;
            let y = b0 * x + z[0];
            z[0] = b1 * x - a1 * y + z[1];
            z[1] = b2 * x - a2 * y;
            *v = y;
        }
    }
}

/// Digital Butterworth low-pass as cascaded second-order sections, designed
/// by the bilinear transform with the cutoff pre-warped, so the magnitude at
/// the cutoff is exactly 1/√2.
#[derive(Debug, Clone, PartialEq)]
pub struct ButterworthLowpass {
    pub cutoff_hz: f64,
    pub fs: f64,
    pub order: usize,
    pub sections: Vec<Biquad>,
}

impl ButterworthLowpass {
    pub fn design(cutoff_hz: f64, fs: f64, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(HarError::config("filter order must be positive"));
        }
        if !(fs > 0.0) {
            return Err(HarError::config(format!("sampling rate must be positive, got {fs}")));
        }
        if !(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0) {
            return Err(HarError::config(format!(
                "cutoff {cutoff_hz} Hz must lie strictly between 0 and Nyquist ({} Hz)",
                fs / 2.0
            )));
        }
        let k = (PI * cutoff_hz / fs).tan();
        let k2 = k * k;
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for i in 0..order / 2 {
            let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
            // 1/Q for the conjugate pole pair at angle theta
            let inv_q = 2.0 * theta.sin();
            let norm = 1.0 / (1.0 + k * inv_q + k2);
            let b0 = k2 * norm;
            sections.push(Biquad {
                b: [b0, 2.0 * b0, b0],
                a: [1.0, 2.0 * (k2 - 1.0) * norm, (1.0 - k * inv_q + k2) * norm],
            });
        }
        if order % 2 == 1 {
            let norm = 1.0 / (1.0 + k);
            sections.push(Biquad {
                b: [k * norm, k * norm, 0.0],
                a: [1.0, (k - 1.0) * norm, 0.0],
            });
        }
        Ok(Self {
            cutoff_hz,
            fs,
            order,
            sections,
        })
    }

    /// Squared magnitude of one pass at `freq_hz`, evaluated from the sections.
    pub fn power_gain(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / self.fs;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        self.sections
            .iter()
            .map(|s| {
                let nr = s.b[0] + s.b[1] * c1 + s.b[2] * c2;
                let ni = -(s.b[1] * s1 + s.b[2] * s2);
                let dr = s.a[0] + s.a[1] * c1 + s.a[2] * c2;
                let di = -(s.a[1] * s1 + s.a[2] * s2);
                (nr * nr + ni * ni) / (dr * dr + di * di)
            })
            .product()
    }

    /// Edge padding length used by [`filtfilt`](Self::filtfilt).
    pub fn pad_len(&self) -> usize {
        3 * self.order
    }

    fn forward(&self, data: &mut [f64]) {
        let mut x0 = data[0];
        for s in &self.sections {
            let z = s.steady_state(x0);
            s.run(data, z);
            x0 *= s.dc_gain();
        }
    }

    /// Forward then backward pass over an odd-reflection padded copy.
    fn forward_backward(&self, x: &[f64]) -> Vec<f64> {
        let pad = self.pad_len();
        let n = x.len();
        let (first, last) = (x[0], x[n - 1]);
        let mut buf = Vec::with_capacity(n + 2 * pad);
        buf.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        buf.extend_from_slice(x);
        buf.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));
        self.forward(&mut buf);
        buf.reverse();
        self.forward(&mut buf);
        buf.reverse();
        buf[pad..pad + n].to_vec()
    }

    /// Zero-phase filtering. The forward–backward result is averaged with the
    /// backward–forward result so the operator commutes with time reversal
    /// exactly, edges included. Interior response is |H(f)|² either way.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() <= self.pad_len() {
            return Err(HarError::Filter(format!(
                "signal of {} samples is too short for order-{} zero-phase filtering (needs > {})",
                x.len(),
                self.order,
                self.pad_len()
            )));
        }
        let fb = self.forward_backward(x);
        let mut rev: Vec<f64> = x.iter().rev().copied().collect();
        rev = self.forward_backward(&rev);
        Ok(fb
            .iter()
            .zip(rev.iter().rev())
            .map(|(a, b)| 0.5 * (a + b))
            .collect())
    }
}

/// Zero-phase Butterworth low-pass of a whole record.
pub fn lowpass_filter(record: &SignalRecord, cutoff_hz: f64, order: usize) -> Result<SignalRecord> {
    let filter = ButterworthLowpass::design(cutoff_hz, record.fs, order)?;
    let samples = filter.filtfilt(&record.samples)?;
    Ok(SignalRecord {
        samples,
        ..record.clone()
    })
}
