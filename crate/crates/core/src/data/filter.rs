//! Butterworth low-pass design (bilinear transform with pre-warping) and
//! zero-phase forward-backward filtering.

use alloc::vec::Vec;
use core::f64::consts::PI;
use libm::{cos, sin, sqrt, tan};

use super::DataError;

/// One second-order section `[b0, b1, b2, a1, a2]` with `a0 = 1`.
pub type Section = [f64; 5];

#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    pub order: usize,
    pub sections: Vec<Section>,
}

impl Butterworth {
    pub fn lowpass(order: usize, cutoff_hz: f64, fs_hz: f64) -> Result<Self, DataError> {
        if order == 0 || !(cutoff_hz > 0.0) || !(cutoff_hz < fs_hz / 2.0) {
            return Err(DataError::FilterDesign { order, cutoff_hz, fs_hz });
        }
        let k = 2.0 * fs_hz;
        let wc = k * tan(PI * cutoff_hz / fs_hz);
        let mut sections = Vec::new();
        for i in 0..order / 2 {
            // analog pole pair at wc·e^{±jφ}
            let phi = PI / 2.0 + PI * (2 * i + 1) as f64 / (2 * order) as f64;
            let a1 = -2.0 * wc * cos(phi);
            let w2 = wc * wc;
            let d0 = k * k + a1 * k + w2;
            sections.push([
                w2 / d0,
                2.0 * w2 / d0,
                w2 / d0,
                (2.0 * w2 - 2.0 * k * k) / d0,
                (k * k - a1 * k + w2) / d0,
            ]);
        }
        if order % 2 == 1 {
            let d0 = k + wc;
            sections.push([wc / d0, wc / d0, 0.0, (wc - k) / d0, 0.0]);
        }
        Ok(Self { order, sections })
    }

    /// Single-pass magnitude response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, fs_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / fs_hz;
        // z^-1 = e^{-jw}
        let (c1, s1) = (cos(w), -sin(w));
        let (c2, s2) = (cos(2.0 * w), -sin(2.0 * w));
        let mut mag = 1.0;
        for s in &self.sections {
            let nr = s[0] + s[1] * c1 + s[2] * c2;
            let ni = s[1] * s1 + s[2] * s2;
            let dr = 1.0 + s[3] * c1 + s[4] * c2;
            let di = s[3] * s1 + s[4] * s2;
            mag *= sqrt((nr * nr + ni * ni) / (dr * dr + di * di));
        }
        mag
    }

    /// Causal pass, states initialized to the steady state of `x[0]`.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = x.to_vec();
        if x.is_empty() {
            return y;
        }
        for s in &self.sections {
            let x0 = y[0];
            // steady state of the transposed direct form for a constant input
            // (every section has unit DC gain)
            let mut z2 = (s[2] - s[4]) * x0;
            let mut z1 = (1.0 - s[0]) * x0;
            for v in y.iter_mut() {
                let xin = *v;
                let out = s[0] * xin + z1;
                z1 = s[1] * xin - s[3] * out + z2;
                z2 = s[2] * xin - s[4] * out;
                *v = out;
            }
        }
        y
    }

    /// Zero-phase forward-backward filtering with odd-extension padding.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = (3 * (self.order + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }
        let mut y = self.filter(&ext);
        y.reverse();
        let mut y = self.filter(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }

    /// Zero-phase filtering of each column of a row-major signal.
    pub fn filtfilt_rows<const D: usize>(&self, rows: &mut [[f64; D]]) {
        let mut col = Vec::with_capacity(rows.len());
        for d in 0..D {
            col.clear();
            col.extend(rows.iter().map(|r| r[d]));
            for (r, v) in rows.iter_mut().zip(self.filtfilt(&col)) {
                r[d] = v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_is_minus_three_db_for_both_orders() {
        for (order, fc) in [(1, 10.0), (4, 1.0), (2, 5.0), (3, 7.0)] {
            let f = Butterworth::lowpass(order, fc, 60.0).unwrap();
            let db = 20.0 * libm::log10(f.magnitude(fc, 60.0));
            assert!((db + 3.0103).abs() < 0.05, "order {order}: {db} dB");
        }
    }

    #[test]
    fn matches_analog_prototype_after_prewarping() {
        // |H(e^{jw})| equals the analog Butterworth magnitude at the warped
        // frequency 2fs·tan(w/2)
        let f = Butterworth::lowpass(4, 1.0, 60.0).unwrap();
        let wc = 120.0 * tan(PI / 60.0);
        for freq in [0.3, 1.0, 2.0, 5.0, 12.0] {
            let wa = 120.0 * tan(PI * freq / 60.0);
            let analog = 1.0 / sqrt(1.0 + libm::pow(wa / wc, 8.0));
            assert!((f.magnitude(freq, 60.0) - analog).abs() < 1e-9, "{freq}");
        }
    }

    #[test]
    fn nyquist_is_deeply_attenuated() {
        let f = Butterworth::lowpass(4, 1.0, 60.0).unwrap();
        let db = 20.0 * libm::log10(f.magnitude(30.0, 60.0).max(1e-300));
        assert!(db <= -110.0, "{db}");
        let f = Butterworth::lowpass(4, 1.0, 60.0).unwrap();
        // a 30 Hz sinusoid sampled at 60 Hz alternates sign
        let x: Vec<f64> = (0..6000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let y = f.filter(&x);
        let tail = y[3000..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(20.0 * libm::log10(tail.max(1e-300)) <= -110.0, "{tail}");
    }

    #[test]
    fn constant_passes_unchanged() {
        for order in [1, 4] {
            let f = Butterworth::lowpass(order, 1.0, 60.0).unwrap();
            for v in f.filtfilt(&[2.5; 200]) {
                assert!((v - 2.5).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_phase_keeps_pulse_peak_in_place() {
        let f = Butterworth::lowpass(4, 1.0, 60.0).unwrap();
        let x: Vec<f64> = (0..601).map(|i| libm::exp(-((i as f64 - 300.0) / 20.0).powi(2))).collect();
        let y = f.filtfilt(&x);
        let peak = y.iter().enumerate().fold((0, f64::MIN), |b, (i, v)| if *v > b.1 { (i, *v) } else { b }).0;
        assert_eq!(peak, 300);
        for i in 0..200 {
            assert!((y[300 - i] - y[300 + i]).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_cutoff_is_rejected() {
        assert!(Butterworth::lowpass(4, 30.0, 60.0).is_err());
        assert!(Butterworth::lowpass(0, 1.0, 60.0).is_err());
        assert!(Butterworth::lowpass(1, -1.0, 60.0).is_err());
    }
}
