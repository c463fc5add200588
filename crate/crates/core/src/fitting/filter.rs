use std::f64::consts::PI;

use nalgebra::Complex;

use crate::error::{Error, Result};

/// One biquad (or first-order section with `b2 = a2 = 0`), normalized to
/// unit DC gain. `a0` is implicitly 1.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Section {
    b: [f64; 3],
    a: [f64; 3],
}

impl Section {
    /// Runs the section over `x` in place, starting from the steady state of
    /// a constant input equal to `x[0]`.
    fn run(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let mut z1 = (1.0 - b0) * x0;
        let mut z2 = (b2 - a2) * x0;
        for v in x.iter_mut() {
            let xi = *v;
            let y = b0 * xi + z1;
            z1 = b1 * xi - a1 * y + z2;
            z2 = b2 * xi - a2 * y;
            *v = y;
        }
    }

    fn response(&self, z: Complex<f64>) -> Complex<f64> {
        let zi = z.inv();
        let num = self.b[0] + zi * (self.b[1] + zi * self.b[2]);
        let den = 1.0 + zi * (self.a[1] + zi * self.a[2]);
        num / den
    }
}

/// Digital low-pass Butterworth filter as cascaded second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    sections: Vec<Section>,
    order: usize,
}

impl Butterworth {
    pub fn lowpass(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument(
                "filter order must be at least 1".into(),
            ));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate {sample_rate_hz} Hz"
            )));
        }
        let nyquist = sample_rate_hz / 2.0;
        if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
            return Err(Error::InvalidArgument(format!(
                "cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz for {sample_rate_hz} Hz sampling"
            )));
        }

        // Prewarped analog cutoff, then bilinear map of each left-half-plane pole.
        let k = 2.0 * sample_rate_hz;
        let wc = k * (PI * cutoff_hz / sample_rate_hz).tan();
        let digital_pole = |m: usize| {
            let theta = PI * (2 * m + order + 1) as f64 / (2 * order) as f64;
            let s = Complex::from_polar(wc, theta);
            (k + s) / (k - s)
        };

        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for m in 0..order / 2 {
            let p = digital_pole(m);
            let a = [1.0, -2.0 * p.re, p.norm_sqr()];
            let gain = (a[0] + a[1] + a[2]) / 4.0;
            sections.push(Section {
                b: [gain, 2.0 * gain, gain],
                a,
            });
        }
        if order % 2 == 1 {
            let p = digital_pole(order / 2).re;
            let gain = (1.0 - p) / 2.0;
            sections.push(Section {
                b: [gain, gain, 0.0],
                a: [1.0, -p, 0.0],
            });
        }
        Ok(Butterworth { sections, order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Magnitude response at `freq_hz`.
    pub fn gain(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let z = Complex::from_polar(1.0, 2.0 * PI * freq_hz / sample_rate_hz);
        self.sections
            .iter()
            .map(|s| s.response(z))
            .product::<Complex<f64>>()
            .norm()
    }

    /// Single causal pass, initialized at the steady state of the first sample.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            s.run(&mut y);
        }
        y
    }

    /// Zero-phase forward-backward pass with odd-symmetric edge padding of
    /// `3 · order` samples.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = 3 * self.order;
        if x.len() <= pad {
            return Err(Error::InvalidArgument(format!(
                "series of {} samples is too short for zero-phase filtering (need more than {pad})",
                x.len()
            )));
        }
        let n = x.len();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let mut y = self.filter(&ext);
        y.reverse();
        let mut y = self.filter(&y);
        y.reverse();
        Ok(y[pad..pad + n].to_vec())
    }
}

/// Zero-phase low-pass filtering of every channel independently.
pub fn butterworth_lowpass(
    channels: &[Vec<f64>],
    cutoff_hz: f64,
    sample_rate_hz: f64,
    order: usize,
) -> Result<Vec<Vec<f64>>> {
    let filt = Butterworth::lowpass(order, cutoff_hz, sample_rate_hz)?;
    channels.iter().map(|c| filt.filtfilt(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_passes_unchanged() {
        let x = vec![3.25; 100];
        for order in 1..=6 {
            let y = butterworth_lowpass(std::slice::from_ref(&x), 6.0, 60.0, order).unwrap();
            assert!(y[0].iter().all(|v| (v - 3.25).abs() < 1e-9));
        }
    }

    #[test]
    fn gain_is_half_power_at_cutoff() {
        for order in 1..=8 {
            let f = Butterworth::lowpass(order, 6.0, 60.0).unwrap();
            assert!((f.gain(0.0, 60.0) - 1.0).abs() < 1e-12);
            assert!((20.0 * f.gain(6.0, 60.0).log10() + 3.0103).abs() < 1e-3);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Butterworth::lowpass(4, 30.0, 60.0).is_err());
        assert!(Butterworth::lowpass(4, 0.0, 60.0).is_err());
        assert!(Butterworth::lowpass(0, 6.0, 60.0).is_err());
        let f = Butterworth::lowpass(4, 6.0, 60.0).unwrap();
        assert!(f.filtfilt(&[1.0; 12]).is_err());
        assert!(f.filtfilt(&[1.0; 13]).is_ok());
    }

    #[test]
    fn ramp_passes_through_zero_phase() {
        // Away from the edge transients a linear trend comes back unshifted.
        let x: Vec<f64> = (0..400).map(|i| 0.01 * i as f64).collect();
        let y = Butterworth::lowpass(4, 6.0, 60.0)
            .unwrap()
            .filtfilt(&x)
            .unwrap();
        for (a, b) in x.iter().zip(&y).skip(100).take(200) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
