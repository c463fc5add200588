use std::f64::consts::PI;

use kinefit::fitting::Butterworth;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

fn fft(x: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    buf
}

/// Amplitude of the `freq` component of a filtered sinusoid, measured by FFT
/// over a window holding a whole number of periods once transients die out.
fn steady_state_amplitude(filter: &Butterworth, freq: f64, fs: f64, zero_phase: bool) -> f64 {
    let settle = 4000;
    let window = 6000;
    let x: Vec<f64> = (0..settle + window + settle)
        .map(|i| (2.0 * PI * freq * i as f64 / fs).sin())
        .collect();
    let y = if zero_phase {
        filter.filtfilt(&x).unwrap()
    } else {
        filter.filter(&x)
    };
    let seg = &y[settle..settle + window];
    let bin = (freq * window as f64 / fs).round() as usize;
    assert!(
        (bin as f64 - freq * window as f64 / fs).abs() < 1e-9,
        "window must hold whole periods"
    );
    2.0 * fft(seg)[bin].norm() / window as f64
}

fn db(g: f64) -> f64 {
    20.0 * g.log10()
}

/// Bilinear-transform Butterworth magnitude.
fn analytic_gain(order: usize, fc: f64, fs: f64, f: f64) -> f64 {
    let r = (PI * f / fs).tan() / (PI * fc / fs).tan();
    (1.0 + r.powi(2 * order as i32)).powf(-0.5)
}

#[test]
fn impulse_response_spectrum_matches_closed_form() {
    for (order, fc, fs) in [
        (2, 6.0, 60.0),
        (4, 6.0, 60.0),
        (4, 2.0, 60.0),
        (5, 6.0, 200.0),
    ] {
        let filter = Butterworth::lowpass(order, fc, fs).unwrap();
        let n = 4096;
        // Start from rest: a zero sample ahead of the impulse pins the initial state.
        let mut x = vec![0.0; n + 1];
        x[1] = 1.0;
        let h = &filter.filter(&x)[1..];
        let spectrum = fft(h);
        for (k, bin) in spectrum.iter().enumerate().take(n / 2).skip(1) {
            let f = k as f64 * fs / n as f64;
            let want = analytic_gain(order, fc, fs, f);
            let got = bin.norm();
            assert!(
                (got - want).abs() < 1e-8,
                "order {order} f {f}: {got} vs {want}"
            );
            assert!((filter.gain(f, fs) - want).abs() < 1e-10);
        }
    }
}

#[test]
fn dc_gain_is_unity() {
    for order in 1..=8 {
        let filter = Butterworth::lowpass(order, 6.0, 60.0).unwrap();
        assert!((filter.gain(0.0, 60.0) - 1.0).abs() < 1e-9);
        let y = filter.filter(&[2.5; 500]);
        assert!(y.iter().all(|v| (v - 2.5).abs() < 1e-9 * 2.5));
    }
}

#[test]
fn cutoff_tone_is_three_db_down_per_pass() {
    let filter = Butterworth::lowpass(4, 6.0, 60.0).unwrap();
    let single = db(steady_state_amplitude(&filter, 6.0, 60.0, false));
    assert!((single + 3.0).abs() <= 0.5, "single pass {single} dB");
    let double = db(steady_state_amplitude(&filter, 6.0, 60.0, true));
    assert!(
        (double - 2.0 * single).abs() < 0.05,
        "zero phase {double} dB"
    );
}

/// Ten times a 6 Hz cutoff only exists below Nyquist at sampling rates above
/// 120 Hz; at 60 Hz the same ratio is exercised with a 2 Hz cutoff.
#[test]
fn ten_times_cutoff_is_strongly_attenuated() {
    for (fc, fs) in [(6.0, 200.0), (2.0, 60.0)] {
        let filter = Butterworth::lowpass(4, fc, fs).unwrap();
        let att = db(steady_state_amplitude(&filter, 10.0 * fc, fs, false));
        assert!(att < -30.0, "fc {fc} fs {fs}: {att} dB");
    }
}

#[test]
fn zero_phase_output_is_not_delayed() {
    let fs = 60.0;
    let filter = Butterworth::lowpass(4, 6.0, fs).unwrap();
    let x: Vec<f64> = (0..1200)
        .map(|i| {
            let t = i as f64 / fs;
            (2.0 * PI * 1.3 * t).sin() + 0.5 * (2.0 * PI * 2.9 * t + 0.4).cos()
        })
        .collect();
    let y = filter.filtfilt(&x).unwrap();
    let causal = filter.filter(&x);
    let xcorr = |a: &[f64], b: &[f64], lag: isize| -> f64 {
        (200..1000)
            .map(|i| a[i] * b[(i as isize + lag) as usize])
            .sum()
    };
    let peak = |b: &[f64]| {
        (-10..=10)
            .max_by(|&l, &m| xcorr(&x, b, l).total_cmp(&xcorr(&x, b, m)))
            .unwrap()
    };
    assert_eq!(peak(&y), 0);
    assert!(peak(&causal) > 0);
}
