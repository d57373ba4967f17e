use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{FeatureConfig, FrameMatrix};
use crate::error::{Error, Result};

/// Number of frames produced for `num_samples` samples.
pub fn frame_count(num_samples: usize, window: usize, hop: usize) -> usize {
    if num_samples < window || hop == 0 {
        0
    } else {
        (num_samples - window) / hop + 1
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale spanning 0 Hz to Nyquist,
/// evaluated at the `fft_size / 2 + 1` bin centre frequencies.
pub fn mel_filterbank(num_filters: usize, fft_size: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let sr = f64::from(sample_rate);
    let top = hz_to_mel(sr / 2.0);
    let edges: Vec<f64> = (0..num_filters + 2)
        .map(|i| mel_to_hz(top * i as f64 / (num_filters + 1) as f64))
        .collect();
    let bins = fft_size / 2 + 1;
    (0..num_filters)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sr / fft_size as f64;
                    if f > lo && f <= mid {
                        (f - lo) / (mid - lo)
                    } else if f > mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

fn check_input(waveform: &[f32], config: &FeatureConfig) -> Result<(usize, usize)> {
    config.validate()?;
    let window = config.window_samples();
    let hop = config.hop_samples();
    if waveform.len() < window {
        return Err(Error::Validation(format!(
            "waveform has {} samples, shorter than one {window}-sample window",
            waveform.len()
        )));
    }
    if waveform.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("waveform".into()));
    }
    Ok((window, hop))
}

/// Log mel filterbank energies per frame, before the cosine transform.
pub(crate) fn log_mel_energies(waveform: &[f32], config: &FeatureConfig) -> Result<Vec<Vec<f64>>> {
    let (window, hop) = check_input(waveform, config)?;
    let fft_size = window.next_power_of_two();
    let bank = mel_filterbank(config.num_mel_filters, fft_size, config.sample_rate);
    let taper = hamming(window);

    let mut emphasized = Vec::with_capacity(waveform.len());
    let mut prev = 0.0f64;
    for (i, &s) in waveform.iter().enumerate() {
        let s = f64::from(s);
        emphasized.push(if i == 0 { s } else { s - config.pre_emphasis * prev });
        prev = s;
    }

    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut magnitude = vec![0.0; fft_size / 2 + 1];
    let n = frame_count(waveform.len(), window, hop);
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let chunk = &emphasized[t * hop..t * hop + window];
        for (slot, (x, w)) in buf.iter_mut().zip(chunk.iter().zip(&taper)) {
            *slot = Complex::new(x * w, 0.0);
        }
        buf[window..].fill(Complex::new(0.0, 0.0));
        fft.process(&mut buf);
        for (m, c) in magnitude.iter_mut().zip(&buf) {
            *m = c.norm();
        }
        out.push(
            bank.iter()
                .map(|filter| {
                    let e: f64 = filter.iter().zip(&magnitude).map(|(f, m)| f * m).sum();
                    e.max(config.log_floor).ln()
                })
                .collect(),
        );
    }
    Ok(out)
}

/// Static MFCCs: pre-emphasis, Hamming-windowed frames, magnitude spectrum,
/// mel filterbank, floored log and an orthonormal DCT-II truncated to
/// `num_cepstra` coefficients (c0 kept).
pub fn extract_mfcc(waveform: &[f32], config: &FeatureConfig) -> Result<FrameMatrix> {
    let energies = log_mel_energies(waveform, config)?;
    let m = config.num_mel_filters;
    let dct: Vec<Vec<f64>> = (0..config.num_cepstra)
        .map(|k| {
            let scale = if k == 0 { (1.0 / m as f64).sqrt() } else { (2.0 / m as f64).sqrt() };
            (0..m)
                .map(|j| scale * (PI * k as f64 * (j as f64 + 0.5) / m as f64).cos())
                .collect()
        })
        .collect();
    let mut data = Vec::with_capacity(energies.len() * config.num_cepstra);
    for frame in &energies {
        for basis in &dct {
            let c: f64 = basis.iter().zip(frame).map(|(b, e)| b * e).sum();
            data.push(c as f32);
        }
    }
    FrameMatrix::new(data, energies.len(), config.num_cepstra)
}
