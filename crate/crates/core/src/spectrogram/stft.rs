use std::f64::consts::PI;

use ndarray::Array2;
use realfft::num_complex::Complex64;
use realfft::RealFftPlanner;

use super::{AudioSignal, ComplexSpectrogram, Geometry};
use crate::error::{Error, Result};

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Maps a padded index onto the signal by mirror reflection about the
/// first and last samples (the edge sample is not repeated).
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut k = i.rem_euclid(period);
    if k >= len as isize {
        k = period - k;
    }
    k as usize
}

/// Short-time Fourier transform with a Hann window and centered frames.
///
/// The signal is reflect-padded by half a window on each side, so frame `t`
/// is centered on sample `t * hop_size` and there are `len / hop_size + 1`
/// frames.
pub fn stft(signal: &AudioSignal, window_size: usize, hop_size: usize) -> Result<ComplexSpectrogram> {
    if window_size < 64 || !window_size.is_power_of_two() {
        return Err(Error::invalid(format!(
            "window size must be a power of two >= 64, got {window_size}"
        )));
    }
    if hop_size == 0 || hop_size > window_size {
        return Err(Error::invalid(format!(
            "hop size must be in 1..={window_size}, got {hop_size}"
        )));
    }
    let geometry = Geometry {
        window_size,
        hop_size,
        sample_rate: signal.sample_rate(),
    };
    let x = signal.samples();
    let half = (window_size / 2) as isize;
    let frames = geometry.frames_for(x.len());
    let window = hann_window(window_size);

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(window_size);
    let mut frame = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();

    let mut values = Array2::<Complex64>::zeros((frames, geometry.bins()));
    for t in 0..frames {
        let start = (t * hop_size) as isize - half;
        for (j, (slot, w)) in frame.iter_mut().zip(&window).enumerate() {
            *slot = x[reflect_index(start + j as isize, x.len())] * w;
        }
        fft.process_with_scratch(&mut frame, &mut spectrum, &mut scratch)
            .map_err(|e| Error::invalid(format!("fft: {e}")))?;
        values.row_mut(t).iter_mut().zip(&spectrum).for_each(|(v, s)| *v = *s);
    }
    ComplexSpectrogram::from_parts(values, geometry, x.len())
}

/// Inverse STFT by weighted overlap-add, normalized by the summed squared
/// window so that `istft(stft(x))` reproduces `x`.
///
/// The Hann window needs `hop_size <= window_size / 2` for the squared-window
/// envelope to stay bounded away from zero.
pub fn istft(spec: &ComplexSpectrogram) -> Result<AudioSignal> {
    let g = spec.geometry();
    if g.hop_size * 2 > g.window_size {
        return Err(Error::invalid(format!(
            "hop {} too large for overlap-add with window {}",
            g.hop_size, g.window_size
        )));
    }
    let n = g.window_size;
    let half = n / 2;
    let len = spec.signal_len();
    let window = hann_window(n);

    let mut planner = RealFftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(n);
    let mut spectrum = ifft.make_input_vec();
    let mut frame = ifft.make_output_vec();
    let mut scratch = ifft.make_scratch_vec();

    // Accumulate in padded coordinates, then trim the half-window borders.
    let padded_len = len + n;
    let mut out = vec![0.0; padded_len];
    let mut envelope = vec![0.0; padded_len];
    let scale = 1.0 / n as f64;
    let last = spectrum.len() - 1;
    for (t, row) in spec.values().outer_iter().enumerate() {
        spectrum.iter_mut().zip(row.iter()).for_each(|(s, v)| *s = *v);
        spectrum[0].im = 0.0;
        spectrum[last].im = 0.0;
        ifft.process_with_scratch(&mut spectrum, &mut frame, &mut scratch)
            .map_err(|e| Error::invalid(format!("inverse fft: {e}")))?;
        let start = t * g.hop_size;
        for j in 0..n {
            let k = start + j;
            if k >= padded_len {
                break;
            }
            out[k] += frame[j] * scale * window[j];
            envelope[k] += window[j] * window[j];
        }
    }
    let samples = (0..len)
        .map(|i| {
            let e = envelope[i + half];
            if e > 1e-10 {
                out[i + half] / e
            } else {
                0.0
            }
        })
        .collect();
    AudioSignal::new(samples, g.sample_rate)
}
