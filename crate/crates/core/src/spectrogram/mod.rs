//! Time-frequency representations of a monaural signal.
//!
//! Frames are rows and frequency bins are columns throughout the crate, so a
//! spectrogram of `T` frames and `F` bins is a `T x F` array.

mod logfreq;
mod spline;
mod stft;
mod weighting;

use ndarray::Array2;
use realfft::num_complex::Complex64;

use crate::error::{Error, Result};

pub use logfreq::{to_log_frequency, LogFrequencyGrid, LogSpectrogram, DB_FLOOR_AMPLITUDE};
pub use stft::{hann_window, istft, stft};
pub use weighting::{a_weight_at, apply_a_weighting};

/// A monaural signal with its sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("audio signal is empty"));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Frame and bin layout shared by every spectrogram derived from one STFT.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub window_size: usize,
    pub hop_size: usize,
    pub sample_rate: u32,
}

impl Geometry {
    pub fn bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    /// Spacing between adjacent frequency bins in Hz.
    pub fn bin_spacing_hz(&self) -> f64 {
        self.sample_rate as f64 / self.window_size as f64
    }

    pub fn bin_hz(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_spacing_hz()
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop_size as f64 / self.sample_rate as f64
    }

    /// Number of centered frames covering a signal of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        len / self.hop_size + 1
    }
}

/// Complex STFT of a signal, `T x F`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    values: Array2<Complex64>,
    geometry: Geometry,
    signal_len: usize,
}

impl ComplexSpectrogram {
    /// Assembles a spectrogram, checking that the frame and bin counts agree
    /// with the window, hop and original signal length.
    pub fn from_parts(values: Array2<Complex64>, geometry: Geometry, signal_len: usize) -> Result<Self> {
        let (frames, bins) = values.dim();
        if geometry.window_size < 2 || geometry.hop_size == 0 || geometry.sample_rate == 0 {
            return Err(Error::invalid("degenerate spectrogram geometry"));
        }
        if bins != geometry.bins() {
            return Err(Error::invalid(format!(
                "expected {} bins for window {}, found {bins}",
                geometry.bins(),
                geometry.window_size
            )));
        }
        if frames != geometry.frames_for(signal_len) {
            return Err(Error::invalid(format!(
                "expected {} frames for {signal_len} samples at hop {}, found {frames}",
                geometry.frames_for(signal_len),
                geometry.hop_size
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::invalid("spectrogram contains non-finite values"));
        }
        Ok(Self {
            values,
            geometry,
            signal_len,
        })
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn bins(&self) -> usize {
        self.values.ncols()
    }

    /// Replaces every bin's magnitude while keeping its phase. Bins with zero
    /// magnitude carry phase zero.
    pub fn with_magnitudes(&self, magnitudes: &Array2<f64>) -> Result<Self> {
        if magnitudes.dim() != self.values.dim() {
            return Err(Error::invalid(format!(
                "magnitude shape {:?} does not match spectrogram {:?}",
                magnitudes.dim(),
                self.values.dim()
            )));
        }
        let values = ndarray::Zip::from(&self.values)
            .and(magnitudes)
            .map_collect(|&x, &m| {
                let norm = x.norm();
                if norm > 0.0 {
                    x * (m / norm)
                } else {
                    Complex64::new(m, 0.0)
                }
            });
        Self::from_parts(values, self.geometry, self.signal_len)
    }
}

/// Nonnegative amplitudes, `T x F`.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeSpectrogram {
    values: Array2<f64>,
    geometry: Geometry,
}

impl MagnitudeSpectrogram {
    pub fn new(values: Array2<f64>, geometry: Geometry) -> Result<Self> {
        if values.ncols() != geometry.bins() {
            return Err(Error::invalid(format!(
                "expected {} bins, found {}",
                geometry.bins(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("magnitudes must be finite and nonnegative"));
        }
        Ok(Self { values, geometry })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn bins(&self) -> usize {
        self.values.ncols()
    }

    /// Center frequency of every bin: `0, df, 2 df, ..., Nyquist`.
    pub fn bin_hz(&self) -> Vec<f64> {
        (0..self.bins()).map(|f| self.geometry.bin_hz(f)).collect()
    }

    pub fn hop_seconds(&self) -> f64 {
        self.geometry.hop_seconds()
    }

    pub fn nyquist(&self) -> f64 {
        self.geometry.nyquist()
    }
}

/// Element-wise modulus of a complex spectrogram.
pub fn magnitude(spec: &ComplexSpectrogram) -> MagnitudeSpectrogram {
    MagnitudeSpectrogram {
        values: spec.values.mapv(|v| v.norm()),
        geometry: spec.geometry,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry() -> Geometry {
        Geometry {
            window_size: 64,
            hop_size: 16,
            sample_rate: 8000,
        }
    }

    #[test]
    fn signal_rejects_empty_and_non_finite() {
        assert!(AudioSignal::new(vec![], 8000).is_err());
        assert!(AudioSignal::new(vec![0.0, f64::NAN], 8000).is_err());
        assert!(AudioSignal::new(vec![0.0], 0).is_err());
        assert!(AudioSignal::new(vec![0.5], 8000).is_ok());
    }

    #[test]
    fn modulus_of_three_four_is_five() {
        let g = geometry();
        let mut values = Array2::zeros((g.frames_for(10), g.bins()));
        values[[0, 3]] = Complex64::new(3.0, 4.0);
        let spec = ComplexSpectrogram::from_parts(values, g, 10).unwrap();
        let mag = magnitude(&spec);
        assert_eq!(mag.values()[[0, 3]], 5.0);
        assert_eq!(mag.values()[[0, 2]], 0.0);
    }

    #[test]
    fn bin_frequencies_span_dc_to_nyquist() {
        let g = geometry();
        let mag = MagnitudeSpectrogram::new(Array2::zeros((2, g.bins())), g).unwrap();
        let hz = mag.bin_hz();
        assert_eq!(hz[0], 0.0);
        assert_eq!(*hz.last().unwrap(), 4000.0);
        assert!(hz.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn inconsistent_geometry_is_rejected() {
        let g = geometry();
        let wrong_bins = Array2::<Complex64>::zeros((g.frames_for(10), g.bins() + 1));
        assert!(ComplexSpectrogram::from_parts(wrong_bins, g, 10).is_err());
        let wrong_frames = Array2::<Complex64>::zeros((g.frames_for(10) + 1, g.bins()));
        assert!(ComplexSpectrogram::from_parts(wrong_frames, g, 10).is_err());
    }

    #[test]
    fn negative_magnitudes_are_rejected() {
        let g = geometry();
        let mut values = Array2::zeros((1, g.bins()));
        values[[0, 0]] = -1.0;
        assert!(MagnitudeSpectrogram::new(values, g).is_err());
    }
}
