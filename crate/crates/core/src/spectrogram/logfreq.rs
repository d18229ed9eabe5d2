use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::spline::NaturalSpline;
use super::MagnitudeSpectrogram;
use crate::error::{Error, Result};

/// Amplitude floor used before converting to decibels (-200 dB).
pub const DB_FLOOR_AMPLITUDE: f64 = 1e-10;

/// Log-spaced frequency axis: bin `c` (1-based) is centered on
/// `h_low * 2^((c - 1) * p / 1200)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogFrequencyGrid {
    h_low: f64,
    cents_per_bin: f64,
    bins: usize,
}

impl LogFrequencyGrid {
    pub const DEFAULT_H_LOW: f64 = 30.0;
    pub const DEFAULT_CENTS_PER_BIN: f64 = 10.0;

    pub fn new(h_low: f64, cents_per_bin: f64, bins: usize) -> Result<Self> {
        if !(h_low > 0.0 && h_low.is_finite()) {
            return Err(Error::invalid(format!("h_low must be positive, got {h_low}")));
        }
        if !(cents_per_bin > 0.0 && cents_per_bin.is_finite()) {
            return Err(Error::invalid(format!(
                "cents per bin must be positive, got {cents_per_bin}"
            )));
        }
        if bins < 2 {
            return Err(Error::invalid("log-frequency grid needs at least two bins"));
        }
        Ok(Self {
            h_low,
            cents_per_bin,
            bins,
        })
    }

    /// The largest grid starting at `h_low` whose top center does not exceed
    /// `max_hz`.
    pub fn covering(h_low: f64, cents_per_bin: f64, max_hz: f64) -> Result<Self> {
        if !(h_low > 0.0) || max_hz <= h_low {
            return Err(Error::invalid(format!(
                "cannot build a grid from {h_low} Hz up to {max_hz} Hz"
            )));
        }
        let span = 1200.0 * (max_hz / h_low).log2() / cents_per_bin;
        // Guard against a top center landing a rounding error above max_hz.
        let bins = (span + 1e-9).floor() as usize + 1;
        Self::new(h_low, cents_per_bin, bins)
    }

    pub fn h_low(&self) -> f64 {
        self.h_low
    }

    pub fn cents_per_bin(&self) -> f64 {
        self.cents_per_bin
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Center frequency of the bin at zero-based `index`.
    pub fn center_hz(&self, index: usize) -> f64 {
        self.h_low * (index as f64 * self.cents_per_bin / 1200.0).exp2()
    }

    /// Pitch of the bin at zero-based `index` in cents above `h_low`.
    pub fn cents(&self, index: usize) -> f64 {
        index as f64 * self.cents_per_bin
    }

    pub fn top_hz(&self) -> f64 {
        self.center_hz(self.bins - 1)
    }

    /// One-based bin number `c = floor(1200 log2(h / h_low) / p + 1)`.
    /// Frequencies below `h_low` have no bin.
    pub fn bin_number(&self, h: f64) -> Result<usize> {
        if !(h >= self.h_low) || !h.is_finite() {
            return Err(Error::invalid(format!(
                "{h} Hz lies below the grid floor {} Hz",
                self.h_low
            )));
        }
        let c = 1200.0 * (h / self.h_low).log2() / self.cents_per_bin + 1.0;
        Ok(c.floor() as usize)
    }

    /// Zero-based index of the grid bin whose center is nearest to `h` in
    /// log frequency, clamped to the grid.
    pub fn nearest_index(&self, h: f64) -> usize {
        if h <= self.h_low {
            return 0;
        }
        let c = 1200.0 * (h / self.h_low).log2() / self.cents_per_bin;
        (c.round() as usize).min(self.bins - 1)
    }
}

/// Decibel spectrogram resampled onto a [`LogFrequencyGrid`], `T x C`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogSpectrogram {
    pub values: Array2<f64>,
    pub grid: LogFrequencyGrid,
    pub hop_seconds: f64,
}

impl LogSpectrogram {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn bins(&self) -> usize {
        self.values.ncols()
    }
}

/// Converts each frame to dB, fits a natural cubic spline over linear
/// frequency and samples it at the grid centers.
pub fn to_log_frequency(mag: &MagnitudeSpectrogram, grid: &LogFrequencyGrid) -> Result<LogSpectrogram> {
    let nyquist = mag.nyquist();
    if grid.top_hz() > nyquist * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "grid reaches {:.3} Hz, beyond the Nyquist frequency {nyquist} Hz",
            grid.top_hz()
        )));
    }
    let spline = NaturalSpline::new(mag.bin_hz());
    let targets: Vec<(usize, f64)> = (0..grid.bins())
        .map(|c| {
            let h = grid.center_hz(c).min(nyquist);
            (spline.locate(h), h)
        })
        .collect();

    let mut values = Array2::zeros((mag.frames(), grid.bins()));
    let mut db = Vec::with_capacity(mag.bins());
    let mut second = Vec::new();
    debug_assert_eq!(spline.knots().len(), mag.bins());
    for (row, mut out) in mag.values().outer_iter().zip(values.outer_iter_mut()) {
        db.clear();
        db.extend(row.iter().map(|&m| 20.0 * m.max(DB_FLOOR_AMPLITUDE).log10()));
        spline.second_derivatives(&db, &mut second);
        for (o, &(i, h)) in out.iter_mut().zip(&targets) {
            *o = spline.eval_in(&db, &second, i, h);
        }
    }
    Ok(LogSpectrogram {
        values,
        grid: *grid,
        hop_seconds: mag.hop_seconds(),
    })
}
