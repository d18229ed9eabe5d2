//! F0 saliency on a log-frequency axis.
//!
//! Subharmonic summation adds decayed copies of the spectrum shifted down by
//! each partial's interval, so an F0 bin collects the energy of its
//! harmonics. The enhancement term reads the harmonic spacing off the DFT of
//! the RPCA binary mask: a comb of partials spaced `f0` apart has a peak at
//! lag `h_top / f0`.

use ndarray::{Array2, Zip};
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masks::{MaskKind, TimeFrequencyMask};
use crate::spectrogram::{LogFrequencyGrid, LogSpectrogram};

/// Nonnegative saliency, `T x C`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencySpectrogram {
    pub values: Array2<f64>,
    pub grid: LogFrequencyGrid,
}

impl SaliencySpectrogram {
    pub fn new(values: Array2<f64>, grid: LogFrequencyGrid) -> Result<Self> {
        if values.ncols() != grid.bins() {
            return Err(Error::invalid(format!(
                "saliency has {} bins, grid has {}",
                values.ncols(),
                grid.bins()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("saliency must be finite and nonnegative"));
        }
        Ok(Self { values, grid })
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn bins(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShsConfig {
    pub n_partials: usize,
    /// Partial `n` is weighted by `decay_base^(n - 1)`.
    pub decay_base: f64,
}

impl Default for ShsConfig {
    fn default() -> Self {
        Self {
            n_partials: 10,
            decay_base: 0.86,
        }
    }
}

/// Shift in grid bins between the fundamental and partial `n`:
/// `floor(1200 log2(n) / p)`.
pub fn partial_offset(n: usize, cents_per_bin: f64) -> usize {
    // The epsilon keeps exact octaves (e.g. 1200 / 10) from flooring to 119.
    (1200.0 * (n as f64).log2() / cents_per_bin + 1e-9).floor() as usize
}

/// Subharmonic summation. Decibel values below zero are clamped to zero
/// first; shifted indices past the top of the grid contribute nothing.
pub fn shs(logspec: &LogSpectrogram, cfg: &ShsConfig) -> Result<SaliencySpectrogram> {
    if cfg.n_partials == 0 || !(cfg.decay_base > 0.0 && cfg.decay_base <= 1.0) {
        return Err(Error::invalid("SHS needs N >= 1 and decay base in (0, 1]"));
    }
    let bins = logspec.bins();
    let p = logspec.grid.cents_per_bin();
    let terms: Vec<(usize, f64)> = (1..=cfg.n_partials)
        .map(|n| (partial_offset(n, p), cfg.decay_base.powi(n as i32 - 1)))
        .collect();
    let mut values = Array2::<f64>::zeros((logspec.frames(), bins));
    for (src, mut out) in logspec.values.outer_iter().zip(values.outer_iter_mut()) {
        let floored: Vec<f64> = src.iter().map(|&v| v.max(0.0)).collect();
        for &(offset, weight) in &terms {
            if offset >= bins {
                continue;
            }
            for (o, &v) in out.iter_mut().zip(&floored[offset..]) {
                *o += weight * v;
            }
        }
    }
    SaliencySpectrogram::new(values, logspec.grid)
}

/// Enhancement saliency and the grid bins whose lag had to be clamped.
#[derive(Clone, Debug)]
pub struct F0Enhancement {
    pub saliency: SaliencySpectrogram,
    /// Zero-based grid bins with `floor(h_top / h_c) >= F`, read at `F - 1`.
    pub clamped_bins: Vec<usize>,
}

/// Per-frame DFT magnitude of a binary mask row, sampled at lag
/// `floor(h_top / h_c)` for every grid center `h_c`.
pub fn f0_enhancement(mask: &TimeFrequencyMask, grid: &LogFrequencyGrid, h_top: f64) -> Result<F0Enhancement> {
    if mask.kind() != MaskKind::Binary {
        return Err(Error::invalid("F0 enhancement expects a binary mask"));
    }
    if !(h_top > 0.0) {
        return Err(Error::invalid("h_top must be positive"));
    }
    let bins = mask.bins();
    let mut clamped_bins = Vec::new();
    let lags: Vec<usize> = (0..grid.bins())
        .map(|c| {
            let lag = (h_top / grid.center_hz(c)).floor() as usize;
            if lag >= bins {
                clamped_bins.push(c);
                bins - 1
            } else {
                lag
            }
        })
        .collect();
    if !clamped_bins.is_empty() {
        log::warn!(
            "{} grid bins map past the mask's DFT length and were clamped",
            clamped_bins.len()
        );
    }

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(bins);
    let mut input = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();
    let mut values = Array2::<f64>::zeros((mask.frames(), grid.bins()));
    for (row, mut out) in mask.values().outer_iter().zip(values.outer_iter_mut()) {
        input.iter_mut().zip(row.iter()).for_each(|(i, &v)| *i = v);
        fft.process_with_scratch(&mut input, &mut spectrum, &mut scratch)
            .map_err(|e| Error::invalid(format!("fft: {e}")))?;
        for (o, &lag) in out.iter_mut().zip(&lags) {
            // Real input: |X[k]| = |X[F - k]| covers lags past the half spectrum.
            let k = if lag < spectrum.len() { lag } else { bins - lag };
            *o = spectrum[k].norm();
        }
    }
    Ok(F0Enhancement {
        saliency: SaliencySpectrogram::new(values, *grid)?,
        clamped_bins,
    })
}

/// `S = S_shs * S_enh^alpha`, with `0^0 = 1`.
pub fn combine(shs: &SaliencySpectrogram, enh: &SaliencySpectrogram, alpha: f64) -> Result<SaliencySpectrogram> {
    if shs.values.dim() != enh.values.dim() {
        return Err(Error::invalid(format!(
            "saliency shapes differ: {:?} vs {:?}",
            shs.values.dim(),
            enh.values.dim()
        )));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be nonnegative, got {alpha}")));
    }
    let values = Zip::from(&shs.values)
        .and(&enh.values)
        .map_collect(|&s, &e| s * e.powf(alpha));
    SaliencySpectrogram::new(values, shs.grid)
}
