//! Time-frequency masks and mask-based separation.
//!
//! The RPCA masks compare the sparse and low-rank magnitudes bin by bin; the
//! harmonic mask passes narrow Tukey-shaped lobes around each partial of the
//! tracked F0. Multiplying the two keeps only harmonic energy that RPCA also
//! considered non-repeating.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rpca::RpcaResult;
use crate::spectrogram::{istft, AudioSignal, ComplexSpectrogram, Geometry, MagnitudeSpectrogram};
use crate::tracking::F0Contour;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Soft,
    Binary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeFrequencyMask {
    values: Array2<f64>,
    kind: MaskKind,
}

impl TimeFrequencyMask {
    /// Validates the value range for `kind`: `[0, 1]` for soft masks and
    /// `{0, 1}` for binary ones.
    pub fn new(values: Array2<f64>, kind: MaskKind) -> Result<Self> {
        let ok = match kind {
            MaskKind::Soft => values.iter().all(|v| (0.0..=1.0).contains(v)),
            MaskKind::Binary => values.iter().all(|&v| v == 0.0 || v == 1.0),
        };
        if !ok {
            return Err(Error::invalid(format!("mask values out of range for a {kind:?} mask")));
        }
        Ok(Self { values, kind })
    }

    pub fn filled(frames: usize, bins: usize, value: f64, kind: MaskKind) -> Result<Self> {
        Self::new(Array2::from_elem((frames, bins), value), kind)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn bins(&self) -> usize {
        self.values.ncols()
    }

    /// Number of bins with a nonzero value.
    pub fn support(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    /// Applies the mask to a magnitude spectrogram.
    pub fn apply(&self, mag: &MagnitudeSpectrogram) -> Result<MagnitudeSpectrogram> {
        check_shape(self.values.dim(), mag.values().dim())?;
        MagnitudeSpectrogram::new(&self.values * mag.values(), mag.geometry())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicMaskConfig {
    /// Lobe width around each partial, in Hz.
    pub width_hz: f64,
    pub n_partials: usize,
    /// Tukey taper fraction in `[0, 1]`.
    pub tukey_shape: f64,
}

impl Default for HarmonicMaskConfig {
    fn default() -> Self {
        Self {
            width_hz: 50.0,
            n_partials: 10,
            tukey_shape: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SeparationResult {
    pub vocal: AudioSignal,
    pub accompaniment: AudioSignal,
    pub vocal_spec: MagnitudeSpectrogram,
    pub accomp_spec: MagnitudeSpectrogram,
}

fn check_shape(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("shape mismatch: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// `|S| / (|S| + |L|)`, with bins where both vanish assigned to the
/// accompaniment (value 0).
pub fn wiener_mask(rpca: &RpcaResult) -> TimeFrequencyMask {
    let values = Zip::from(&rpca.sparse)
        .and(&rpca.low_rank)
        .map_collect(|&s, &l| {
            let (s, l) = (s.abs(), l.abs());
            let total = s + l;
            if total > 0.0 {
                s / total
            } else {
                0.0
            }
        });
    TimeFrequencyMask {
        values,
        kind: MaskKind::Soft,
    }
}

/// 1 where `|S| > gamma |L|`, else 0.
pub fn binary_mask(rpca: &RpcaResult, gamma: f64) -> Result<TimeFrequencyMask> {
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("gain must be positive, got {gamma}")));
    }
    let values = Zip::from(&rpca.sparse)
        .and(&rpca.low_rank)
        .map_collect(|&s, &l| if s.abs() > gamma * l.abs() { 1.0 } else { 0.0 });
    Ok(TimeFrequencyMask {
        values,
        kind: MaskKind::Binary,
    })
}

/// Tukey (tapered cosine) window value at position `x` in `[0, 1]`.
fn tukey_at(x: f64, shape: f64) -> f64 {
    if shape <= 0.0 {
        return 1.0;
    }
    let half = shape / 2.0;
    let x = x.clamp(0.0, 1.0);
    if x < half {
        0.5 * (1.0 + (std::f64::consts::PI * (x / half - 1.0)).cos())
    } else if x <= 1.0 - half {
        1.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * ((x - 1.0) / half + 1.0)).cos())
    }
}

/// Weights of a lobe covering `count` bins: the interior `count` samples of
/// a Tukey window of length `count + 2`, so every covered bin is nonzero.
fn lobe_weights(count: usize, shape: f64) -> Vec<f64> {
    let len = count + 2;
    (1..=count)
        .map(|j| tukey_at(j as f64 / (len - 1) as f64, shape))
        .collect()
}

/// Harmonic mask for a tracked contour.
///
/// Partial `n` of a voiced frame with F0 `f0` covers every bin whose center
/// lies in `[n f0 - w/2, n f0 + w/2]`, weighted by a Tukey lobe. Partials
/// above Nyquist are skipped and overlapping lobes combine by maximum.
pub fn harmonic_mask(f0: &F0Contour, geometry: Geometry, frames: usize, cfg: &HarmonicMaskConfig) -> Result<TimeFrequencyMask> {
    if f0.len() != frames {
        return Err(Error::invalid(format!(
            "contour has {} frames, spectrogram has {frames}",
            f0.len()
        )));
    }
    if !(cfg.width_hz > 0.0) || cfg.n_partials == 0 || !(0.0..=1.0).contains(&cfg.tukey_shape) {
        return Err(Error::invalid("harmonic mask needs width > 0, N >= 1 and shape in [0, 1]"));
    }
    let bins = geometry.bins();
    let df = geometry.bin_spacing_hz();
    let nyquist = geometry.nyquist();
    let mut values = Array2::<f64>::zeros((frames, bins));
    for (t, mut row) in values.outer_iter_mut().enumerate() {
        if !f0.voiced()[t] {
            continue;
        }
        let hz = f0.f0_hz()[t];
        if !(hz > 0.0 && hz < nyquist) {
            return Err(Error::invalid(format!(
                "voiced frame {t} has F0 {hz} Hz outside (0, {nyquist})"
            )));
        }
        for n in 1..=cfg.n_partials {
            let center = n as f64 * hz;
            if center > nyquist {
                break;
            }
            let lo = ((center - cfg.width_hz / 2.0) / df).ceil().max(0.0) as usize;
            let hi = (((center + cfg.width_hz / 2.0) / df).floor() as usize).min(bins - 1);
            if hi < lo {
                continue;
            }
            for (f, w) in (lo..=hi).zip(lobe_weights(hi - lo + 1, cfg.tukey_shape)) {
                row[f] = row[f].max(w);
            }
        }
    }
    Ok(TimeFrequencyMask {
        values,
        kind: MaskKind::Soft,
    })
}

/// Element-wise product of two soft masks.
pub fn integrate_soft(rpca_soft: &TimeFrequencyMask, harmonic: &TimeFrequencyMask) -> Result<TimeFrequencyMask> {
    check_shape(rpca_soft.values.dim(), harmonic.values.dim())?;
    if rpca_soft.kind != MaskKind::Soft || harmonic.kind != MaskKind::Soft {
        return Err(Error::invalid("integrate_soft expects two soft masks"));
    }
    Ok(TimeFrequencyMask {
        values: &rpca_soft.values * &harmonic.values,
        kind: MaskKind::Soft,
    })
}

/// Binarizes a soft mask with a strict 0.5 threshold.
pub fn integrate_binary(integrated: &TimeFrequencyMask) -> TimeFrequencyMask {
    TimeFrequencyMask {
        values: integrated.values.mapv(|v| if v > 0.5 { 1.0 } else { 0.0 }),
        kind: MaskKind::Binary,
    }
}

/// Masks the mixture magnitude, assigns the remainder to the accompaniment
/// and resynthesizes both with the mixture phase.
pub fn separate(x: &ComplexSpectrogram, mask: &TimeFrequencyMask) -> Result<SeparationResult> {
    check_shape(x.values().dim(), mask.values.dim())?;
    let mixture = crate::spectrogram::magnitude(x);
    // accomp = |X| - M|X|, then vocal = |X| - accomp. One of the two
    // subtractions is exact, so vocal + accomp == |X| bit for bit and vocal
    // stays within half an ulp of M|X|.
    let accomp_mag = Zip::from(&mask.values)
        .and(mixture.values())
        .map_collect(|&m, &x| x - m * x);
    let vocal_mag = mixture.values() - &accomp_mag;
    let vocal = istft(&x.with_magnitudes(&vocal_mag)?)?;
    let accompaniment = istft(&x.with_magnitudes(&accomp_mag)?)?;
    Ok(SeparationResult {
        vocal,
        accompaniment,
        vocal_spec: MagnitudeSpectrogram::new(vocal_mag, x.geometry())?,
        accomp_spec: MagnitudeSpectrogram::new(accomp_mag, x.geometry())?,
    })
}
