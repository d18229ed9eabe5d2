//! Separation and pitch scoring.
//!
//! Separation scores split an estimate into a target part, an interference
//! part and an artifact remainder by projecting onto the reference signals
//! (gain only, no filtering), then take energy ratios in dB. Ratios with a
//! zero denominator saturate at [`SCORE_CAP_DB`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrogram::AudioSignal;
use crate::tracking::{contour_accuracy_prep, F0Contour};

/// Magnitude bound on every dB score.
pub const SCORE_CAP_DB: f64 = 300.0;

/// Default pitch tolerance: half a semitone.
pub const DEFAULT_PITCH_TOLERANCE_CENTS: f64 = 50.0;

/// Subspace used to explain the estimate. Only the zero-delay projection is
/// implemented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Projection {
    #[default]
    GainOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub target: Vec<f64>,
    pub interference: Vec<f64>,
    pub artifacts: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn energy(a: &[f64]) -> f64 {
    dot(a, a)
}

fn check_pair(a: &AudioSignal, b: &AudioSignal, what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "{what}: length mismatch ({} vs {} samples)",
            a.len(),
            b.len()
        )));
    }
    if a.sample_rate() != b.sample_rate() {
        return Err(Error::invalid(format!(
            "{what}: sample rate mismatch ({} vs {} Hz)",
            a.sample_rate(),
            b.sample_rate()
        )));
    }
    Ok(())
}

/// Coefficients of the least-squares fit of `e` by `a·s + b·n`. Collinear
/// references collapse onto `s` (or `n` if `s` is silent).
fn fit_pair(e: &[f64], s: &[f64], n: &[f64]) -> (f64, f64) {
    let (ss, nn, sn) = (energy(s), energy(n), dot(s, n));
    let (es, en) = (dot(e, s), dot(e, n));
    let det = ss * nn - sn * sn;
    if det > 1e-12 * ss * nn {
        ((es * nn - en * sn) / det, (en * ss - es * sn) / det)
    } else if ss > 0.0 {
        (es / ss, 0.0)
    } else {
        (0.0, en / nn)
    }
}

/// Splits `estimate` into target, interference and artifact parts.
pub fn decompose_estimate(
    estimate: &AudioSignal,
    target: &AudioSignal,
    interferer: &AudioSignal,
) -> Result<Decomposition> {
    check_pair(estimate, target, "estimate/target")?;
    check_pair(target, interferer, "target/interferer")?;
    let (e, s, n) = (estimate.samples(), target.samples(), interferer.samples());
    let ss = energy(s);
    if ss == 0.0 && energy(n) == 0.0 {
        return Err(Error::invalid("target and interferer are both silent"));
    }
    let g = if ss > 0.0 { dot(e, s) / ss } else { 0.0 };
    let (a, b) = fit_pair(e, s, n);
    let target_part: Vec<f64> = s.iter().map(|v| g * v).collect();
    let interference: Vec<f64> = s
        .iter()
        .zip(n)
        .zip(&target_part)
        .map(|((sv, nv), tv)| a * sv + b * nv - tv)
        .collect();
    let artifacts = e
        .iter()
        .zip(&target_part)
        .zip(&interference)
        .map(|((ev, tv), iv)| ev - tv - iv)
        .collect();
    Ok(Decomposition {
        target: target_part,
        interference,
        artifacts,
    })
}

/// `10 log10(num / den)` clamped to `±SCORE_CAP_DB`. A silent numerator is
/// the floor, a silent denominator the ceiling.
pub fn ratio_db(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        -SCORE_CAP_DB
    } else if den <= 0.0 {
        SCORE_CAP_DB
    } else {
        (10.0 * (num / den).log10()).clamp(-SCORE_CAP_DB, SCORE_CAP_DB)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationScore {
    pub sdr: f64,
    pub sir: f64,
    pub sar: f64,
    pub nsdr: f64,
}

/// SDR, SIR and SAR of a decomposition. `nsdr` is left at 0; see [`score`].
pub fn sdr_sir_sar(parts: &Decomposition) -> SeparationScore {
    let target = energy(&parts.target);
    let distortion: f64 = parts
        .interference
        .iter()
        .zip(&parts.artifacts)
        .map(|(i, a)| (i + a) * (i + a))
        .sum();
    let explained: f64 = parts
        .target
        .iter()
        .zip(&parts.interference)
        .map(|(t, i)| (t + i) * (t + i))
        .sum();
    SeparationScore {
        sdr: ratio_db(target, distortion),
        sir: ratio_db(target, energy(&parts.interference)),
        sar: ratio_db(explained, energy(&parts.artifacts)),
        nsdr: 0.0,
    }
}

fn residual(mixture: &AudioSignal, target: &AudioSignal) -> Result<AudioSignal> {
    check_pair(mixture, target, "mixture/target")?;
    let samples = mixture
        .samples()
        .iter()
        .zip(target.samples())
        .map(|(m, t)| m - t)
        .collect();
    AudioSignal::new(samples, mixture.sample_rate())
}

/// SDR of `estimate` for `target`, where everything in the mixture that is
/// not the target counts as interference.
pub fn sdr(estimate: &AudioSignal, target: &AudioSignal, mixture: &AudioSignal) -> Result<f64> {
    let interferer = residual(mixture, target)?;
    Ok(sdr_sir_sar(&decompose_estimate(estimate, target, &interferer)?).sdr)
}

/// SDR improvement of `estimate` over the unprocessed mixture.
pub fn nsdr(estimate: &AudioSignal, target: &AudioSignal, mixture: &AudioSignal) -> Result<f64> {
    Ok(sdr(estimate, target, mixture)? - sdr(mixture, target, mixture)?)
}

/// Full score of one estimate, including the improvement over the mixture.
pub fn score(estimate: &AudioSignal, target: &AudioSignal, mixture: &AudioSignal) -> Result<SeparationScore> {
    let interferer = residual(mixture, target)?;
    let mut out = sdr_sir_sar(&decompose_estimate(estimate, target, &interferer)?);
    let baseline = sdr_sir_sar(&decompose_estimate(mixture, target, &interferer)?);
    out.nsdr = out.sdr - baseline.sdr;
    Ok(out)
}

/// Length-weighted mean of `(value, length)` pairs.
pub fn gnsdr(per_clip: &[(f64, f64)]) -> Result<f64> {
    if per_clip.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty clip list"));
    }
    if let Some(&(_, l)) = per_clip.iter().find(|(_, l)| !(*l > 0.0)) {
        return Err(Error::invalid(format!("clip length must be positive, got {l}")));
    }
    let total: f64 = per_clip.iter().map(|(_, l)| l).sum();
    Ok(per_clip.iter().map(|(v, l)| v * l).sum::<f64>() / total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipScore {
    pub id: String,
    pub length: f64,
    pub score: SeparationScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusScore {
    pub gnsdr: f64,
    pub gsir: f64,
    pub gsar: f64,
    pub per_clip: Vec<ClipScore>,
}

impl CorpusScore {
    /// Aggregates clip scores, sorting them by id first.
    pub fn from_clips(mut per_clip: Vec<ClipScore>) -> Result<Self> {
        per_clip.sort_by(|a, b| a.id.cmp(&b.id));
        let weighted = |f: fn(&SeparationScore) -> f64| {
            let pairs: Vec<(f64, f64)> = per_clip.iter().map(|c| (f(&c.score), c.length)).collect();
            gnsdr(&pairs)
        };
        Ok(Self {
            gnsdr: weighted(|s| s.nsdr)?,
            gsir: weighted(|s| s.sir)?,
            gsar: weighted(|s| s.sar)?,
            per_clip,
        })
    }
}

/// Fraction of voiced ground-truth instants whose estimate lies within
/// `tolerance_cents`. Unvoiced estimates count as misses.
pub fn raw_pitch_accuracy(estimated: &F0Contour, truth: &F0Contour, tolerance_cents: f64) -> Result<f64> {
    let pairs = contour_accuracy_prep(estimated, truth);
    if pairs.is_empty() {
        return Err(Error::invalid("ground truth has no voiced frames"));
    }
    let hits = pairs
        .iter()
        .filter(|p| p.error_cents().is_some_and(|e| e.abs() <= tolerance_cents))
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Zeroes every sample whose nearest ground-truth frame is unvoiced.
pub fn voiced_region_mask(signal: &AudioSignal, truth: &F0Contour) -> AudioSignal {
    let sr = signal.sample_rate() as f64;
    let samples = signal
        .samples()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let keep = !truth.is_empty() && truth.voiced()[truth.frame_at(i as f64 / sr)];
            if keep {
                v
            } else {
                0.0
            }
        })
        .collect();
    AudioSignal::new(samples, signal.sample_rate()).expect("masking preserves a valid signal")
}
