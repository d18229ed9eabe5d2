//! Viterbi tracking of the vocal F0 through a saliency spectrogram.
//!
//! Each frame's emission is the log of its saliency normalized over the
//! search range, and moving between bins costs a Laplace log-density in
//! cents. The search returns the path maximizing the total log score over
//! all `T` emissions and `T - 1` transitions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saliency::SaliencySpectrogram;

/// Per-frame F0 estimate. Unvoiced frames carry `0 Hz`.
#[derive(Clone, Debug, PartialEq)]
pub struct F0Contour {
    f0_hz: Vec<f64>,
    f0_cents: Vec<f64>,
    voiced: Vec<bool>,
    hop_seconds: f64,
    reference_hz: f64,
}

impl F0Contour {
    /// Default reference for the cent scale, matching the log grid's floor.
    pub const DEFAULT_REFERENCE_HZ: f64 = 30.0;

    /// Builds a contour from frequencies, treating `f0 <= 0` as unvoiced.
    pub fn from_hz(f0_hz: Vec<f64>, hop_seconds: f64) -> Result<Self> {
        Self::with_reference(f0_hz, hop_seconds, Self::DEFAULT_REFERENCE_HZ)
    }

    pub fn with_reference(f0_hz: Vec<f64>, hop_seconds: f64, reference_hz: f64) -> Result<Self> {
        if !(hop_seconds > 0.0 && hop_seconds.is_finite()) {
            return Err(Error::invalid(format!("hop must be positive, got {hop_seconds}")));
        }
        if !(reference_hz > 0.0) {
            return Err(Error::invalid("cent reference must be positive"));
        }
        if f0_hz.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("F0 values must be finite"));
        }
        let voiced: Vec<bool> = f0_hz.iter().map(|&f| f > 0.0).collect();
        let f0_hz: Vec<f64> = f0_hz.into_iter().map(|f| f.max(0.0)).collect();
        let f0_cents = f0_hz
            .iter()
            .map(|&f| if f > 0.0 { 1200.0 * (f / reference_hz).log2() } else { 0.0 })
            .collect();
        Ok(Self {
            f0_hz,
            f0_cents,
            voiced,
            hop_seconds,
            reference_hz,
        })
    }

    /// All-unvoiced contour of `frames` frames.
    pub fn unvoiced(frames: usize, hop_seconds: f64) -> Result<Self> {
        Self::from_hz(vec![0.0; frames], hop_seconds)
    }

    pub fn len(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_hz.is_empty()
    }

    pub fn f0_hz(&self) -> &[f64] {
        &self.f0_hz
    }

    pub fn f0_cents(&self) -> &[f64] {
        &self.f0_cents
    }

    pub fn voiced(&self) -> &[bool] {
        &self.voiced
    }

    pub fn voiced_count(&self) -> usize {
        self.voiced.iter().filter(|&&v| v).count()
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop_seconds
    }

    pub fn reference_hz(&self) -> f64 {
        self.reference_hz
    }

    /// Time of frame `t`; frames are centered on multiples of the hop.
    pub fn time_of(&self, t: usize) -> f64 {
        t as f64 * self.hop_seconds
    }

    /// Nearest frame to time `seconds`, clamped to the contour.
    pub fn frame_at(&self, seconds: f64) -> usize {
        let t = (seconds / self.hop_seconds).round().max(0.0) as usize;
        t.min(self.len().saturating_sub(1))
    }

    /// Copy with the listed frames forced unvoiced.
    pub fn with_unvoiced(&self, frames: impl IntoIterator<Item = usize>) -> Self {
        let mut out = self.clone();
        for t in frames {
            if t < out.len() {
                out.f0_hz[t] = 0.0;
                out.f0_cents[t] = 0.0;
                out.voiced[t] = false;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub f0_min: f64,
    pub f0_max: f64,
    /// Laplace scale of the transition density, in cents.
    pub b: f64,
    /// Added to every saliency value before taking logs.
    pub saliency_floor: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            f0_min: 80.0,
            f0_max: 720.0,
            b: DEFAULT_LAPLACE_SCALE,
            saliency_floor: 1e-12,
        }
    }
}

/// `sqrt(150^2 / 2)` cents: a Laplace density with 150 cents standard deviation.
pub const DEFAULT_LAPLACE_SCALE: f64 = 106.066_017_177_982_13;

/// Laplace transition density between two pitches in cents.
pub fn transition_cost(c_from: f64, c_to: f64, b: f64) -> f64 {
    (-(c_from - c_to).abs() / b).exp() / (2.0 * b)
}

/// Zero-based grid bins `[lo, hi]` whose centers fall inside
/// `[f0_min, f0_max]`.
pub fn search_range(s: &SaliencySpectrogram, cfg: &TrackerConfig) -> Result<(usize, usize)> {
    if !(cfg.f0_min > 0.0 && cfg.f0_min < cfg.f0_max) {
        return Err(Error::invalid(format!(
            "F0 search range [{}, {}] is invalid",
            cfg.f0_min, cfg.f0_max
        )));
    }
    if !(cfg.b > 0.0) {
        return Err(Error::invalid("Laplace scale must be positive"));
    }
    let grid = &s.grid;
    let inside: Vec<usize> = (0..grid.bins())
        .filter(|&c| {
            let h = grid.center_hz(c);
            h >= cfg.f0_min * (1.0 - 1e-12) && h <= cfg.f0_max * (1.0 + 1e-12)
        })
        .collect();
    match (inside.first(), inside.last()) {
        (Some(&lo), Some(&hi)) => Ok((lo, hi)),
        _ => Err(Error::invalid(format!(
            "no grid bin lies within {}..{} Hz",
            cfg.f0_min, cfg.f0_max
        ))),
    }
}

/// Normalized log emissions for frames `t` over the search range.
pub fn log_emissions(s: &SaliencySpectrogram, lo: usize, hi: usize, floor: f64) -> Vec<Vec<f64>> {
    s.values
        .outer_iter()
        .map(|row| {
            let band = row.slice(ndarray::s![lo..=hi]);
            let total: f64 = band.iter().map(|v| v + floor).sum();
            band.iter().map(|v| ((v + floor) / total).ln()).collect()
        })
        .collect()
}

/// Best path through the saliency spectrogram. Every frame is reported
/// voiced; ties go to the lower bin.
pub fn viterbi(s: &SaliencySpectrogram, cfg: &TrackerConfig, hop_seconds: f64) -> Result<F0Contour> {
    let frames = s.frames();
    if frames == 0 {
        return Err(Error::invalid("saliency has no frames"));
    }
    let (lo, hi) = search_range(s, cfg)?;
    let states = hi - lo + 1;
    let p = s.grid.cents_per_bin();
    let emissions = log_emissions(s, lo, hi, cfg.saliency_floor);
    // Transition log-density depends only on the bin distance.
    let log_g: Vec<f64> = (0..states)
        .map(|d| transition_cost(0.0, d as f64 * p, cfg.b).ln())
        .collect();

    let mut score = emissions[0].clone();
    let mut next = vec![0.0; states];
    let mut back = vec![0u32; frames * states];
    for t in 1..frames {
        for j in 0..states {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (i, &prev) in score.iter().enumerate() {
                let v = prev + log_g[i.abs_diff(j)];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + emissions[t][j];
            back[t * states + j] = arg as u32;
        }
        std::mem::swap(&mut score, &mut next);
    }

    let mut state = 0;
    for (j, &v) in score.iter().enumerate() {
        if v > score[state] {
            state = j;
        }
    }
    let mut path = vec![0usize; frames];
    path[frames - 1] = state;
    for t in (1..frames).rev() {
        state = back[t * states + state] as usize;
        path[t - 1] = state;
    }
    let f0 = path.iter().map(|&j| s.grid.center_hz(lo + j)).collect();
    F0Contour::with_reference(f0, hop_seconds, s.grid.h_low())
}

/// Log score of a path (zero-based bins within the search range) under the
/// tracking objective.
pub fn path_score(s: &SaliencySpectrogram, cfg: &TrackerConfig, path: &[usize]) -> Result<f64> {
    let (lo, hi) = search_range(s, cfg)?;
    let emissions = log_emissions(s, lo, hi, cfg.saliency_floor);
    let p = s.grid.cents_per_bin();
    let mut total = 0.0;
    for (t, &j) in path.iter().enumerate() {
        total += emissions[t][j];
        if t + 1 < path.len() {
            total += transition_cost(j as f64 * p, path[t + 1] as f64 * p, cfg.b).ln();
        }
    }
    Ok(total)
}

/// One ground-truth-voiced instant with the estimate nearest to it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignedPair {
    pub time_seconds: f64,
    /// `0` when the estimate is unvoiced at this instant.
    pub estimated_hz: f64,
    pub truth_hz: f64,
}

impl AlignedPair {
    /// Pitch error in cents, `None` if the estimate is unvoiced.
    pub fn error_cents(&self) -> Option<f64> {
        (self.estimated_hz > 0.0).then(|| 1200.0 * (self.estimated_hz / self.truth_hz).log2())
    }
}

/// Spacing of the common evaluation clock.
pub const EVALUATION_HOP_SECONDS: f64 = 0.010;

/// Samples both contours on a 10 ms clock spanning the ground truth,
/// picking the nearest frame of each, and keeps instants where the truth is
/// voiced.
pub fn contour_accuracy_prep(contour: &F0Contour, truth: &F0Contour) -> Vec<AlignedPair> {
    if contour.is_empty() || truth.is_empty() {
        return Vec::new();
    }
    let span = truth.time_of(truth.len() - 1);
    let ticks = (span / EVALUATION_HOP_SECONDS + 1e-9).floor() as usize + 1;
    (0..ticks)
        .filter_map(|i| {
            let time = i as f64 * EVALUATION_HOP_SECONDS;
            let tt = truth.frame_at(time);
            if !truth.voiced()[tt] {
                return None;
            }
            let te = contour.frame_at(time);
            let estimated_hz = if contour.voiced()[te] { contour.f0_hz()[te] } else { 0.0 };
            Some(AlignedPair {
                time_seconds: time,
                estimated_hz,
                truth_hz: truth.f0_hz()[tt],
            })
        })
        .collect()
}
