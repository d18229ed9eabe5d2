//! End-to-end wiring: RPCA, F0 estimation, harmonic masking, integration
//! and resynthesis, plus corpus evaluation and parameter sweeps.
//!
//! ```text
//! stft ─► |X| ─► RPCA(λ_f0) ─► binary mask ─► masked |X| ─► A-weight ─► log-freq ─► SHS ─┐
//!                                   └──────────► F0 enhancement ───────────────────────────┴► combine(α) ─► Viterbi ─► F0
//! F0 ─► harmonic mask ─┐
//! RPCA(λ_sep) ─► Wiener┴► product ─► (binarize) ─► separate ─► vocal / accompaniment
//! ```

mod corpus;
mod grid;

use std::sync::Arc;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masks::{
    binary_mask, harmonic_mask, integrate_binary, integrate_soft, separate, wiener_mask, HarmonicMaskConfig,
    SeparationResult, TimeFrequencyMask,
};
use crate::rpca::{decompose, RpcaConfig, RpcaResult};
use crate::saliency::{combine, f0_enhancement, shs, SaliencySpectrogram, ShsConfig};
use crate::spectrogram::{
    apply_a_weighting, magnitude, stft, to_log_frequency, AudioSignal, ComplexSpectrogram, LogFrequencyGrid,
    MagnitudeSpectrogram,
};
use crate::tracking::{viterbi, F0Contour, TrackerConfig, DEFAULT_LAPLACE_SCALE};

pub use corpus::{
    evaluate, load_manifest, remix_at_snr, ClipError, ClipReferences, CorpusClip, EvaluationOptions, EvaluationReport,
    ManifestEntry, SectionReport,
};
pub use grid::{grid_search, Axis, GridCell, GridSearchSpec, GridTable, Objective};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    Soft,
    Binary,
}

impl std::str::FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(Self::Soft),
            "binary" => Ok(Self::Binary),
            other => Err(Error::invalid(format!("mask mode must be soft or binary, got {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    pub h_low: f64,
    pub cents_per_bin: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            h_low: LogFrequencyGrid::DEFAULT_H_LOW,
            cents_per_bin: LogFrequencyGrid::DEFAULT_CENTS_PER_BIN,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub window_size: usize,
    pub hop_size: usize,
    pub lambda_sep: f64,
    pub lambda_f0: f64,
    pub gamma: f64,
    pub n_partials: usize,
    pub w: f64,
    pub alpha: f64,
    pub f0_min: f64,
    pub f0_max: f64,
    pub grid: GridParams,
    pub mask_mode: MaskMode,
    pub tukey_shape: f64,
    pub shs_decay: f64,
    pub laplace_scale: f64,
    pub rpca_tolerance: f64,
    pub rpca_max_iterations: usize,
}

impl PipelineConfig {
    /// Defaults for a sample rate: the 16 kHz settings up to 24 kHz and the
    /// 44.1 kHz settings above, with a 10 ms hop either way.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let rpca = RpcaConfig::default();
        let (window_size, n_partials, w) = if sample_rate <= 24_000 { (2048, 10, 50.0) } else { (4096, 20, 70.0) };
        Self {
            window_size,
            hop_size: ((sample_rate as f64 / 100.0).round() as usize).max(1),
            lambda_sep: 0.8,
            lambda_f0: 0.8,
            gamma: 1.0,
            n_partials,
            w,
            alpha: 0.6,
            f0_min: 80.0,
            f0_max: 720.0,
            grid: GridParams::default(),
            mask_mode: MaskMode::Soft,
            tukey_shape: HarmonicMaskConfig::default().tukey_shape,
            shs_decay: ShsConfig::default().decay_base,
            laplace_scale: DEFAULT_LAPLACE_SCALE,
            rpca_tolerance: rpca.tolerance,
            rpca_max_iterations: rpca.max_iterations,
        }
    }

    /// Overlays a partial JSON object on the defaults for `sample_rate`.
    /// Unknown keys are an error.
    pub fn from_json_over_defaults(json: &str, sample_rate: u32) -> Result<Self> {
        let overlay: serde_json::Value = serde_json::from_str(json)?;
        Self::for_sample_rate(sample_rate).merged(overlay)
    }

    pub fn merged(&self, overlay: serde_json::Value) -> Result<Self> {
        let serde_json::Value::Object(fields) = overlay else {
            return Err(Error::invalid("pipeline config must be a JSON object"));
        };
        let mut base = serde_json::to_value(self)?;
        merge_json(&mut base, serde_json::Value::Object(fields));
        let cfg: Self = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda_sep", self.lambda_sep),
            ("lambda_f0", self.lambda_f0),
            ("gamma", self.gamma),
            ("w", self.w),
            ("f0_min", self.f0_min),
            ("laplace_scale", self.laplace_scale),
            ("rpca_tolerance", self.rpca_tolerance),
            ("grid.h_low", self.grid.h_low),
            ("grid.cents_per_bin", self.grid.cents_per_bin),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if !(self.f0_min < self.f0_max) {
            return Err(Error::invalid("f0_min must be below f0_max"));
        }
        if self.n_partials == 0 || self.rpca_max_iterations == 0 {
            return Err(Error::invalid("n_partials and rpca_max_iterations must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.tukey_shape) {
            return Err(Error::invalid("tukey_shape must lie in [0, 1]"));
        }
        if !(self.shs_decay > 0.0 && self.shs_decay <= 1.0) {
            return Err(Error::invalid("shs_decay must lie in (0, 1]"));
        }
        if !self.window_size.is_power_of_two() || self.window_size < 64 {
            return Err(Error::invalid("window_size must be a power of two of at least 64"));
        }
        if self.hop_size == 0 || 2 * self.hop_size > self.window_size {
            return Err(Error::invalid("hop_size must lie in 1..=window_size/2"));
        }
        Ok(())
    }

    pub fn rpca(&self, lambda: f64) -> RpcaConfig {
        RpcaConfig {
            lambda,
            tolerance: self.rpca_tolerance,
            max_iterations: self.rpca_max_iterations,
            ..RpcaConfig::default()
        }
    }

    pub fn tracker(&self) -> TrackerConfig {
        TrackerConfig {
            f0_min: self.f0_min,
            f0_max: self.f0_max,
            b: self.laplace_scale,
            ..TrackerConfig::default()
        }
    }

    pub fn harmonic(&self) -> HarmonicMaskConfig {
        HarmonicMaskConfig {
            width_hz: self.w,
            n_partials: self.n_partials,
            tukey_shape: self.tukey_shape,
        }
    }

    pub fn shs(&self) -> ShsConfig {
        ShsConfig {
            n_partials: self.n_partials,
            decay_base: self.shs_decay,
        }
    }
}

fn merge_json(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Everything a run produces besides the separated signals.
#[derive(Clone, Debug)]
pub struct Diagnostics {
    /// Number of RPCA solves performed for this run.
    pub rpca_runs: usize,
    pub rpca_f0: Option<Arc<RpcaResult>>,
    pub rpca_sep: Arc<RpcaResult>,
    pub saliency: Option<SaliencySpectrogram>,
    /// Log-grid bins whose enhancement lag had to be clamped.
    pub clamped_bins: Vec<usize>,
    pub final_mask: TimeFrequencyMask,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub separation: SeparationResult,
    pub contour: F0Contour,
    pub diagnostics: Diagnostics,
}

/// RPCA results keyed by λ, so sweeps over other parameters reuse solves.
#[derive(Default)]
pub struct RpcaMemo {
    entries: Vec<(u64, Arc<RpcaResult>)>,
    solves: usize,
    record_trace: bool,
}

impl RpcaMemo {
    fn get(&mut self, mag: &MagnitudeSpectrogram, cfg: &RpcaConfig) -> Result<Arc<RpcaResult>> {
        let key = cfg.lambda.to_bits();
        if let Some((_, r)) = self.entries.iter().find(|(k, _)| *k == key) {
            return Ok(Arc::clone(r));
        }
        let started = std::time::Instant::now();
        let cfg = &RpcaConfig {
            record_trace: self.record_trace,
            ..cfg.clone()
        };
        let r = decompose(mag.values(), cfg)?;
        self.solves += 1;
        if r.converged {
            info!(
                "RPCA λ={} converged in {} iterations ({:.2?})",
                cfg.lambda,
                r.iterations,
                started.elapsed()
            );
        } else {
            warn!(
                "RPCA λ={} stopped after {} iterations with residual {:.3e}",
                cfg.lambda, r.iterations, r.final_residual
            );
        }
        let r = Arc::new(r);
        self.entries.push((key, Arc::clone(&r)));
        Ok(r)
    }
}

/// Spectra of one input, shared by every configuration with the same
/// window and hop.
pub struct Analysis {
    pub spectrum: ComplexSpectrogram,
    pub magnitude: MagnitudeSpectrogram,
    memo: RpcaMemo,
}

impl Analysis {
    pub fn new(signal: &AudioSignal, window_size: usize, hop_size: usize) -> Result<Self> {
        let spectrum = stft(signal, window_size, hop_size)?;
        let magnitude = magnitude(&spectrum);
        Ok(Self {
            spectrum,
            magnitude,
            memo: RpcaMemo::default(),
        })
    }

    /// Keep per-iteration RPCA records for later solves.
    pub fn record_traces(&mut self, on: bool) {
        self.memo.record_trace = on;
    }

    /// Total RPCA solves performed on this analysis so far.
    pub fn rpca_solves(&self) -> usize {
        self.memo.solves
    }

    fn check(&self, cfg: &PipelineConfig) -> Result<()> {
        let g = self.spectrum.geometry();
        if g.window_size != cfg.window_size || g.hop_size != cfg.hop_size {
            return Err(Error::invalid("analysis geometry does not match the configuration"));
        }
        Ok(())
    }

    /// Estimates the vocal F0 from the RPCA binary mask.
    pub fn estimate_f0(&mut self, cfg: &PipelineConfig) -> Result<(F0Contour, Arc<RpcaResult>, SaliencySpectrogram, Vec<usize>)> {
        self.check(cfg)?;
        let geometry = self.magnitude.geometry();
        let rpca = self.memo.get(&self.magnitude, &cfg.rpca(cfg.lambda_f0))?;
        let mask = binary_mask(&rpca, cfg.gamma)?;
        let vocal = apply_a_weighting(&mask.apply(&self.magnitude)?);
        let grid = LogFrequencyGrid::covering(cfg.grid.h_low, cfg.grid.cents_per_bin, geometry.nyquist())?;
        let log_spec = to_log_frequency(&vocal, &grid)?;
        let harmonic_sum = shs(&log_spec, &cfg.shs())?;
        let enhancement = f0_enhancement(&mask, &grid, geometry.nyquist())?;
        let saliency = combine(&harmonic_sum, &enhancement.saliency, cfg.alpha)?;
        let tracker = cfg.tracker();
        let contour = viterbi(&saliency, &tracker, geometry.hop_seconds())?;
        // Digitally silent frames cannot carry a pitch.
        let mixture = self.magnitude.values();
        let silent = (0..mixture.nrows()).filter(|&t| mixture.row(t).iter().all(|&v| v == 0.0));
        let contour = contour.with_unvoiced(silent);
        Ok((contour, rpca, saliency, enhancement.clamped_bins))
    }

    /// Separates using a given F0 contour, which must have one entry per
    /// STFT frame.
    pub fn separate_with(&mut self, cfg: &PipelineConfig, contour: &F0Contour) -> Result<(SeparationResult, Arc<RpcaResult>, TimeFrequencyMask)> {
        self.check(cfg)?;
        let geometry = self.magnitude.geometry();
        let harmonic = harmonic_mask(contour, geometry, self.magnitude.frames(), &cfg.harmonic())?;
        let rpca = self.memo.get(&self.magnitude, &cfg.rpca(cfg.lambda_sep))?;
        let integrated = integrate_soft(&wiener_mask(&rpca), &harmonic)?;
        let mask = match cfg.mask_mode {
            MaskMode::Soft => integrated,
            MaskMode::Binary => integrate_binary(&integrated),
        };
        let separation = separate(&self.spectrum, &mask)?;
        Ok((separation, rpca, mask))
    }

    pub fn run(&mut self, cfg: &PipelineConfig) -> Result<PipelineOutput> {
        cfg.validate()?;
        let before = self.memo.solves;
        let started = std::time::Instant::now();
        let (contour, rpca_f0, saliency, clamped_bins) = self.estimate_f0(cfg)?;
        info!("F0 stage done ({:.2?})", started.elapsed());
        let (separation, rpca_sep, final_mask) = self.separate_with(cfg, &contour)?;
        info!("separation stage done ({:.2?})", started.elapsed());
        Ok(PipelineOutput {
            separation,
            contour,
            diagnostics: Diagnostics {
                rpca_runs: self.memo.solves - before,
                rpca_f0: Some(rpca_f0),
                rpca_sep,
                saliency: Some(saliency),
                clamped_bins,
                final_mask,
            },
        })
    }

    /// Separation with a known F0 contour on any frame clock.
    pub fn run_with_f0(&mut self, cfg: &PipelineConfig, f0: &F0Contour) -> Result<PipelineOutput> {
        cfg.validate()?;
        let before = self.memo.solves;
        let contour = resample_contour(f0, self.magnitude.frames(), self.magnitude.hop_seconds())?;
        let (separation, rpca_sep, final_mask) = self.separate_with(cfg, &contour)?;
        Ok(PipelineOutput {
            separation,
            contour,
            diagnostics: Diagnostics {
                rpca_runs: self.memo.solves - before,
                rpca_f0: None,
                rpca_sep,
                saliency: None,
                clamped_bins: Vec::new(),
                final_mask,
            },
        })
    }
}

/// Full pipeline on one signal.
pub fn run(signal: &AudioSignal, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    Analysis::new(signal, cfg.window_size, cfg.hop_size)?.run(cfg)
}

/// Separation driven by a known F0 contour instead of the estimated one.
pub fn run_with_f0(signal: &AudioSignal, cfg: &PipelineConfig, f0: &F0Contour) -> Result<PipelineOutput> {
    cfg.validate()?;
    Analysis::new(signal, cfg.window_size, cfg.hop_size)?.run_with_f0(cfg, f0)
}

/// Samples `contour` at `frames` instants spaced `hop_seconds` apart,
/// taking the nearest source frame.
pub fn resample_contour(contour: &F0Contour, frames: usize, hop_seconds: f64) -> Result<F0Contour> {
    if contour.is_empty() {
        return F0Contour::unvoiced(frames, hop_seconds);
    }
    let f0 = (0..frames)
        .map(|t| {
            let src = contour.frame_at(t as f64 * hop_seconds);
            if contour.voiced()[src] {
                contour.f0_hz()[src]
            } else {
                0.0
            }
        })
        .collect();
    F0Contour::with_reference(f0, hop_seconds, contour.reference_hz())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_sample_rate() {
        let a = PipelineConfig::for_sample_rate(16_000);
        assert_eq!((a.window_size, a.hop_size, a.n_partials, a.w), (2048, 160, 10, 50.0));
        let b = PipelineConfig::for_sample_rate(44_100);
        assert_eq!((b.window_size, b.hop_size, b.n_partials, b.w), (4096, 441, 20, 70.0));
        for c in [&a, &b] {
            assert_eq!((c.lambda_sep, c.lambda_f0, c.alpha, c.gamma), (0.8, 0.8, 0.6, 1.0));
            c.validate().unwrap();
        }
    }

    #[test]
    fn json_overlays_defaults() {
        let cfg =
            PipelineConfig::from_json_over_defaults(r#"{"alpha": 1.2, "grid": {"cents_per_bin": 20}}"#, 16_000).unwrap();
        assert_eq!(cfg.alpha, 1.2);
        assert_eq!(cfg.grid.cents_per_bin, 20.0);
        assert_eq!(cfg.grid.h_low, 30.0);
        assert_eq!(cfg.window_size, 2048);
    }

    #[test]
    fn json_rejects_unknown_and_invalid() {
        assert!(PipelineConfig::from_json_over_defaults(r#"{"lambda": 1}"#, 16_000).is_err());
        assert!(PipelineConfig::from_json_over_defaults(r#"{"f0_min": 900}"#, 16_000).is_err());
        assert!(PipelineConfig::from_json_over_defaults(r#"{"mask_mode": "hard"}"#, 16_000).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = PipelineConfig::for_sample_rate(44_100);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::from_json_over_defaults(&text, 16_000).unwrap(), cfg);
    }

    #[test]
    fn resampling_picks_nearest_frames() {
        let c = F0Contour::from_hz(vec![100.0, 0.0, 300.0], 0.02).unwrap();
        let r = resample_contour(&c, 5, 0.01).unwrap();
        // Times 0.00..0.04 map to source frames 0, 0|1, 1, 1|2, 2 with ties rounding away.
        assert_eq!(r.f0_hz(), &[100.0, 0.0, 0.0, 300.0, 300.0]);
    }
}
