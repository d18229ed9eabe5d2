use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Analysis, PipelineConfig, PipelineOutput};
use crate::error::{Error, Result};
use crate::io::{read_f0_csv, read_wav};
use crate::metrics::{raw_pitch_accuracy, score, voiced_region_mask, ClipScore, CorpusScore, DEFAULT_PITCH_TOLERANCE_CENTS};
use crate::spectrogram::AudioSignal;
use crate::tracking::F0Contour;

/// One manifest row. Relative paths resolve against the manifest's folder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub mixture_path: PathBuf,
    pub vocal_path: Option<PathBuf>,
    pub accomp_path: Option<PathBuf>,
    pub f0_path: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct ClipReferences {
    pub vocal: AudioSignal,
    pub accompaniment: AudioSignal,
    pub f0: F0Contour,
}

#[derive(Clone, Debug)]
pub struct CorpusClip {
    pub id: String,
    pub mixture: AudioSignal,
    /// Error text if the references could not be loaded.
    pub references: std::result::Result<ClipReferences, String>,
}

impl CorpusClip {
    pub fn new(id: impl Into<String>, mixture: AudioSignal, references: ClipReferences) -> Self {
        Self {
            id: id.into(),
            mixture,
            references: Ok(references),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_references(base: &Path, entry: &ManifestEntry, mixdown: bool) -> Result<ClipReferences> {
    let need = |p: &Option<PathBuf>, what: &str| {
        p.as_ref()
            .map(|p| resolve(base, p))
            .ok_or_else(|| Error::invalid(format!("clip {}: missing {what} reference", entry.id)))
    };
    Ok(ClipReferences {
        vocal: read_wav(need(&entry.vocal_path, "vocal")?, mixdown)?,
        accompaniment: read_wav(need(&entry.accomp_path, "accompaniment")?, mixdown)?,
        f0: read_f0_csv(need(&entry.f0_path, "F0")?)?,
    })
}

/// Reads a JSON manifest and every file it names. Mixture read failures
/// are fatal; reference failures are kept per clip. Clips come back sorted
/// by id.
pub fn load_manifest(path: impl AsRef<Path>, mixdown: bool) -> Result<Vec<CorpusClip>> {
    let path = path.as_ref();
    let entries: Vec<ManifestEntry> = serde_json::from_reader(std::fs::File::open(path)?)?;
    if entries.is_empty() {
        return Err(Error::invalid(format!("{}: manifest lists no clips", path.display())));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut clips = entries
        .iter()
        .map(|e| {
            let mixture = read_wav(resolve(base, &e.mixture_path), mixdown)?;
            let references = load_references(base, e, mixdown).map_err(|err| err.to_string());
            Ok(CorpusClip {
                id: e.id.clone(),
                mixture,
                references,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    clips.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = clips.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::invalid(format!("duplicate clip id {:?}", w[0].id)));
    }
    Ok(clips)
}

/// Rescales the accompaniment so the vocal-to-accompaniment energy ratio
/// over voiced regions is `snr_db`, and returns `(mixture, vocal, accomp)`.
pub fn remix_at_snr(refs: &ClipReferences, snr_db: f64) -> Result<(AudioSignal, AudioSignal, AudioSignal)> {
    let (v, a) = (&refs.vocal, &refs.accompaniment);
    if v.len() != a.len() || v.sample_rate() != a.sample_rate() {
        return Err(Error::invalid("vocal and accompaniment references differ in length or rate"));
    }
    let energy = |s: &AudioSignal| voiced_region_mask(s, &refs.f0).samples().iter().map(|x| x * x).sum::<f64>();
    let (ev, ea) = (energy(v), energy(a));
    if ev == 0.0 || ea == 0.0 {
        return Err(Error::invalid("cannot remix: a reference is silent over voiced regions"));
    }
    let gain = (ev / (ea * 10f64.powf(snr_db / 10.0))).sqrt();
    let accomp: Vec<f64> = a.samples().iter().map(|x| gain * x).collect();
    let mixture = v.samples().iter().zip(&accomp).map(|(x, y)| x + y).collect();
    Ok((
        AudioSignal::new(mixture, v.sample_rate())?,
        v.clone(),
        AudioSignal::new(accomp, v.sample_rate())?,
    ))
}

#[derive(Clone, Debug, Default)]
pub struct EvaluationOptions {
    /// Remix conditions in dB; empty evaluates the mixtures as given.
    pub snr_db: Vec<f64>,
    /// Build harmonic masks from the reference F0 instead of the estimate.
    pub ground_truth_f0: bool,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipError {
    pub id: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipPitch {
    pub id: String,
    pub rpa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionReport {
    pub label: String,
    pub snr_db: Option<f64>,
    pub vocal: Option<CorpusScore>,
    pub accompaniment: Option<CorpusScore>,
    pub mean_rpa: Option<f64>,
    pub per_clip_rpa: Vec<ClipPitch>,
    pub errors: Vec<ClipError>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: PipelineConfig,
    pub ground_truth_f0: bool,
    pub sections: Vec<SectionReport>,
}

impl EvaluationReport {
    pub fn failed_clips(&self) -> usize {
        self.sections.iter().map(|s| s.errors.len()).sum()
    }
}

pub(super) struct ClipOutcome {
    pub vocal: ClipScore,
    pub accompaniment: ClipScore,
    pub rpa: f64,
}

/// Scores a separation over the voiced regions of the reference contour.
fn score_clip(
    id: &str,
    mixture: &AudioSignal,
    vocal: &AudioSignal,
    accomp: &AudioSignal,
    truth: &F0Contour,
    out: &PipelineOutput,
) -> Result<ClipOutcome> {
    let m = |s: &AudioSignal| voiced_region_mask(s, truth);
    let mix = m(mixture);
    let length = mixture.duration_seconds();
    let vocal_score = score(&m(&out.separation.vocal), &m(vocal), &mix)?;
    let accomp_score = score(&m(&out.separation.accompaniment), &m(accomp), &mix)?;
    let rpa = raw_pitch_accuracy(&out.contour, truth, DEFAULT_PITCH_TOLERANCE_CENTS)?;
    let clip = |score| ClipScore {
        id: id.to_string(),
        length,
        score,
    };
    Ok(ClipOutcome {
        vocal: clip(vocal_score),
        accompaniment: clip(accomp_score),
        rpa,
    })
}

/// Runs every configuration in `cfgs` on one clip under one condition,
/// sharing spectra and RPCA solves.
pub(super) fn run_clip_condition(
    clip: &CorpusClip,
    snr_db: Option<f64>,
    cfgs: &[PipelineConfig],
    ground_truth_f0: bool,
) -> Vec<Result<ClipOutcome>> {
    let refs = match &clip.references {
        Ok(r) => r,
        Err(msg) => return cfgs.iter().map(|_| Err(Error::invalid(msg.clone()))).collect(),
    };
    let inputs = match snr_db {
        Some(snr) => remix_at_snr(refs, snr),
        None => Ok((clip.mixture.clone(), refs.vocal.clone(), refs.accompaniment.clone())),
    };
    let (mixture, vocal, accomp) = match inputs {
        Ok(x) => x,
        Err(e) => {
            let msg = e.to_string();
            return cfgs.iter().map(|_| Err(Error::invalid(msg.clone()))).collect();
        }
    };
    let mut analyses: Vec<Analysis> = Vec::new();
    cfgs.iter()
        .map(|cfg| {
            cfg.validate()?;
            let idx = match analyses.iter().position(|a| {
                let g = a.spectrum.geometry();
                g.window_size == cfg.window_size && g.hop_size == cfg.hop_size
            }) {
                Some(i) => i,
                None => {
                    analyses.push(Analysis::new(&mixture, cfg.window_size, cfg.hop_size)?);
                    analyses.len() - 1
                }
            };
            let analysis = &mut analyses[idx];
            let out = if ground_truth_f0 {
                analysis.run_with_f0(cfg, &refs.f0)?
            } else {
                analysis.run(cfg)?
            };
            score_clip(&clip.id, &mixture, &vocal, &accomp, &refs.f0, &out)
        })
        .collect()
}

/// Outcome table indexed `[clip][cfg]`, computed in parallel over clips.
pub(super) fn run_corpus(
    corpus: &[CorpusClip],
    snr_db: Option<f64>,
    cfgs: &[PipelineConfig],
    ground_truth_f0: bool,
    threads: usize,
) -> Result<Vec<Vec<Result<ClipOutcome>>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        corpus
            .par_iter()
            .map(|clip| {
                let started = std::time::Instant::now();
                let r = run_clip_condition(clip, snr_db, cfgs, ground_truth_f0);
                info!("clip {} done ({:.2?})", clip.id, started.elapsed());
                r
            })
            .collect()
    }))
}

pub(super) fn summarize<'a>(
    label: String,
    snr_db: Option<f64>,
    outcomes: impl Iterator<Item = (&'a str, &'a Result<ClipOutcome>)>,
) -> SectionReport {
    let mut vocal = Vec::new();
    let mut accompaniment = Vec::new();
    let mut per_clip_rpa = Vec::new();
    let mut errors = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(o) => {
                vocal.push(o.vocal.clone());
                accompaniment.push(o.accompaniment.clone());
                per_clip_rpa.push(ClipPitch {
                    id: id.to_string(),
                    rpa: o.rpa,
                });
            }
            Err(e) => {
                warn!("clip {id}: {e}");
                errors.push(ClipError {
                    id: id.to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    let mean_rpa =
        (!per_clip_rpa.is_empty()).then(|| per_clip_rpa.iter().map(|c| c.rpa).sum::<f64>() / per_clip_rpa.len() as f64);
    SectionReport {
        label,
        snr_db,
        vocal: CorpusScore::from_clips(vocal).ok(),
        accompaniment: CorpusScore::from_clips(accompaniment).ok(),
        mean_rpa,
        per_clip_rpa,
        errors,
    }
}

/// Separates and scores every clip, one report section per condition.
pub fn evaluate(corpus: &[CorpusClip], cfg: &PipelineConfig, opts: &EvaluationOptions) -> Result<EvaluationReport> {
    if corpus.is_empty() {
        return Err(Error::invalid("corpus is empty"));
    }
    cfg.validate()?;
    let mut sorted: Vec<&CorpusClip> = corpus.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let owned: Vec<CorpusClip> = sorted.into_iter().cloned().collect();
    let conditions: Vec<Option<f64>> =
        if opts.snr_db.is_empty() { vec![None] } else { opts.snr_db.iter().copied().map(Some).collect() };
    let mut sections = Vec::new();
    for snr in conditions {
        let table = run_corpus(&owned, snr, std::slice::from_ref(cfg), opts.ground_truth_f0, opts.threads)?;
        let label = match snr {
            Some(s) => format!("snr {s:+} dB"),
            None => "mixture".to_string(),
        };
        sections.push(summarize(label, snr, owned.iter().zip(&table).map(|(c, r)| (c.id.as_str(), &r[0]))));
    }
    Ok(EvaluationReport {
        config: cfg.clone(),
        ground_truth_f0: opts.ground_truth_f0,
        sections,
    })
}
