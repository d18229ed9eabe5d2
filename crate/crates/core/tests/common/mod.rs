#![allow(dead_code)]

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use vocalsep::metrics::voiced_region_mask;
use vocalsep::pipeline::ClipReferences;
use vocalsep::spectrogram::AudioSignal;
use vocalsep::tracking::F0Contour;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn white_noise(len: usize, sample_rate: u32, seed: u64) -> AudioSignal {
    let mut r = rng(seed);
    let samples = (0..len).map(|_| 0.3 * r.sample::<f64, _>(StandardNormal)).collect();
    AudioSignal::new(samples, sample_rate).unwrap()
}

pub struct Mixture {
    pub mixture: AudioSignal,
    pub vocal: AudioSignal,
    pub accompaniment: AudioSignal,
    /// Reference F0 on a 10 ms clock.
    pub f0: F0Contour,
}

impl Mixture {
    pub fn references(&self) -> ClipReferences {
        ClipReferences {
            vocal: self.vocal.clone(),
            accompaniment: self.accompaniment.clone(),
            f0: self.f0.clone(),
        }
    }
}

const PHRASE_GAP: f64 = 0.5;
const PHRASE: f64 = 4.5;

/// Sung pitch in 180..260 Hz: a seeded, non-repeating sequence of notes
/// around 216 Hz joined by 60 ms glides, with 5.5 Hz vibrato of ±50 cents.
struct Melody {
    /// `(onset seconds, cents re 216 Hz)` per note.
    notes: Vec<(f64, f64)>,
}

impl Melody {
    fn new(seconds: f64, seed: u64) -> Self {
        let scale = [-250.0, -150.0, -50.0, 50.0, 150.0];
        let mut r = rng(seed ^ 0x5eed);
        let mut notes = Vec::new();
        let mut t = 0.0;
        while t < seconds + 1.0 {
            notes.push((t, scale[r.random_range(0..scale.len())]));
            t += r.random_range(0.35..0.8);
        }
        Self { notes }
    }

    fn f0(&self, t: f64) -> f64 {
        let k = self.notes.partition_point(|&(onset, _)| onset <= t).saturating_sub(1);
        let (onset, cents) = self.notes[k];
        let glide = 0.06;
        let base = if k > 0 && t - onset < glide {
            let prev = self.notes[k - 1].1;
            prev + (cents - prev) * (t - onset) / glide
        } else {
            cents
        };
        let vibrato = 50.0 * (2.0 * PI * 5.5 * t).sin();
        216.0 * 2f64.powf((base + vibrato) / 1200.0)
    }
}

/// Phrase envelope: `PHRASE` seconds sung, `PHRASE_GAP` seconds rest,
/// starting with a rest, with 20 ms linear fades.
fn vocal_envelope(t: f64) -> f64 {
    let period = PHRASE + PHRASE_GAP;
    let u = t % period - PHRASE_GAP / 2.0;
    if !(0.0..PHRASE).contains(&u) {
        return 0.0;
    }
    let fade = 0.02;
    (u / fade).min((PHRASE - u) / fade).min(1.0)
}

/// Eight-harmonic tone following the melody, in phrases.
fn vocal(len: usize, sr: f64, seed: u64) -> (Vec<f64>, F0Contour) {
    let melody = Melody::new(len as f64 / sr, seed);
    let mut phase = [0.0f64; 8];
    let samples = (0..len)
        .map(|i| {
            let t = i as f64 / sr;
            let f0 = melody.f0(t);
            let env = vocal_envelope(t);
            let mut v = 0.0;
            for (k, ph) in phase.iter_mut().enumerate() {
                let n = (k + 1) as f64;
                if n * f0 < sr / 2.0 {
                    v += ph.sin() / n;
                }
                *ph = (*ph + 2.0 * PI * n * f0 / sr) % (2.0 * PI);
            }
            env * v
        })
        .collect();
    let frames = ((len - 1) as f64 / sr / 0.01).floor() as usize + 1;
    let f0 = (0..frames)
        .map(|t| {
            let time = t as f64 * 0.01;
            if vocal_envelope(time) > 0.0 {
                melody.f0(time)
            } else {
                0.0
            }
        })
        .collect();
    (samples, F0Contour::from_hz(f0, 0.01).unwrap())
}

fn pluck(out: &mut [f64], start: usize, sr: f64, freq: f64, harmonics: usize, decay: f64, gain: f64) {
    for (i, o) in out[start..].iter_mut().enumerate() {
        let t = i as f64 / sr;
        let env = (-t / decay).exp();
        if env < 1e-4 {
            break;
        }
        let mut v = 0.0;
        for n in 1..=harmonics {
            let f = n as f64 * freq;
            if f < sr / 2.0 {
                v += (2.0 * PI * f * t).sin() / n as f64;
            }
        }
        *o += gain * env * v;
    }
}

/// Four 0.5 s bars of bass, chords and hi-hat, tiled to `len` samples.
fn accompaniment(len: usize, sr: f64, seed: u64) -> Vec<f64> {
    let bar = (0.5 * sr) as usize;
    let mut looped = vec![0.0; 4 * bar];
    let bass = [55.0, 43.65, 65.41, 49.0];
    let chords = [[220.0, 261.63, 329.63], [174.61, 220.0, 261.63], [261.63, 329.63, 392.0], [196.0, 246.94, 293.66]];
    let mut r = rng(seed);
    for b in 0..4 {
        let start = b * bar;
        pluck(&mut looped, start, sr, bass[b], 6, 0.4, 0.6);
        for &f in &chords[b] {
            pluck(&mut looped, start + bar / 2, sr, f, 5, 0.25, 0.25);
        }
        for k in 0..4 {
            let s = start + k * bar / 4;
            for i in 0..(0.03 * sr) as usize {
                let t = i as f64 / sr;
                looped[s + i] += 0.15 * (-t / 0.008).exp() * r.sample::<f64, _>(StandardNormal);
            }
        }
    }
    (0..len).map(|i| looped[i % looped.len()]).collect()
}

/// Vibrato vocal over a repeating loop, mixed at `snr_db` over the voiced
/// regions.
pub fn vocal_over_loop(seconds: f64, sample_rate: u32, snr_db: f64, seed: u64) -> Mixture {
    let sr = sample_rate as f64;
    let len = (seconds * sr) as usize;
    let (v, f0) = vocal(len, sr, seed);
    let a = accompaniment(len, sr, seed);
    let vocal = AudioSignal::new(v.iter().map(|x| 0.3 * x).collect(), sample_rate).unwrap();
    let raw_accomp = AudioSignal::new(a, sample_rate).unwrap();
    let energy = |s: &AudioSignal| voiced_region_mask(s, &f0).samples().iter().map(|x| x * x).sum::<f64>();
    let gain = (energy(&vocal) / (energy(&raw_accomp) * 10f64.powf(snr_db / 10.0))).sqrt();
    let accompaniment = AudioSignal::new(raw_accomp.samples().iter().map(|x| gain * x).collect(), sample_rate).unwrap();
    let mixture = AudioSignal::new(
        vocal.samples().iter().zip(accompaniment.samples()).map(|(x, y)| x + y).collect(),
        sample_rate,
    )
    .unwrap();
    Mixture {
        mixture,
        vocal,
        accompaniment,
        f0,
    }
}

fn emission_oracle(s: &Array2<f64>, floor: f64) -> Array2<f64> {
    let mut out = s.mapv(|v| v + floor);
    for mut row in out.axis_iter_mut(Axis(0)) {
        let total: f64 = row.sum();
        row.mapv_inplace(|v| (v / total).ln());
    }
    out
}

/// Exhaustive search over all `bins^frames` paths, keeping the first
/// (lexicographically lowest) best path.
pub fn brute_force_path(s: &Array2<f64>, cents_per_bin: f64, b: f64, floor: f64) -> Vec<usize> {
    let (frames, bins) = s.dim();
    let e = emission_oracle(s, floor);
    let mut best = (f64::NEG_INFINITY, vec![]);
    let mut path = vec![0usize; frames];
    for code in 0..bins.pow(frames as u32) {
        let mut rest = code;
        for t in (0..frames).rev() {
            path[t] = rest % bins;
            rest /= bins;
        }
        let mut score = 0.0;
        for t in 0..frames {
            score += e[[t, path[t]]];
            if t + 1 < frames {
                let d = (path[t] as f64 - path[t + 1] as f64).abs() * cents_per_bin;
                score += ((-d / b).exp() / (2.0 * b)).ln();
            }
        }
        if score > best.0 {
            best = (score, path.clone());
        }
    }
    best.1
}
