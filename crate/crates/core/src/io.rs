//! File formats: WAV audio, F0 contour CSV and the debug dumps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::masks::TimeFrequencyMask;
use crate::rpca::IterationRecord;
use crate::saliency::SaliencySpectrogram;
use crate::spectrogram::AudioSignal;
use crate::tracking::F0Contour;

/// Reads a PCM-16 or float-32 WAV file. Multichannel input is rejected
/// unless `mixdown` averages the channels.
pub fn read_wav(path: impl AsRef<Path>, mixdown: bool) -> Result<AudioSignal> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels > 1 && !mixdown {
        return Err(Error::invalid(format!(
            "{} has {channels} channels; pass --mixdown to average them",
            path.display()
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::invalid(format!(
                "{}: unsupported sample format {fmt:?}/{bits} bits (need PCM-16 or float-32)",
                path.display()
            )))
        }
    };
    let samples = if channels > 1 {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    } else {
        interleaved
    };
    AudioSignal::new(samples, spec.sample_rate)
}

/// Writes a mono float-32 WAV file.
pub fn write_wav(path: impl AsRef<Path>, signal: &AudioSignal) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for &s in signal.samples() {
        writer.write_sample(s as f32)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Reads `time_seconds,f0_hz` rows (header optional, 0 Hz = unvoiced) onto
/// a uniform clock starting at 0. The hop is the smallest positive spacing
/// between consecutive rows; frames no row lands on are unvoiced.
pub fn read_f0_csv(path: impl AsRef<Path>) -> Result<F0Contour> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::invalid(format!("{}: row {} needs two columns", path.display(), i + 1)));
        }
        let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
        match parsed {
            (Ok(t), Ok(f)) if t.is_finite() && t >= 0.0 && f.is_finite() => rows.push((t, f)),
            _ if i == 0 => continue,
            _ => {
                return Err(Error::invalid(format!(
                    "{}: row {} is not `time_seconds,f0_hz`",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    contour_from_rows(&rows)
}

/// Builds a contour from `(time, f0)` rows; see [`read_f0_csv`].
pub fn contour_from_rows(rows: &[(f64, f64)]) -> Result<F0Contour> {
    if rows.is_empty() {
        return Err(Error::invalid("F0 contour has no rows"));
    }
    if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::invalid("F0 times must be strictly increasing"));
    }
    let hop = rows
        .windows(2)
        .map(|w| w[1].0 - w[0].0)
        .fold(f64::INFINITY, f64::min);
    let hop = if hop.is_finite() { hop } else { crate::tracking::EVALUATION_HOP_SECONDS };
    let last = rows[rows.len() - 1].0;
    let frames = (last / hop).round() as usize + 1;
    let mut f0 = vec![0.0; frames];
    for &(t, f) in rows {
        f0[((t / hop).round() as usize).min(frames - 1)] = f;
    }
    F0Contour::from_hz(f0, hop)
}

/// Writes `time_seconds,f0_hz` with a header row.
pub fn write_f0_csv(path: impl AsRef<Path>, contour: &F0Contour) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time_seconds", "f0_hz"])?;
    for (t, f) in contour.f0_hz().iter().enumerate() {
        w.write_record([contour.time_of(t).to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rpca_trace(path: impl AsRef<Path>, trace: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "residual", "rank", "nnz"])?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            r.residual.to_string(),
            r.rank.to_string(),
            r.nnz.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per frame: frame time followed by the matrix row.
fn write_frames_csv(path: &Path, hop_seconds: f64, columns: &[String], values: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["time_seconds".to_string()];
    header.extend_from_slice(columns);
    w.write_record(&header)?;
    for (t, row) in values.outer_iter().enumerate() {
        let mut record = vec![(t as f64 * hop_seconds).to_string()];
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mask_csv(path: impl AsRef<Path>, mask: &TimeFrequencyMask, hop_seconds: f64, bin_hz: &[f64]) -> Result<()> {
    let columns: Vec<String> = bin_hz.iter().map(|h| h.to_string()).collect();
    write_frames_csv(path.as_ref(), hop_seconds, &columns, mask.values())
}

/// 8-bit binary PGM with time running left to right and low frequencies at
/// the bottom.
pub fn write_mask_pgm(path: impl AsRef<Path>, mask: &TimeFrequencyMask) -> Result<()> {
    let (frames, bins) = (mask.frames(), mask.bins());
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{frames} {bins}\n255\n")?;
    let v = mask.values();
    let mut line = vec![0u8; frames];
    for f in (0..bins).rev() {
        for (t, px) in line.iter_mut().enumerate() {
            *px = (v[[t, f]] * 255.0).round() as u8;
        }
        w.write_all(&line)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_saliency_csv(path: impl AsRef<Path>, s: &SaliencySpectrogram, hop_seconds: f64) -> Result<()> {
    let columns: Vec<String> = (0..s.grid.bins()).map(|c| s.grid.center_hz(c).to_string()).collect();
    write_frames_csv(path.as_ref(), hop_seconds, &columns, &s.values)
}
