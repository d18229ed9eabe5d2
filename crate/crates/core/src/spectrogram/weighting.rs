use super::MagnitudeSpectrogram;

const F1: f64 = 20.6;
const F2: f64 = 107.7;
const F3: f64 = 737.9;
const F4: f64 = 12200.0;

/// A-weighting gain at `h` Hz, a rough inverse of the 40-phon
/// equal-loudness contour. Zero at DC, about 0.794 at 1 kHz.
pub fn a_weight_at(h: f64) -> f64 {
    let h2 = h * h;
    let num = F4 * F4 * h2 * h2;
    let den = (h2 + F1 * F1) * (h2 + F4 * F4) * ((h2 + F2 * F2) * (h2 + F3 * F3)).sqrt();
    num / den
}

/// Scales every bin by the A-weighting gain at its center frequency.
pub fn apply_a_weighting(mag: &MagnitudeSpectrogram) -> MagnitudeSpectrogram {
    let g = mag.geometry();
    let gains: Vec<f64> = (0..mag.bins()).map(|f| a_weight_at(g.bin_hz(f))).collect();
    let mut values = mag.values().clone();
    for mut row in values.rows_mut() {
        row.iter_mut().zip(&gains).for_each(|(v, w)| *v *= w);
    }
    MagnitudeSpectrogram { values, geometry: g }
}
