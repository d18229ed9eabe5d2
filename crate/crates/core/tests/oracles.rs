//! Reference values computed independently of the crate: closed forms,
//! high-precision evaluation and brute-force enumeration.

mod common;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use vocalsep::masks::{harmonic_mask, HarmonicMaskConfig, MaskKind, TimeFrequencyMask};
use vocalsep::metrics::{decompose_estimate, nsdr, voiced_region_mask};
use vocalsep::rpca::{decompose, RpcaConfig};
use vocalsep::saliency::{f0_enhancement, shs, SaliencySpectrogram, ShsConfig};
use vocalsep::spectrogram::{
    a_weight_at, to_log_frequency, AudioSignal, Geometry, LogFrequencyGrid, LogSpectrogram, MagnitudeSpectrogram,
};
use vocalsep::tracking::{contour_accuracy_prep, transition_cost, viterbi, F0Contour, TrackerConfig, DEFAULT_LAPLACE_SCALE};

// 40-digit evaluations of the A-weighting response.
const A_WEIGHT_1000: f64 = 0.794_346_395_802_294_9;
const A_WEIGHT_100: f64 = 0.087_650_079_462_004_87;

#[test]
fn a_weighting_matches_high_precision_values() {
    assert!((a_weight_at(1000.0) - A_WEIGHT_1000).abs() < 1e-12);
    assert!((a_weight_at(100.0) - A_WEIGHT_100).abs() < 1e-12);
    assert!((a_weight_at(1000.0) - 0.794).abs() < 1e-3);
    assert_eq!(a_weight_at(0.0), 0.0);
}

#[test]
fn scaled_lambda_for_a_thousand_bins() {
    let cfg = RpcaConfig::with_lambda(0.8);
    assert!((cfg.scaled_lambda(100, 1025) - 0.024_987_801_902_176_97).abs() < 1e-15);
}

#[test]
fn laplace_transition_values() {
    let b = DEFAULT_LAPLACE_SCALE;
    assert!((b - 106.066_017_177_982_1).abs() < 1e-12);
    assert!((transition_cost(700.0, 700.0, b) - 0.004_714_045_207_910_317).abs() < 1e-17);
    assert!((transition_cost(700.0, 700.0 + b, b) - 0.001_734_200_316_742_963).abs() < 1e-17);
}

#[test]
fn harmonic_lobe_covers_exactly_the_bins_inside_the_width() {
    let geometry = Geometry {
        window_size: 2048,
        hop_size: 441,
        sample_rate: 44_100,
    };
    let contour = F0Contour::from_hz(vec![200.0, 0.0], 0.01).unwrap();
    let cfg = HarmonicMaskConfig {
        width_hz: 50.0,
        n_partials: 1,
        tukey_shape: 0.5,
    };
    let mask = harmonic_mask(&contour, geometry, 2, &cfg).unwrap();
    let expected: Vec<usize> = (0..geometry.bins())
        .filter(|&f| {
            let hz = f as f64 * 44_100.0 / 2048.0;
            (175.0..=225.0).contains(&hz)
        })
        .collect();
    let nonzero: Vec<usize> = (0..geometry.bins()).filter(|&f| mask.values()[[0, f]] > 0.0).collect();
    assert_eq!(nonzero, expected);
    assert_eq!(expected, vec![9, 10]);
    assert!(mask.values().row(1).iter().all(|&v| v == 0.0));
}

#[test]
fn harmonic_mask_at_table_settings_stays_below_nyquist() {
    let geometry = Geometry {
        window_size: 4096,
        hop_size: 441,
        sample_rate: 44_100,
    };
    let cfg = HarmonicMaskConfig {
        width_hz: 70.0,
        n_partials: 20,
        tukey_shape: 0.5,
    };
    // At 1500 Hz only 14 partials fit below Nyquist.
    let contour = F0Contour::from_hz(vec![200.0, 1500.0], 0.01).unwrap();
    let mask = harmonic_mask(&contour, geometry, 2, &cfg).unwrap();
    let df = geometry.bin_spacing_hz();
    for (t, f0) in [(0usize, 200.0), (1, 1500.0)] {
        let row = mask.values().row(t);
        let mut lobes = 0;
        let mut inside = false;
        for (f, &v) in row.iter().enumerate() {
            if v > 0.0 && !inside {
                lobes += 1;
            }
            inside = v > 0.0;
            if v > 0.0 {
                let n = (f as f64 * df / f0).round();
                assert!(n >= 1.0 && n * f0 <= 22_050.0);
            }
        }
        assert!(lobes <= 20);
        assert_eq!(lobes, if f0 == 200.0 { 20 } else { 14 });
    }
}

#[test]
fn shs_of_an_impulse_lands_one_octave_down() {
    let grid = LogFrequencyGrid::new(30.0, 10.0, 400).unwrap();
    let mut values = Array2::zeros((1, 400));
    values[[0, 300]] = 2.0;
    let log = LogSpectrogram {
        values,
        grid,
        hop_seconds: 0.01,
    };
    let s = shs(
        &log,
        &ShsConfig {
            n_partials: 2,
            decay_base: 0.86,
        },
    )
    .unwrap();
    let nonzero: Vec<(usize, f64)> = s.values.row(0).iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(c, &v)| (c, v)).collect();
    assert_eq!(nonzero, vec![(180, 2.0 * 0.86), (300, 2.0)]);
}

fn brute_dft_magnitude(row: &[f64], k: usize) -> f64 {
    let n = row.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (f, &v) in row.iter().enumerate() {
        let phase = -2.0 * std::f64::consts::PI * (k as f64) * (f as f64) / n;
        re += v * phase.cos();
        im += v * phase.sin();
    }
    re.hypot(im)
}

#[test]
fn enhancement_of_a_comb_matches_a_direct_dft() {
    let bins = 1025;
    let period = 20;
    let row: Vec<f64> = (0..bins).map(|f| if f % period == 0 { 1.0 } else { 0.0 }).collect();
    let mask = TimeFrequencyMask::new(Array2::from_shape_vec((1, bins), row.clone()).unwrap(), MaskKind::Binary).unwrap();
    let h_top = 8000.0;
    let grid = LogFrequencyGrid::covering(30.0, 10.0, h_top).unwrap();
    let enh = f0_enhancement(&mask, &grid, h_top).unwrap();
    for c in 0..grid.bins() {
        let lag = (h_top / grid.center_hz(c)).floor() as usize;
        let expected = brute_dft_magnitude(&row, lag.min(bins - 1));
        assert!((enh.saliency.values[[0, c]] - expected).abs() < 1e-9 * expected.max(1.0), "bin {c}");
    }
    // Among lags reachable from 80..720 Hz, floor(8000/720)..=floor(8000/80),
    // the comb's spectrum peaks at round(F / P) = 51.
    let peak = (11..=100)
        .max_by(|&a, &b| brute_dft_magnitude(&row, a).total_cmp(&brute_dft_magnitude(&row, b)))
        .unwrap();
    assert_eq!(peak, 51);
    // Within 80..720 Hz the saliency peaks on the grid bins mapping to that lag.
    let best = (0..grid.bins())
        .filter(|&c| (80.0..=720.0).contains(&grid.center_hz(c)))
        .max_by(|&a, &b| enh.saliency.values[[0, a]].total_cmp(&enh.saliency.values[[0, b]]).then(b.cmp(&a)))
        .unwrap();
    assert_eq!((h_top / grid.center_hz(best)).floor() as usize, peak);
}

#[test]
fn db_linear_ramp_is_sampled_exactly() {
    let geometry = Geometry {
        window_size: 2048,
        hop_size: 160,
        sample_rate: 16_000,
    };
    let bins = geometry.bins();
    // 20 log10(m) = -30 + 0.004 f, a straight line in dB over frequency.
    let db = |hz: f64| -30.0 + 0.004 * hz;
    let values = Array2::from_shape_fn((2, bins), |(_, f)| 10f64.powf(db(geometry.bin_hz(f)) / 20.0));
    let mag = MagnitudeSpectrogram::new(values, geometry).unwrap();
    let grid = LogFrequencyGrid::covering(30.0, 10.0, geometry.nyquist()).unwrap();
    let log = to_log_frequency(&mag, &grid).unwrap();
    for c in 0..grid.bins() {
        assert!((log.values[[1, c]] - db(grid.center_hz(c))).abs() < 1e-9, "bin {c}");
    }
}

#[test]
fn viterbi_matches_exhaustive_search() {
    let mut r = common::rng(11);
    for _ in 0..40 {
        let frames = r.random_range(1..=5);
        let bins = 8;
        let s = Array2::from_shape_fn((frames, bins), |_| r.random::<f64>());
        let grid = LogFrequencyGrid::new(100.0, 100.0, bins).unwrap();
        let cfg = TrackerConfig {
            f0_min: 100.0,
            f0_max: 2000.0,
            ..TrackerConfig::default()
        };
        let contour = viterbi(&SaliencySpectrogram::new(s.clone(), grid).unwrap(), &cfg, 0.01).unwrap();
        let path: Vec<usize> = contour.f0_hz().iter().map(|&h| grid.nearest_index(h)).collect();
        assert_eq!(path, common::brute_force_path(&s, 100.0, cfg.b, cfg.saliency_floor));
    }
}

#[test]
fn alignment_of_an_11_6_ms_contour_counts_every_voiced_truth_instant() {
    // Truth: 10 ms frames over 2 s, voiced from 0.5 s to 1.5 s.
    let truth_hz: Vec<f64> = (0..201).map(|t| if (50..=150).contains(&t) { 220.0 } else { 0.0 }).collect();
    let truth = F0Contour::from_hz(truth_hz, 0.01).unwrap();
    let est = F0Contour::from_hz(vec![220.0; 173], 0.0116).unwrap();
    let pairs = contour_accuracy_prep(&est, &truth);
    // Direct simulation: every 10 ms tick maps to truth frame i itself.
    let expected = (0..201).filter(|&i| truth.voiced()[i]).count();
    assert_eq!(pairs.len(), expected);
    assert_eq!(expected, 101);
    assert!(pairs.iter().all(|p| p.error_cents() == Some(0.0)));
}

pub struct Planted {
    pub x: Array2<f64>,
    pub low_rank: Array2<f64>,
}

/// 50x50 rank-2 matrix plus spikes of size 1..10 on 5% of the entries.
pub fn planted(seed: u64) -> Planted {
    let mut r = common::rng(seed);
    let n = 50;
    let u = Array2::from_shape_fn((n, 2), |_| r.sample::<f64, _>(StandardNormal));
    let v = Array2::from_shape_fn((2, n), |_| r.sample::<f64, _>(StandardNormal));
    let low_rank = u.dot(&v);
    let mut x = low_rank.clone();
    let mut cells: Vec<usize> = (0..n * n).collect();
    for i in 0..n * n / 20 {
        let j = r.random_range(i..n * n);
        cells.swap(i, j);
        let spike = r.random_range(1.0..10.0) * if r.random::<bool>() { 1.0 } else { -1.0 };
        x[[cells[i] / n, cells[i] % n]] += spike;
    }
    Planted { x, low_rank }
}

#[test]
fn planted_low_rank_part_is_recovered() {
    for seed in [1, 2, 3] {
        let p = planted(seed);
        let res = decompose(&p.x, &RpcaConfig::with_lambda(1.0)).unwrap();
        let err = (&res.low_rank - &p.low_rank).mapv(|v| v * v).sum().sqrt() / p.low_rank.mapv(|v| v * v).sum().sqrt();
        assert!(res.converged);
        assert!(err < 1e-5, "seed {seed}: relative error {err:e}");
    }
}

fn signal(v: Vec<f64>) -> AudioSignal {
    AudioSignal::new(v, 8000).unwrap()
}

#[test]
fn projections_of_orthogonal_sources() {
    // Sinusoids at distinct DFT bins of the full length are exactly orthogonal.
    let len = 800;
    let tone = |k: f64| (0..len).map(|i| (2.0 * std::f64::consts::PI * k * i as f64 / len as f64).sin()).collect::<Vec<_>>();
    let (s, n) = (signal(tone(5.0)), signal(tone(17.0)));
    let d = decompose_estimate(&n, &s, &n).unwrap();
    assert!(d.target.iter().all(|v| v.abs() < 1e-12));
    let half = signal(s.samples().iter().zip(n.samples()).map(|(a, b)| 0.5 * a + 0.5 * b).collect());
    let d = decompose_estimate(&half, &s, &n).unwrap();
    for i in 0..len {
        assert!((d.target[i] - 0.5 * s.samples()[i]).abs() < 1e-12);
        assert!((d.interference[i] - 0.5 * n.samples()[i]).abs() < 1e-12);
        assert!(d.artifacts[i].abs() < 1e-12);
    }
}

#[test]
fn extra_noise_makes_nsdr_negative() {
    let target = common::white_noise(4000, 8000, 1);
    let other = common::white_noise(4000, 8000, 2);
    let noise = common::white_noise(4000, 8000, 3);
    let mix = signal(target.samples().iter().zip(other.samples()).map(|(a, b)| a + b).collect());
    let worse = signal(mix.samples().iter().zip(noise.samples()).map(|(a, b)| a + b).collect());
    // Direct computation: the extra noise only adds artifact energy.
    assert!(nsdr(&worse, &target, &mix).unwrap() < 0.0);
    assert_eq!(nsdr(&mix, &target, &mix).unwrap(), 0.0);
}

#[test]
fn alternating_voicing_keeps_exactly_the_voiced_samples() {
    let sr = 8000u32;
    // 10 ms frames of 80 samples; sample i belongs to the frame nearest i / 80.
    let f0: Vec<f64> = (0..10).map(|t| if t % 2 == 0 { 200.0 } else { 0.0 }).collect();
    let truth = F0Contour::from_hz(f0, 0.01).unwrap();
    let s = AudioSignal::new(vec![1.0; 800], sr).unwrap();
    let masked = voiced_region_mask(&s, &truth);
    for (i, &v) in masked.samples().iter().enumerate() {
        // Samples exactly halfway between frame times fall to float rounding.
        if i % 80 == 40 {
            continue;
        }
        let frame = ((i + 40) / 80).min(9);
        assert_eq!(v, if frame % 2 == 0 { 1.0 } else { 0.0 }, "sample {i}");
    }
}
