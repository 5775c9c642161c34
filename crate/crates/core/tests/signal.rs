//! Preprocessing chain: examples against analytic oracles and randomized invariants.

use std::f64::consts::{PI, TAU};

use ndarray::Array2;
use neurowave::signal::{
    bandpass_filter, baseline_correct, label_epochs, rereference_common_average, rereference_mastoid, resample,
    segment, Interval, Label, LabelTrack, Recording, Tag,
};
use proptest::prelude::*;

fn sine(n: usize, rate: f64, freq: f64, amp: f64, phase: f64) -> Vec<f64> {
    (0..n)
        .map(|i| amp * (2.0 * PI * freq * i as f64 / rate + phase).sin())
        .collect()
}

fn one_channel(x: Vec<f64>, rate: f64) -> Recording {
    let n = x.len();
    Recording::with_default_names(Array2::from_shape_vec((1, n), x).unwrap(), rate).unwrap()
}

/// Amplitude of the `freq` component by least squares on sin/cos, which are
/// near-orthogonal over many periods.
fn fitted_amplitude(x: &[f64], rate: f64, freq: f64) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let w = 2.0 * PI * freq * i as f64 / rate;
        s += v * w.sin();
        c += v * w.cos();
    }
    2.0 * (s * s + c * c).sqrt() / x.len() as f64
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn interior(rec: &Recording, edge: usize) -> Vec<f64> {
    let row = rec.data().row(0);
    row.iter().skip(edge).take(row.len() - 2 * edge).copied().collect()
}

fn track(parts: &[(f64, Tag)]) -> LabelTrack {
    let mut t = 0.0;
    let intervals = parts
        .iter()
        .map(|&(d, tag)| {
            let iv = Interval::new(t, t + d, tag);
            t += d;
            iv
        })
        .collect();
    LabelTrack::new(intervals).unwrap()
}

#[test]
fn passband_sine_amplitude_is_kept() {
    let rate = 5000.0;
    let rec = one_channel(sine(20_000, rate, 10.0, 1.0, 0.3), rate);
    let out = bandpass_filter(&rec, 0.5, 80.0).unwrap();
    let x = interior(&out, 5000);
    let amp = fitted_amplitude(&x, rate, 10.0);
    assert!((0.95..=1.05).contains(&amp), "gain {amp}");
}

#[test]
fn stopband_sine_is_suppressed() {
    let rate = 5000.0;
    let rec = one_channel(sine(20_000, rate, 500.0, 1.0, 0.0), rate);
    let out = bandpass_filter(&rec, 0.5, 80.0).unwrap();
    assert!(rms(&interior(&out, 5000)) < 0.05);
}

#[test]
fn resampled_sine_matches_direct_synthesis() {
    let rec = one_channel(sine(5000 * 8, 5000.0, 10.0, 1.0, 0.0), 5000.0);
    let out = resample(&rec, 256.0).unwrap();
    assert_eq!(out.sample_rate_hz(), 256.0);
    assert!((out.n_samples() as i64 - 2048).abs() <= 1);
    let direct = sine(out.n_samples(), 256.0, 10.0, 1.0, 0.0);
    let worst = out
        .data()
        .row(0)
        .iter()
        .zip(&direct)
        .skip(256)
        .take(out.n_samples() - 512)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.02, "max deviation {worst}");
}

#[test]
fn resampler_suppresses_aliases() {
    let rec = one_channel(sine(5000 * 4, 5000.0, 200.0, 1.0, 0.0), 5000.0);
    let out = resample(&rec, 256.0).unwrap();
    assert!(rms(&interior(&out, 128)) < 0.05);
}

#[test]
fn segment_examples() {
    let rec = |n| Recording::with_default_names(Array2::zeros((3, n)), 256.0).unwrap();
    let set = segment(&rec(2560), 0.5, 0.5).unwrap();
    assert_eq!(set.len(), 39);
    assert!(set.epochs.iter().all(|e| e.window.dim() == (128, 3)));
    assert_eq!(segment(&rec(128), 0.5, 0.5).unwrap().len(), 1);
    assert_eq!(segment(&rec(127), 0.5, 0.5).unwrap().len(), 0);
}

#[test]
fn silence_overlap_drops_epoch() {
    let t = track(&[
        (1.0, Tag::Baseline),
        (1.0, Tag::Real),
        (0.25, Tag::Silence),
        (1.75, Tag::Fake),
    ]);
    let rec = Recording::with_default_names(Array2::zeros((1, 1024)), 256.0).unwrap();
    let labeled = label_epochs(&segment(&rec, 0.5, 0.5).unwrap(), &t).unwrap();
    for e in &labeled.epochs {
        let (a, b) = (e.origin_time_s, e.origin_time_s + 0.5);
        assert!(a >= 1.0 && !(a < 2.25 && b > 2.0));
    }
    // Real [1, 2): starts 1.0, 1.25, 1.5. Fake [2.25, 4): starts 2.25 .. 3.5 step 0.25.
    assert_eq!(labeled.count(Label::Real), 3);
    assert_eq!(labeled.count(Label::Fake), 6);
}

fn random_matrix(channels: usize, n: usize, seed: u64) -> Array2<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((channels, n), |_| rng.random_range(-50.0..50.0))
}

fn baseline_track(total_s: f64, base_s: f64) -> LabelTrack {
    track(&[(base_s, Tag::Baseline), (total_s - base_s, Tag::Real)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn common_average_is_zero_mean_and_idempotent(
        channels in 2usize..12, n in 1usize..200, seed in any::<u64>()
    ) {
        let rec = Recording::with_default_names(random_matrix(channels, n, seed), 100.0).unwrap();
        let once = rereference_common_average(&rec).unwrap();
        for col in once.data().columns() {
            let scale = col.iter().map(|v| v.abs()).fold(1.0, f64::max);
            prop_assert!(col.sum().abs() / channels as f64 <= 1e-12 * scale);
        }
        let twice = rereference_common_average(&once).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn mastoid_subtracts_pair_mean(channels in 2usize..8, n in 1usize..100, seed in any::<u64>()) {
        let rec = Recording::with_default_names(random_matrix(channels, n, seed), 100.0).unwrap();
        let out = rereference_mastoid(&rec, "ch0", &format!("ch{}", channels - 1)).unwrap();
        for t in 0..n {
            let m = (rec.data()[[0, t]] + rec.data()[[channels - 1, t]]) / 2.0;
            for c in 0..channels {
                prop_assert!((out.data()[[c, t]] - (rec.data()[[c, t]] - m)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn baseline_correction_is_idempotent(
        channels in 1usize..6, secs in 2usize..10, base_frac in 0.1f64..0.9, seed in any::<u64>()
    ) {
        let rate = 50.0;
        let n = secs * 50;
        let rec = Recording::with_default_names(random_matrix(channels, n, seed), rate).unwrap();
        let t = baseline_track(secs as f64, (secs as f64 * base_frac * 50.0).round() / 50.0);
        let once = baseline_correct(&rec, &t).unwrap();
        let (a, b) = once.sample_range(0.0, t.baseline().end_s);
        for row in once.data().rows() {
            let mean = row.iter().skip(a).take(b - a).sum::<f64>() / (b - a) as f64;
            prop_assert!(mean.abs() < 1e-9 * 50.0);
        }
        let twice = baseline_correct(&once, &t).unwrap();
        for (x, y) in once.data().iter().zip(twice.data()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn bandpass_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let rate = 500.0;
        let x = random_matrix(1, 1500, seed);
        let y = random_matrix(1, 1500, seed ^ 0x5eed);
        let combo = &x * a + &y * b;
        let f = |m: Array2<f64>| bandpass_filter(&Recording::with_default_names(m, rate).unwrap(), 0.5, 80.0).unwrap();
        let (fx, fy, fc) = (f(x), f(y), f(combo));
        let scale = fc.data().iter().map(|v| v.abs()).fold(1.0, f64::max);
        for ((p, q), r) in fx.data().iter().zip(fy.data()).zip(fc.data()) {
            prop_assert!((a * p + b * q - r).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn filter_passband_and_stopband_bounds(
        pass_hz in 5.0f64..40.0, stop_hz in 400.0f64..2000.0, phase in 0.0f64..TAU
    ) {
        let rate = 5000.0;
        let n = 15_000;
        let pass = bandpass_filter(&one_channel(sine(n, rate, pass_hz, 1.0, phase), rate), 0.5, 80.0).unwrap();
        let gain = fitted_amplitude(&interior(&pass, 5000), rate, pass_hz);
        prop_assert!((0.95..=1.05).contains(&gain), "gain {} at {} Hz", gain, pass_hz);
        let stop = bandpass_filter(&one_channel(sine(n, rate, stop_hz, 1.0, phase), rate), 0.5, 80.0).unwrap();
        prop_assert!(rms(&interior(&stop, 5000)) < 0.05);
    }

    // Above the anti-aliasing filter's 128–148 Hz transition band.
    #[test]
    fn resampler_alias_suppression(freq in 150.0f64..2400.0, phase in 0.0f64..TAU) {
        let rec = one_channel(sine(5000 * 2, 5000.0, freq, 1.0, phase), 5000.0);
        let out = resample(&rec, 256.0).unwrap();
        prop_assert!((out.n_samples() as i64 - 512).abs() <= 1);
        prop_assert!(rms(&interior(&out, 96)) < 0.05, "{} Hz leaks", freq);
    }

    #[test]
    fn segment_count_formula(n in 0usize..3000, quarter in 1usize..50, hop_quarters in 1usize..=4) {
        // Window of 4q samples with hop k·q; rate chosen so window_s·rate = len.
        let len = 4 * quarter;
        let hop = quarter * hop_quarters;
        let overlap = 1.0 - hop as f64 / len as f64;
        let rec = Recording::with_default_names(Array2::zeros((1, n)), len as f64).unwrap();
        let set = segment(&rec, 1.0, overlap).unwrap();
        let brute = (0..).take_while(|k| k * hop + len <= n).count();
        prop_assert_eq!(set.len(), brute);
        let expected = if n < len { 0 } else { (n - len) / hop + 1 };
        prop_assert_eq!(set.len(), expected);
    }

    #[test]
    fn labels_match_brute_force_overlap(
        parts in prop::collection::vec((1usize..16, 0usize..3), 1..10), seed in any::<u64>()
    ) {
        // Durations in quarter seconds; tags real/fake/silence after a 1 s baseline.
        let mut spec = vec![(1.0, Tag::Baseline)];
        spec.extend(parts.iter().map(|&(q, t)| {
            (q as f64 * 0.25, [Tag::Real, Tag::Fake, Tag::Silence][t])
        }));
        let t = track(&spec);
        let rate = 64.0;
        let n = (t.end_s() * rate).round() as usize;
        let rec = Recording::with_default_names(random_matrix(1, n, seed), rate).unwrap();
        let set = segment(&rec, 0.5, 0.5).unwrap();
        let labeled = label_epochs(&set, &t).unwrap();
        let mut expected = Vec::new();
        for e in &set.epochs {
            let (a, b) = (e.origin_time_s, e.origin_time_s + 0.5);
            let mut share = [0.0; 4];
            for iv in t.intervals() {
                let ov = (iv.end_s.min(b) - iv.start_s.max(a)).max(0.0);
                let slot = match iv.tag { Tag::Real => 0, Tag::Fake => 1, Tag::Silence => 2, Tag::Baseline => 3 };
                share[slot] += ov;
            }
            if share[2] > 1e-9 || share[3] > 1e-9 {
                continue;
            }
            expected.push((a, if share[0] > share[1] { Label::Real } else { Label::Fake }));
        }
        let got: Vec<(f64, Label)> = labeled.epochs.iter().map(|e| (e.origin_time_s, e.label.unwrap())).collect();
        prop_assert_eq!(got, expected);
    }
}
