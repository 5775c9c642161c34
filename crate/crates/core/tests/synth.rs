//! Generator statistics: null signatures, artifact visibility, schedule rules and shapes.

use neurowave::signal::{LabelTrack, Recording, Tag};
use neurowave::spectral::power_spectrum;
use neurowave::synth::{
    gen_recording, gen_schedule, ArtifactSpec, InsertionPolicy, SessionSpec, SignatureDrift, SignatureSpec,
};
use proptest::prelude::*;

fn short_session(seed: u64) -> SessionSpec {
    SessionSpec {
        baseline_s: 5.0,
        n_fake_segments: 2,
        trial_s: 20.0,
        gap_s: 1.0,
        insertion_policy: InsertionPolicy::End,
        seed,
        ..SessionSpec::default()
    }
}

/// Mean power per sample inside `[lo, hi)` Hz over the samples of every interval tagged `tag`.
fn tagged_band_power(rec: &Recording, track: &LabelTrack, tag: Tag, channel: usize, lo: f64, hi: f64) -> f64 {
    let rate = rec.sample_rate_hz();
    let (mut power, mut samples) = (0.0, 0usize);
    for iv in track.intervals().iter().filter(|iv| iv.tag == tag) {
        let (a, b) = rec.sample_range(iv.start_s, iv.end_s);
        let x: Vec<f64> = rec.data().row(channel).iter().skip(a).take(b - a).copied().collect();
        let n = x.len();
        let p = power_spectrum(&x);
        let in_band: f64 = p
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = *k as f64 * rate / n as f64;
                f >= lo && f < hi
            })
            .map(|(_, v)| v)
            .sum();
        // One-sided bins carry half the energy each; Parseval gives Σx² = 2Σ|X_k|²/n.
        power += 2.0 * in_band / n as f64;
        samples += n;
    }
    power / samples as f64
}

fn t_statistic(d: &[f64]) -> f64 {
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    mean / (var / n).sqrt()
}

fn fake_minus_real(sig: &SignatureSpec, runs: u64) -> Vec<f64> {
    (0..runs)
        .map(|seed| {
            let track = gen_schedule(&short_session(seed)).unwrap();
            let rec = gen_recording(&track, sig, 4, 256.0, seed).unwrap();
            (0..4)
                .map(|c| {
                    tagged_band_power(&rec, &track, Tag::Fake, c, 33.0, 43.0)
                        - tagged_band_power(&rec, &track, Tag::Real, c, 33.0, 43.0)
                })
                .sum::<f64>()
        })
        .collect()
}

#[test]
fn zero_fake_amplitude_is_statistically_invisible() {
    let mut sig = SignatureSpec {
        artifacts: ArtifactSpec::none(),
        ..SignatureSpec::default()
    };
    sig.fake_signature.amplitude_uv = 0.0;
    let t = t_statistic(&fake_minus_real(&sig, 50));
    assert!(t.abs() < 2.0, "t = {t}");
}

#[test]
fn default_fake_amplitude_is_detectable() {
    let sig = SignatureSpec {
        artifacts: ArtifactSpec::none(),
        ..SignatureSpec::default()
    };
    let t = t_statistic(&fake_minus_real(&sig, 50));
    assert!(t > 5.0, "t = {t}");
}

#[test]
fn line_noise_stands_out_from_neighbours() {
    let track = gen_schedule(&short_session(3)).unwrap();
    let sig = SignatureSpec {
        artifacts: ArtifactSpec {
            muscle_uv: 0.0,
            heartbeat_uv: 0.0,
            drift_uv: 0.0,
            ..ArtifactSpec::default()
        },
        ..SignatureSpec::default()
    };
    let rate = 500.0;
    let rec = gen_recording(&track, &sig, 8, rate, 3).unwrap();
    // The line source has a random spatial pattern; judge it on its strongest channel.
    let strongest = rec
        .data()
        .rows()
        .into_iter()
        .map(|row| {
            let x = row.to_vec();
            let p = power_spectrum(&x);
            let k = (50.0 * x.len() as f64 / rate).round() as usize;
            let side = (k - 40..k - 10).chain(k + 10..k + 40).map(|i| p[i]).sum::<f64>() / 60.0;
            p[k] / side
        })
        .fold(0.0, f64::max);
    assert!(strongest > 100.0, "50 Hz bin over neighbours: {strongest}");
}

#[test]
fn baseline_carries_background_only() {
    let track = gen_schedule(&short_session(5)).unwrap();
    let mut sig = SignatureSpec {
        artifacts: ArtifactSpec::none(),
        ..SignatureSpec::default()
    };
    sig.fake_signature.amplitude_uv = 30.0;
    let loud = gen_recording(&track, &sig, 4, 256.0, 5).unwrap();
    sig.fake_signature.amplitude_uv = 0.0;
    let quiet = gen_recording(&track, &sig, 4, 256.0, 5).unwrap();
    let (a, b) = loud.sample_range(track.baseline().start_s, track.baseline().end_s);
    for c in 0..4 {
        for i in a..b {
            assert_eq!(loud.data()[[c, i]], quiet.data()[[c, i]]);
        }
    }
}

#[test]
fn amplitude_drift_fades_late_fake_segments() {
    let spec = SessionSpec {
        n_fake_segments: 6,
        ..short_session(4)
    };
    let track = gen_schedule(&spec).unwrap();
    let mut sig = SignatureSpec {
        artifacts: ArtifactSpec::none(),
        drift: Some(SignatureDrift {
            fake_center_end_hz: 38.0,
            pattern_mix_end: 0.0,
            fake_amplitude_end_uv: Some(0.0),
        }),
        ..SignatureSpec::default()
    };
    let drifting = gen_recording(&track, &sig, 4, 256.0, 4).unwrap();
    sig.drift = None;
    let steady = gen_recording(&track, &sig, 4, 256.0, 4).unwrap();
    sig.fake_signature.amplitude_uv = 0.0;
    let silent = gen_recording(&track, &sig, 4, 256.0, 4).unwrap();
    // Each drifting burst is the steady burst scaled by 1 − progress at the interval midpoint.
    for iv in track.intervals().iter().filter(|iv| iv.tag == Tag::Fake) {
        let (a, b) = steady.sample_range(iv.start_s, iv.end_s);
        let (mut num, mut den) = (0.0, 0.0);
        for c in 0..4 {
            for i in a..b {
                let burst = steady.data()[[c, i]] - silent.data()[[c, i]];
                num += (drifting.data()[[c, i]] - silent.data()[[c, i]]) * burst;
                den += burst * burst;
            }
        }
        let expected = 1.0 - (iv.start_s + iv.end_s) / 2.0 / track.end_s();
        assert!((num / den - expected).abs() < 1e-9, "scale {} vs {expected}", num / den);
    }
    sig.fake_signature.amplitude_uv = 6.0;
    sig.drift = Some(SignatureDrift {
        fake_center_end_hz: 38.0,
        pattern_mix_end: 0.0,
        fake_amplitude_end_uv: Some(-1.0),
    });
    assert!(gen_recording(&track, &sig, 4, 256.0, 4).is_err());
}

#[test]
fn five_minutes_at_full_rate_has_expected_shape() {
    let spec = SessionSpec {
        duration_s: Some(300.0),
        baseline_s: 60.0,
        n_fake_segments: 1,
        trial_s: 200.0,
        ..SessionSpec::default()
    };
    let track = gen_schedule(&spec).unwrap();
    // Two channels keep memory small; the sample count is what the rate and duration fix.
    let rec = gen_recording(&track, &SignatureSpec::default(), 2, 5000.0, 0).unwrap();
    assert_eq!(rec.data().dim(), (2, 1_500_000));
}

#[test]
fn identical_seed_identical_output() {
    let track = gen_schedule(&short_session(9)).unwrap();
    let a = gen_recording(&track, &SignatureSpec::default(), 3, 256.0, 9).unwrap();
    let b = gen_recording(&track, &SignatureSpec::default(), 3, 256.0, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(track, gen_schedule(&short_session(9)).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn schedules_tile_and_respect_word_minimum(
        n in 1usize..6, trial in 105.0f64..200.0, gap in 0.0f64..3.0, policy in 0usize..4, seed in any::<u64>()
    ) {
        let spec = SessionSpec {
            n_fake_segments: n,
            trial_s: trial,
            gap_s: gap,
            insertion_policy: [
                InsertionPolicy::AfterFirstMinute,
                InsertionPolicy::MidSecondMinute,
                InsertionPolicy::End,
                InsertionPolicy::Random,
            ][policy],
            seed,
            ..SessionSpec::default()
        };
        let track = gen_schedule(&spec).unwrap();
        let ivs = track.intervals();
        prop_assert_eq!(ivs[0].tag, Tag::Baseline);
        prop_assert_eq!(ivs[0].start_s, 0.0);
        for w in ivs.windows(2) {
            prop_assert!((w[1].start_s - w[0].end_s).abs() < 1e-9);
        }
        prop_assert!((track.end_s() - spec.total_s()).abs() < 1e-9);
        let fakes: Vec<_> = ivs.iter().filter(|iv| iv.tag == Tag::Fake).collect();
        prop_assert_eq!(fakes.len(), n);
        for f in fakes {
            prop_assert!(f.duration_s() >= 2.0 - 1e-9);
        }
    }
}
