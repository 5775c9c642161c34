//! Stimulus schedules: a baseline, then a run of trials, each a real
//! recording with one fake segment spliced in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Interval, LabelTrack, Tag};

/// Where the fake segment goes inside a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertionPolicy {
    /// Starts one minute into the trial.
    AfterFirstMinute,
    /// Starts at the middle of the second minute (90 s).
    MidSecondMinute,
    /// Ends with the trial.
    End,
    /// One of the three above, drawn per trial.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    High,
    Medium,
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSpec {
    /// Total length; the tail after the last trial is silence. `None` fits the trials exactly.
    pub duration_s: Option<f64>,
    pub baseline_s: f64,
    /// One fake segment per trial.
    pub n_fake_segments: usize,
    pub trial_s: f64,
    /// Silence before each trial.
    pub gap_s: f64,
    pub insertion_policy: InsertionPolicy,
    pub min_fake_words: u32,
    pub max_fake_words: u32,
    pub words_per_second: f64,
    /// Uniform delay added to the minute-based insertion points, in `[0, jitter_s)`.
    pub jitter_s: f64,
    /// Fake-audio quality tier; provenance only, it does not alter the schedule.
    pub quality_tag: Quality,
    pub seed: u64,
}

impl Default for SessionSpec {
    fn default() -> Self {
        Self {
            duration_s: None,
            baseline_s: 180.0,
            n_fake_segments: 10,
            trial_s: 180.0,
            gap_s: 2.0,
            insertion_policy: InsertionPolicy::Random,
            min_fake_words: 5,
            max_fake_words: 15,
            words_per_second: 2.5,
            jitter_s: 4.0,
            quality_tag: Quality::High,
            seed: 0,
        }
    }
}

impl SessionSpec {
    pub fn stimulus_s(&self) -> f64 {
        self.n_fake_segments as f64 * (self.trial_s + self.gap_s)
    }

    pub fn total_s(&self) -> f64 {
        self.duration_s.unwrap_or(self.baseline_s + self.stimulus_s())
    }

    pub fn min_fake_s(&self) -> f64 {
        self.min_fake_words as f64 / self.words_per_second
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("baseline_s", self.baseline_s),
            ("trial_s", self.trial_s),
            ("words_per_second", self.words_per_second),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gap_s >= 0.0 && self.jitter_s >= 0.0) {
            return Err(Error::invalid("gap_s and jitter_s must be non-negative"));
        }
        if self.min_fake_words == 0 || self.max_fake_words < self.min_fake_words {
            return Err(Error::invalid(
                "fake word counts must satisfy 0 < min_fake_words <= max_fake_words",
            ));
        }
        if self.total_s() < self.baseline_s + self.stimulus_s() - 1e-9 {
            return Err(Error::invalid(format!(
                "duration {} s cannot hold a {} s baseline and {} s of trials",
                self.total_s(),
                self.baseline_s,
                self.stimulus_s()
            )));
        }
        Ok(())
    }
}

/// Builds the tagged timeline for `spec`; deterministic in `spec.seed`.
pub fn gen_schedule(spec: &SessionSpec) -> Result<LabelTrack> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut intervals = vec![Interval::new(0.0, spec.baseline_s, Tag::Baseline)];
    let mut t = spec.baseline_s;
    for trial in 0..spec.n_fake_segments {
        if spec.gap_s > 0.0 {
            intervals.push(Interval::new(t, t + spec.gap_s, Tag::Silence));
            t += spec.gap_s;
        }
        let words = rng.random_range(spec.min_fake_words..=spec.max_fake_words);
        let fake_s = words as f64 / spec.words_per_second;
        let policy = match spec.insertion_policy {
            InsertionPolicy::Random => match rng.random_range(0..3) {
                0 => InsertionPolicy::AfterFirstMinute,
                1 => InsertionPolicy::MidSecondMinute,
                _ => InsertionPolicy::End,
            },
            p => p,
        };
        let jitter = if spec.jitter_s > 0.0 {
            rng.random_range(0.0..spec.jitter_s)
        } else {
            0.0
        };
        let offset = match policy {
            InsertionPolicy::AfterFirstMinute => 60.0 + jitter,
            InsertionPolicy::MidSecondMinute => 90.0 + jitter,
            InsertionPolicy::End => spec.trial_s - fake_s,
            InsertionPolicy::Random => unreachable!("resolved above"),
        };
        if offset < 0.0 || offset + fake_s > spec.trial_s + 1e-9 {
            return Err(Error::invalid(format!(
                "trial {trial}: a {fake_s} s fake segment at {offset:.2} s does not fit in a {} s trial",
                spec.trial_s
            )));
        }
        let trial_end = t + spec.trial_s;
        let fake_start = t + offset;
        let mut fake_end = t + offset + fake_s;
        // Round-off can put an end-of-trial fake one ulp past the trial boundary.
        if trial_end - fake_end <= 1e-9 {
            fake_end = trial_end;
        }
        if offset > 0.0 {
            intervals.push(Interval::new(t, fake_start, Tag::Real));
        }
        intervals.push(Interval::new(fake_start, fake_end, Tag::Fake));
        if fake_end < trial_end {
            intervals.push(Interval::new(fake_end, trial_end, Tag::Real));
        }
        t = trial_end;
    }
    let total = spec.total_s();
    if total - t > 1e-9 {
        intervals.push(Interval::new(t, total, Tag::Silence));
    }
    LabelTrack::new(intervals)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(policy: InsertionPolicy) -> SessionSpec {
        SessionSpec {
            insertion_policy: policy,
            n_fake_segments: 4,
            ..SessionSpec::default()
        }
    }

    #[test]
    fn after_first_minute_starts_near_sixty_seconds() {
        let s = spec(InsertionPolicy::AfterFirstMinute);
        let track = gen_schedule(&s).unwrap();
        let first_trial = s.baseline_s + s.gap_s;
        let fake = track.intervals().iter().find(|iv| iv.tag == Tag::Fake).unwrap();
        let offset = fake.start_s - first_trial;
        assert!((60.0..65.0).contains(&offset), "offset {offset}");
    }

    #[test]
    fn fake_segments_hold_at_least_five_words() {
        for seed in 0..5 {
            let s = SessionSpec {
                seed,
                ..spec(InsertionPolicy::Random)
            };
            let track = gen_schedule(&s).unwrap();
            for iv in track.intervals().iter().filter(|iv| iv.tag == Tag::Fake) {
                assert!(iv.duration_s() >= 2.0 - 1e-12);
            }
        }
    }

    #[test]
    fn intervals_tile_the_session() {
        let s = SessionSpec {
            duration_s: Some(1000.0),
            ..spec(InsertionPolicy::MidSecondMinute)
        };
        let track = gen_schedule(&s).unwrap();
        let ivs = track.intervals();
        assert_eq!(ivs[0].start_s, 0.0);
        assert!((ivs.last().unwrap().end_s - 1000.0).abs() < 1e-9);
        for w in ivs.windows(2) {
            assert!((w[0].end_s - w[1].start_s).abs() < 1e-9);
        }
        assert_eq!(ivs.iter().filter(|iv| iv.tag == Tag::Fake).count(), 4);
    }

    #[test]
    fn short_trials_cannot_hold_minute_insertions() {
        let s = SessionSpec {
            trial_s: 30.0,
            ..spec(InsertionPolicy::AfterFirstMinute)
        };
        assert!(gen_schedule(&s).is_err());
        let end = SessionSpec {
            trial_s: 30.0,
            ..spec(InsertionPolicy::End)
        };
        assert!(gen_schedule(&end).is_ok());
    }

    #[test]
    fn deterministic_by_seed() {
        let s = spec(InsertionPolicy::Random);
        assert_eq!(gen_schedule(&s).unwrap(), gen_schedule(&s).unwrap());
    }
}
