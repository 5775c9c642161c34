//! Deterministic stand-in data: stimulus schedules, EEG-like recordings and
//! labeled point clouds.

mod cloud;
mod recording;
mod schedule;

pub use cloud::{interleaved_cloud, separated_cloud, CloudSpec};
pub use recording::{
    channel_names, gen_recording, narrowband_noise, pink_noise, ArtifactSpec, BandSignature, SignatureDrift,
    SignatureSpec, MASTOIDS,
};
pub use schedule::{gen_schedule, InsertionPolicy, Quality, SessionSpec};
