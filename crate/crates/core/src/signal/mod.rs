//! Recording data model and the deterministic preprocessing chain.

pub mod epochs;
pub mod filter;
pub mod recording;
pub mod reference;
pub mod resample;

pub use epochs::{label_epochs, segment, Epoch, EpochSet};
pub use filter::bandpass_filter;
pub use recording::{Interval, Label, LabelTrack, Recording, Tag};
pub use reference::{baseline_correct, rereference_common_average, rereference_mastoid};
pub use resample::resample;
