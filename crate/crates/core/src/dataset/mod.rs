//! Recordings, channel normalization, sliding windows and the pretrain/finetune/test split.

mod csv;
mod recording;
mod split;
mod synth;
mod window;

pub use self::csv::{load_csv, load_dir, subject_file_name, write_csv};
pub use recording::{zscore_channels, ChannelStats, Recording};
pub use split::{assign_split, subject_group, Split, SubjectGroup};
pub use synth::{synth_generate, SynthSpec};
pub use window::{slide_windows, subsample_finetune, window_positions, Window, WindowSet};

pub const NUM_CHANNELS: usize = 12;
pub const SAMPLE_RATE_HZ: f64 = 2000.0;
pub const NUM_MOVEMENTS: usize = 17;
pub const NUM_REPETITIONS: u8 = 6;
pub const NUM_SUBJECTS: u32 = 40;
/// Subjects `1..=WITHIN_SUBJECT_MAX` contribute pretraining data.
pub const WITHIN_SUBJECT_MAX: u32 = 25;
/// 300 ms at 2 kHz.
pub const WINDOW_LEN: usize = 600;
/// 10 ms at 2 kHz.
pub const WINDOW_STRIDE: usize = 20;

/// Samples spanned by `ms` milliseconds at the recording rate.
pub fn ms_to_samples(ms: u32) -> usize {
    (ms as usize * SAMPLE_RATE_HZ as usize) / 1000
}
