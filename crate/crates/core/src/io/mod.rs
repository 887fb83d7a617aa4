//! Reading videos as grayscale volumes and persisting volumes and features.

mod feature_csv;
mod frames;
mod volume_file;

pub use feature_csv::{append_feature_rows, read_feature_csv, write_feature_csv, FeatureRow, FeatureTable};
pub use frames::{load_video, save_frames, FrameSequenceSource, LUMA_WEIGHTS};
pub use volume_file::{load_volume, read_volume, save_volume, write_volume, VOLUME_MAGIC};
