//! Tensor and mask containers, the `CMT1` binary format and synthetic episodes.

mod format;
mod mask;
mod synth;
mod tensor;

pub use format::{decode_tensor, encode_tensor, read_tensor, write_tensor, MAGIC};
pub use mask::{downsample_mask, mask_from_bbox};
pub use synth::{generate_synthetic_episode, synthesize_episode, Episode, EpisodeSpec};
pub use tensor::{BinaryMask, BoundingBox, DType, FeatureGrid, Tensor, TensorData};

/// File names of an episode directory.
pub mod episode_files {
    pub const SUPPORT_FEAT: &str = "support_feat.cmt";
    pub const QUERY_FEAT: &str = "query_feat.cmt";
    pub const SUPPORT_MASK: &str = "support_mask.cmt";
    pub const QUERY_GT: &str = "query_gt.cmt";
}
