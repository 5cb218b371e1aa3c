//! Dataset plumbing: pose and manifest schemas, normalization, windowing,
//! subset and split construction, and a synthetic corpus generator.

mod manifest;
mod pose;
pub mod synth;

pub use manifest::{
    apportion_4_1_1, build_subset, filter_gloss_min_count, filter_variation_min_count,
    read_manifest, split_manifest, write_manifest, GlossEntry, Instance, Manifest, Split,
    DEFAULT_MIN_EXAMPLES, DEFAULT_MIN_VIDEOS,
};
pub use pose::{
    keypoint_bbox, mirror_horizontal, normalize_frames, pad_frames, read_pose, resample_uniform,
    sample_window, write_pose, PoseSequence, BODY, KEYPOINTS, LAYOUT_VERSION, LEFT_HAND,
    RIGHT_HAND,
};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("pose {video_id} has no frames")]
    EmptyPose { video_id: String },
    #[error("frame {frame} of pose {video_id} has {got} keypoints, expected {expected}")]
    KeypointCount {
        video_id: String,
        frame: usize,
        got: usize,
        expected: usize,
    },
    #[error("bounding box {bbox:?} has a zero diagonal; cannot normalize")]
    DegenerateBbox { bbox: [f64; 4] },
    #[error("frames {start}..={end} out of range for pose {video_id} with {frames} frames")]
    FrameRange {
        video_id: String,
        start: u32,
        end: u32,
        frames: usize,
    },
    #[error("duplicate gloss {0:?} in manifest")]
    DuplicateGloss(String),
    #[error("duplicate instance id {0:?} in manifest")]
    DuplicateInstance(String),
    #[error("instance {instance_id}: frame_start {start} exceeds frame_end {end}")]
    BadFrameOrder {
        instance_id: String,
        start: u32,
        end: u32,
    },
    #[error("subset of {requested} glosses requested but the manifest has {available}")]
    NotEnoughGlosses { requested: usize, available: usize },
    #[error("gloss {gloss:?} has {count} instances; splitting needs at least 3")]
    TooFewInstances { gloss: String, count: usize },
}
