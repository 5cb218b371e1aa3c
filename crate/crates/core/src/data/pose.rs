//! Per-video keypoint sequences.
//!
//! A pose file holds one `[x, y, confidence]` triple per keypoint per frame,
//! in pixel coordinates. The 55-point layout is fixed: 13 body joints, then
//! the 21 left-hand points, then the 21 right-hand points.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DataError;

pub const KEYPOINTS: usize = 55;
pub const BODY: Range<usize> = 0..13;
pub const LEFT_HAND: Range<usize> = 13..34;
pub const RIGHT_HAND: Range<usize> = 34..55;
pub const LAYOUT_VERSION: u32 = 1;

/// Body joints whose left/right roles swap under a horizontal mirror:
/// (shoulder, elbow, wrist, eye, ear) pairs. Nose, neck and mid-hip are on
/// the axis and stay put.
const MIRROR_BODY_PAIRS: [(usize, usize); 5] = [(2, 5), (3, 6), (4, 7), (8, 9), (10, 11)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSequence {
    pub video_id: String,
    pub fps: f64,
    pub layout_version: u32,
    /// `frames[t][k] = [x, y, confidence]` for keypoint `k` at frame `t`.
    pub frames: Vec<Vec<[f64; 3]>>,
}

impl PoseSequence {
    /// Enforce the fixed layout: at least one frame, 55 keypoints everywhere.
    pub fn validate(&self) -> Result<(), DataError> {
        if self.frames.is_empty() {
            return Err(DataError::EmptyPose {
                video_id: self.video_id.clone(),
            });
        }
        for (i, frame) in self.frames.iter().enumerate() {
            if frame.len() != KEYPOINTS {
                return Err(DataError::KeypointCount {
                    video_id: self.video_id.clone(),
                    frame: i,
                    got: frame.len(),
                    expected: KEYPOINTS,
                });
            }
        }
        Ok(())
    }

    /// The inclusive frame range an instance occupies.
    pub fn clip(&self, start: u32, end: u32) -> Result<&[Vec<[f64; 3]>], DataError> {
        if start > end || end as usize >= self.frames.len() {
            return Err(DataError::FrameRange {
                video_id: self.video_id.clone(),
                start,
                end,
                frames: self.frames.len(),
            });
        }
        Ok(&self.frames[start as usize..=end as usize])
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }
}

pub fn read_pose(path: &Path) -> Result<PoseSequence, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let pose: PoseSequence =
        serde_json::from_reader(BufReader::new(file)).map_err(|source| DataError::Json {
            path: path.to_path_buf(),
            source,
        })?;
    pose.validate()?;
    Ok(pose)
}

pub fn write_pose(path: &Path, pose: &PoseSequence) -> Result<(), DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer(&mut writer, pose).map_err(|source| DataError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    use std::io::Write;
    writer.flush().map_err(io_err)
}

/// Map pixel keypoints into the model's frame of reference: shift the
/// bounding-box center to the origin and put the box corners at distance 1,
/// i.e. `p' = (p - center) * 2 / diagonal`. Keypoints with zero confidence
/// carry no information and are pinned to the origin.
///
/// `bbox` is `[x, y, w, h]`. The result is invariant to uniformly rescaling
/// the pixel coordinates and the box together.
pub fn normalize_frames(
    frames: &[Vec<[f64; 3]>],
    bbox: [f64; 4],
) -> Result<Vec<Vec<[f64; 2]>>, DataError> {
    let [x, y, w, h] = bbox;
    let diagonal = (w * w + h * h).sqrt();
    if diagonal == 0.0 {
        return Err(DataError::DegenerateBbox { bbox });
    }
    let center = (x + w / 2.0, y + h / 2.0);
    let scale = 2.0 / diagonal;
    Ok(frames
        .iter()
        .map(|frame| {
            frame
                .iter()
                .map(|&[px, py, c]| {
                    if c == 0.0 {
                        [0.0, 0.0]
                    } else {
                        [(px - center.0) * scale, (py - center.1) * scale]
                    }
                })
                .collect()
        })
        .collect())
}

/// Tight pixel bounds `[x, y, w, h]` around every keypoint with nonzero
/// confidence, for when no detector box is available. Fails when nothing is
/// visible or all visible points coincide.
pub fn keypoint_bbox(frames: &[Vec<[f64; 3]>]) -> Result<[f64; 4], DataError> {
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for frame in frames {
        for &[px, py, c] in frame {
            if c == 0.0 {
                continue;
            }
            min[0] = min[0].min(px);
            min[1] = min[1].min(py);
            max[0] = max[0].max(px);
            max[1] = max[1].max(py);
        }
    }
    let bbox = if min[0].is_finite() {
        [min[0], min[1], max[0] - min[0], max[1] - min[1]]
    } else {
        [0.0; 4]
    };
    if bbox[2] == 0.0 && bbox[3] == 0.0 {
        return Err(DataError::DegenerateBbox { bbox });
    }
    Ok(bbox)
}

/// Choose the frame range a training pass sees: a uniformly placed
/// fixed-length window when the clip is long enough, the whole clip
/// otherwise.
pub fn sample_window<R: Rng>(frames: usize, window: usize, rng: &mut R) -> Range<usize> {
    if frames <= window {
        0..frames
    } else {
        let start = rng.random_range(0..=frames - window);
        start..start + window
    }
}

/// Repeat the last frame until the sequence reaches `target` frames.
/// Sequences already long enough come back unchanged.
pub fn pad_frames(mut frames: Vec<Vec<[f64; 2]>>, target: usize) -> Vec<Vec<[f64; 2]>> {
    let last = match frames.last() {
        Some(last) => last.clone(),
        None => return frames,
    };
    while frames.len() < target {
        frames.push(last.clone());
    }
    frames
}

/// Linearly resample a sequence onto `target` frames placed uniformly over
/// the original time span (endpoints included).
pub fn resample_uniform(frames: &[Vec<[f64; 2]>], target: usize) -> Vec<Vec<[f64; 2]>> {
    assert!(!frames.is_empty() && target >= 1);
    let n = frames.len();
    if n == 1 || target == 1 {
        return (0..target).map(|_| frames[0].clone()).collect();
    }
    (0..target)
        .map(|i| {
            let pos = i as f64 * (n - 1) as f64 / (target - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = lo.min(n - 2) + 1;
            let frac = pos - lo as f64;
            frames[lo]
                .iter()
                .zip(&frames[hi])
                .map(|(a, b)| [a[0] + (b[0] - a[0]) * frac, a[1] + (b[1] - a[1]) * frac])
                .collect()
        })
        .collect()
}

/// Mirror normalized frames left-to-right: negate x, swap the two hand
/// blocks, and swap the paired body joints.
pub fn mirror_horizontal(frames: &[Vec<[f64; 2]>]) -> Vec<Vec<[f64; 2]>> {
    frames
        .iter()
        .map(|frame| {
            debug_assert_eq!(frame.len(), KEYPOINTS);
            let mut out = frame.clone();
            for (l, r) in MIRROR_BODY_PAIRS {
                out.swap(l, r);
            }
            for i in 0..LEFT_HAND.len() {
                out.swap(LEFT_HAND.start + i, RIGHT_HAND.start + i);
            }
            for p in out.iter_mut() {
                p[0] = -p[0];
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pose_with_frames(frames: usize) -> PoseSequence {
        PoseSequence {
            video_id: "clip".to_string(),
            fps: 25.0,
            layout_version: LAYOUT_VERSION,
            frames: (0..frames)
                .map(|t| vec![[t as f64, 0.0, 1.0]; KEYPOINTS])
                .collect(),
        }
    }

    #[test]
    fn keypoint_bbox_hugs_visible_points() {
        let frames = vec![
            vec![[10.0, 5.0, 1.0], [30.0, 25.0, 0.9], [500.0, 500.0, 0.0]],
            vec![[20.0, 45.0, 0.5], [12.0, 8.0, 1.0], [-99.0, -99.0, 0.0]],
        ];
        // Zero-confidence outliers are ignored.
        assert_eq!(keypoint_bbox(&frames).unwrap(), [10.0, 5.0, 20.0, 40.0]);
    }

    #[test]
    fn keypoint_bbox_rejects_degenerate_input() {
        let invisible = vec![vec![[10.0, 5.0, 0.0]; 3]];
        assert!(matches!(
            keypoint_bbox(&invisible),
            Err(DataError::DegenerateBbox { .. })
        ));
        let single_point = vec![vec![[10.0, 5.0, 1.0]; 3]; 2];
        assert!(matches!(
            keypoint_bbox(&single_point),
            Err(DataError::DegenerateBbox { .. })
        ));
        // A flat-but-extended box is fine: the diagonal is nonzero.
        let flat = vec![vec![[10.0, 5.0, 1.0], [20.0, 5.0, 1.0]]];
        assert_eq!(keypoint_bbox(&flat).unwrap(), [10.0, 5.0, 10.0, 0.0]);
    }

    #[test]
    fn layout_ranges_cover_all_keypoints() {
        assert_eq!(BODY.len() + LEFT_HAND.len() + RIGHT_HAND.len(), KEYPOINTS);
        assert_eq!(BODY.end, LEFT_HAND.start);
        assert_eq!(LEFT_HAND.end, RIGHT_HAND.start);
        assert_eq!(RIGHT_HAND.end, KEYPOINTS);
    }

    #[test]
    fn validate_rejects_bad_layouts() {
        let mut pose = pose_with_frames(3);
        assert!(pose.validate().is_ok());
        pose.frames[1].pop();
        assert!(matches!(
            pose.validate(),
            Err(DataError::KeypointCount {
                frame: 1,
                got: 54,
                ..
            })
        ));
        pose.frames.clear();
        assert!(matches!(pose.validate(), Err(DataError::EmptyPose { .. })));
    }

    #[test]
    fn clip_returns_inclusive_range() {
        let pose = pose_with_frames(10);
        let clip = pose.clip(2, 5).unwrap();
        assert_eq!(clip.len(), 4);
        assert_eq!(clip[0][0][0], 2.0);
        assert!(matches!(
            pose.clip(2, 10),
            Err(DataError::FrameRange { .. })
        ));
        assert!(matches!(pose.clip(5, 2), Err(DataError::FrameRange { .. })));
    }

    #[test]
    fn normalization_puts_box_corner_at_unit_distance() {
        let frames = vec![vec![
            [310.0, 420.0, 1.0], // bottom-right corner of the box
            [160.0, 220.0, 1.0], // box center
            [15.0, 25.0, 0.0],   // zero confidence: pinned to origin
        ]];
        let out = normalize_frames(&frames, [10.0, 20.0, 300.0, 400.0]).unwrap();
        let corner = out[0][0];
        let dist = (corner[0] * corner[0] + corner[1] * corner[1]).sqrt();
        assert!((dist - 1.0).abs() < 1e-12);
        assert_eq!(out[0][1], [0.0, 0.0]);
        assert_eq!(out[0][2], [0.0, 0.0]);
    }

    #[test]
    fn normalization_is_scale_invariant() {
        let frames = vec![vec![[37.0, 91.0, 1.0], [112.0, 64.0, 0.7]]];
        let bbox = [30.0, 55.0, 120.0, 80.0];
        let base = normalize_frames(&frames, bbox).unwrap();
        let s = 3.25;
        let scaled_frames: Vec<Vec<[f64; 3]>> = frames
            .iter()
            .map(|f| f.iter().map(|&[x, y, c]| [x * s, y * s, c]).collect())
            .collect();
        let scaled_bbox = [bbox[0] * s, bbox[1] * s, bbox[2] * s, bbox[3] * s];
        let rescaled = normalize_frames(&scaled_frames, scaled_bbox).unwrap();
        for (a, b) in base[0].iter().zip(&rescaled[0]) {
            assert!((a[0] - b[0]).abs() < 1e-12);
            assert!((a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_boxes_are_rejected() {
        let frames = vec![vec![[1.0, 2.0, 1.0]]];
        assert!(matches!(
            normalize_frames(&frames, [5.0, 5.0, 0.0, 0.0]),
            Err(DataError::DegenerateBbox { .. })
        ));
    }

    #[test]
    fn window_covers_short_clips_entirely() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_window(30, 50, &mut rng), 0..30);
        assert_eq!(sample_window(50, 50, &mut rng), 0..50);
    }

    #[test]
    fn window_is_contiguous_and_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let r = sample_window(120, 50, &mut rng);
            assert_eq!(r.len(), 50);
            assert!(r.end <= 120);
        }
    }

    #[test]
    fn window_start_reaches_both_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let starts: Vec<usize> = (0..2000)
            .map(|_| sample_window(55, 50, &mut rng).start)
            .collect();
        assert!(starts.iter().any(|&s| s == 0));
        assert!(starts.iter().any(|&s| s == 5));
        assert!(starts.iter().all(|&s| s <= 5));
    }

    #[test]
    fn padding_repeats_the_last_frame() {
        let frames = vec![vec![[1.0, 1.0]], vec![[2.0, 2.0]]];
        let padded = pad_frames(frames, 5);
        assert_eq!(padded.len(), 5);
        assert_eq!(padded[4], vec![[2.0, 2.0]]);
        assert_eq!(padded[1], vec![[2.0, 2.0]]);
        assert_eq!(padded[0], vec![[1.0, 1.0]]);

        let unchanged = pad_frames(vec![vec![[1.0, 1.0]]; 7], 5);
        assert_eq!(unchanged.len(), 7);
    }

    #[test]
    fn resampling_keeps_endpoints_and_interpolates() {
        let frames: Vec<Vec<[f64; 2]>> = (0..5).map(|t| vec![[t as f64, 0.0]]).collect();
        let up = resample_uniform(&frames, 9);
        assert_eq!(up.len(), 9);
        assert_eq!(up[0][0][0], 0.0);
        assert_eq!(up[8][0][0], 4.0);
        assert!((up[1][0][0] - 0.5).abs() < 1e-12);

        let down = resample_uniform(&frames, 3);
        assert_eq!(down.len(), 3);
        assert_eq!(down[1][0][0], 2.0);
        assert_eq!(down[2][0][0], 4.0);
    }

    #[test]
    fn resampling_identity_when_lengths_match() {
        let frames: Vec<Vec<[f64; 2]>> = (0..4).map(|t| vec![[t as f64, -(t as f64)]]).collect();
        let same = resample_uniform(&frames, 4);
        for (a, b) in frames.iter().zip(&same) {
            assert!((a[0][0] - b[0][0]).abs() < 1e-12);
            assert!((a[0][1] - b[0][1]).abs() < 1e-12);
        }
    }

    #[test]
    fn mirror_swaps_sides_and_negates_x() {
        let mut frame = vec![[0.0, 0.0]; KEYPOINTS];
        frame[2] = [0.5, 0.1]; // right shoulder
        frame[LEFT_HAND.start] = [0.3, 0.2];
        let mirrored = mirror_horizontal(&[frame]);
        assert_eq!(mirrored[0][5], [-0.5, 0.1]); // now the left shoulder
        assert_eq!(mirrored[0][RIGHT_HAND.start], [-0.3, 0.2]);
        assert_eq!(mirrored[0][2], [0.0, 0.0]);

        // Mirroring twice is the identity.
        let twice = mirror_horizontal(&mirrored);
        assert!(twice[0].iter().enumerate().all(|(k, p)| {
            let orig = if k == 2 {
                [0.5, 0.1]
            } else if k == LEFT_HAND.start {
                [0.3, 0.2]
            } else {
                [0.0, 0.0]
            };
            *p == orig
        }));
    }

    #[test]
    fn pose_roundtrips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.json");
        let pose = pose_with_frames(4);
        write_pose(&path, &pose).unwrap();
        let loaded = read_pose(&path).unwrap();
        assert_eq!(pose, loaded);
    }

    #[test]
    fn read_pose_rejects_wrong_keypoint_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"video_id":"bad","fps":25.0,"layout_version":1,"frames":[[[1.0,2.0,1.0]]]}"#,
        )
        .unwrap();
        assert!(matches!(
            read_pose(&path),
            Err(DataError::KeypointCount { got: 1, .. })
        ));
    }
}
