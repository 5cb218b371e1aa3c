//! Synthetic corpus generator.
//!
//! Produces a manifest plus pose sequences on a 256x256 pixel canvas. Every
//! class is a distinct right-hand motion motif (an ellipse whose two
//! frequencies and radii are derived from the class index); instances of a
//! class differ by a random phase offset, per-signer placement, and Gaussian
//! pixel noise. The body stays near a fixed upper-body template and the left
//! hand sways the same way for every class, so only the right hand separates
//! the classes.

use std::f64::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{GlossEntry, Instance, Manifest, PoseSequence, KEYPOINTS, LAYOUT_VERSION};

pub const CANVAS: f64 = 256.0;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub glosses: usize,
    pub instances_per_gloss: usize,
    /// Frames per instance.
    pub frames: usize,
    /// Distinct signers, assigned round-robin over instances.
    pub signers: usize,
    /// Standard deviation of the Gaussian coordinate noise, in pixels.
    pub noise_sd: f64,
    pub fps: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            glosses: 10,
            instances_per_gloss: 12,
            frames: 60,
            signers: 6,
            noise_sd: 0.02,
            fps: 25.0,
            seed: 0,
        }
    }
}

/// Static upper-body template (nose, neck, shoulders, elbows, wrists, eyes,
/// ears, mid-hip) in canvas pixels.
const BODY_TEMPLATE: [(f64, f64); 13] = [
    (128.0, 60.0),
    (128.0, 90.0),
    (98.0, 92.0),
    (86.0, 130.0),
    (80.0, 165.0),
    (158.0, 92.0),
    (170.0, 130.0),
    (176.0, 165.0),
    (120.0, 52.0),
    (136.0, 52.0),
    (112.0, 58.0),
    (144.0, 58.0),
    (128.0, 200.0),
];

/// Offsets of the 21 hand keypoints from the wrist, roughly a palm fan.
fn hand_template() -> [(f64, f64); 21] {
    let mut points = [(0.0, 0.0); 21];
    // Wrist at the origin, then four joints along each of five fingers.
    for finger in 0..5 {
        let angle = -TAU / 4.0 + (finger as f64 - 2.0) * 0.28;
        for joint in 0..4 {
            let reach = 4.0 + 3.5 * (joint + 1) as f64;
            points[1 + finger * 4 + joint] = (reach * angle.cos(), reach * angle.sin());
        }
    }
    points
}

/// Per-class motion parameters for the right hand.
struct Motif {
    fx: f64,
    fy: f64,
    ax: f64,
    ay: f64,
    phase: f64,
}

fn motif(class: usize) -> Motif {
    Motif {
        fx: 1.0 + (class % 4) as f64,
        fy: 1.0 + ((class / 4) % 4) as f64,
        ax: 22.0 + 8.0 * ((class / 16) % 3) as f64,
        ay: 18.0 + 8.0 * ((class / 48) % 3) as f64,
        // Spread phases over the circle without repeating for nearby classes.
        phase: TAU * (class as f64 * 0.618_034).fract(),
    }
}

/// Generate the manifest and one pose sequence per instance (in the same
/// order as the manifest). Instances carry no split labels.
pub fn generate(cfg: &SynthConfig) -> (Manifest, Vec<PoseSequence>) {
    assert!(cfg.glosses >= 1 && cfg.instances_per_gloss >= 1 && cfg.frames >= 2);
    assert!(cfg.signers >= 1 && cfg.fps > 0.0 && cfg.noise_sd >= 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sd.max(f64::MIN_POSITIVE)).unwrap();
    let hand = hand_template();

    let mut entries = Vec::with_capacity(cfg.glosses);
    let mut poses = Vec::with_capacity(cfg.glosses * cfg.instances_per_gloss);
    for class in 0..cfg.glosses {
        let motif = motif(class);
        let mut instances = Vec::with_capacity(cfg.instances_per_gloss);
        for i in 0..cfg.instances_per_gloss {
            let instance_id = format!("synth_c{class:03}_i{i:03}");
            let signer = (instances.len() + class * cfg.instances_per_gloss) % cfg.signers;
            // Small per-signer placement shift.
            let signer_dx = (signer % 5) as f64 * 2.0 - 4.0;
            let start_phase = rng.random_range(0.0..TAU);

            let mut frames = Vec::with_capacity(cfg.frames);
            for t in 0..cfg.frames {
                let mut frame = Vec::with_capacity(KEYPOINTS);
                let clock = t as f64 / cfg.frames as f64;
                let mut push = |x: f64, y: f64, rng: &mut ChaCha8Rng| {
                    let nx = if cfg.noise_sd > 0.0 {
                        noise.sample(rng)
                    } else {
                        0.0
                    };
                    let ny = if cfg.noise_sd > 0.0 {
                        noise.sample(rng)
                    } else {
                        0.0
                    };
                    frame.push([x + signer_dx + nx, y + ny, 1.0]);
                };
                for &(bx, by) in &BODY_TEMPLATE {
                    push(bx, by, &mut rng);
                }
                // Left hand: the same gentle sway for every class.
                let (lx, ly) = (
                    168.0 + 8.0 * (TAU * clock + start_phase).sin(),
                    178.0 + 6.0 * (TAU * clock + start_phase).cos(),
                );
                for &(hx, hy) in &hand {
                    push(lx + hx, ly + hy, &mut rng);
                }
                // Right hand: the class motif.
                let (wx, wy) = (
                    88.0 + motif.ax * (TAU * motif.fx * clock + motif.phase + start_phase).sin(),
                    175.0 + motif.ay * (TAU * motif.fy * clock + start_phase).cos(),
                );
                for &(hx, hy) in &hand {
                    push(wx + hx, wy + hy, &mut rng);
                }
                frames.push(frame);
            }

            poses.push(PoseSequence {
                video_id: instance_id.clone(),
                fps: cfg.fps,
                layout_version: LAYOUT_VERSION,
                frames,
            });
            instances.push(Instance {
                instance_id,
                signer_id: signer as u32,
                variation_id: 0,
                frame_start: 0,
                frame_end: (cfg.frames - 1) as u32,
                bbox: [0.0, 0.0, CANVAS, CANVAS],
                split: None,
                url: None,
            });
        }
        entries.push(GlossEntry {
            gloss: format!("gloss_{class:03}"),
            instances,
        });
    }
    (Manifest { entries }, poses)
}
