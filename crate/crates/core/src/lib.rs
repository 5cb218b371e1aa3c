//! Pose-based isolated sign language recognition.
//!
//! Two classifier families over 2D keypoint trajectories (a temporal graph
//! convolutional network and a stacked GRU), an f64 reverse-mode autodiff
//! engine they are built on, and the dataset tooling around them: pose and
//! manifest schemas, normalization, subset/split construction, signer
//! clustering, a synthetic corpus generator, and a training/evaluation loop.

pub mod curation;
pub mod data;
pub mod gradcheck;
pub mod models;
pub mod nn;
pub mod tensor;
pub mod train;
