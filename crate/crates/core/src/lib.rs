//! Push detection over streams of human keypoints.
//!
//! Frames of 17-point skeletons are tracked into identities, turned into
//! joint-angle features, paired by proximity and classified by a
//! deterministic random forest. The crate also carries the evaluation
//! harness and a synthetic two-actor clip generator.

pub mod error;
pub mod eval;
pub mod forest;
pub mod interaction;
pub mod kinematics;
pub mod pipeline;
pub mod rng;
pub mod skeleton;
pub mod stream;
pub mod synth;
pub mod table;
pub mod tracker;
pub mod wire;

pub use error::{ClipError, SchemaError, SequenceError};
pub use skeleton::{BBox, ClipRecord, FrameDetections, Keypoint, Label, Point, Skeleton};
