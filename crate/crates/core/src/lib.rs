//! Unsupervised segmentation of repetitive skeletal motion.
//!
//! Joint positions are filtered into kinematic parameters by a four-pass
//! unscented Kalman filter ([`ukf`]), the parameters carrying the dominant
//! repetition frequency are selected ([`frequency`]), zero-velocity instants
//! become candidate boundaries ([`detection`]) and an adaptive k-means
//! separates the repetition boundaries from other pauses ([`clustering`]).
//! [`pipeline::run_pipeline`] runs the whole chain.

pub mod clustering;
pub mod detection;
pub mod dump;
pub mod error;
pub mod evaluation;
pub mod frequency;
pub mod kinematics;
pub mod pipeline;
pub mod sequence;
pub mod synth;
pub mod ukf;

pub use error::{Error, Result};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutcome, SegmentationResult};
pub use sequence::SkeletonSequence;
