//! Multi-modal population-graph classification.
//!
//! Subjects are nodes; each carries an individual brain-network feature
//! vector per imaging modality. Edges combine feature similarity with
//! phenotype agreement, and two graph-convolution branches are trained
//! transductively and fused at the probability level.

pub mod brainnet;
pub mod checkpoint;
pub mod dataio;
pub mod error;
pub mod fusion;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod popgraph;
pub mod rng;
pub mod subject;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
