//! Image-conditioned probabilistic PCA contour prediction.
//!
//! An encoder network maps an image to a Gaussian over whitened PCA shape
//! weights plus a global shift. The resulting predictive distribution over
//! vertex positions is Gaussian with low-rank-plus-diagonal covariance, which
//! gives per-vertex confidence ellipses and plausible sampled contours.

pub mod autodiff;
pub mod data;
pub mod encoder;
pub mod error;
pub mod inference;
pub mod io_util;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod shape_model;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

/// Shape model in double precision (the precision used for training).
pub type ShapeModel = shape_model::PcaShapeModel<f64>;
pub type ShapeModelF32 = shape_model::PcaShapeModel<f32>;

/// Predictive distribution in double precision.
pub type Predictive = inference::PredictiveDistribution<f64>;
pub type EncoderOutputF64 = encoder::EncoderOutput<f64>;
