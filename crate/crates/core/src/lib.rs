//! Differentiable edge-preserving domain transform filtering.

pub mod backward;
pub mod cli;
pub mod edge_model;
pub mod error;
pub mod forward;
pub mod gradcheck;
pub mod gru;
pub mod io;
pub mod metrics;
pub mod suite;
pub mod types;

pub use backward::{backward_1d_pass, backward_2d, finite_difference_oracle, DtGradients};
pub use error::{DtError, Result};
pub use forward::{filter_1d_pass, filter_2d, filter_2d_threaded, sigma_schedule, Axis, Direction, DtTape};
pub use types::{assert_shapes_compatible, DensityMap, DtParams, EdgeMap, LabelMap, ScoreMap, WeightMap};
