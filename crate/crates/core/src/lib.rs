//! Open-world labeling pipeline for 3-D point clouds driven by per-point class
//! probabilities.
//!
//! The stages operate on precomputed logits: uncertainty scoring, seeded
//! unknown-region growing ([`hua`]), graph boundary detection ([`gbd`]),
//! pseudo ground truth ([`pseudo_labeling`]), incremental distillation targets
//! ([`distillation`]), loss kernels ([`losses`]) and open-set metrics
//! ([`metrics`]). Numeric code is generic over [`Real`]; the aliases below fix
//! the scalar to `f64`, which is what the pipeline and CLI use.

pub mod error;
pub mod cli;
pub mod config;
pub mod distillation;
pub mod gbd;
pub mod hua;
pub mod losses;
pub mod metrics;
pub mod pointset;
pub mod pseudo_labeling;
pub mod scalar;
pub mod spatial_index;
pub mod synth;
pub mod uncertainty;

pub use error::{Error, Location, Result};
pub use scalar::Real;

pub type Cloud = pointset::PointProbabilityCloud<f64>;
pub type Scores = uncertainty::ScoreField<f64>;
pub type Region = hua::RegionState<f64>;
pub type Index = spatial_index::SpatialIndex<f64>;
pub type Neighbors = spatial_index::NeighborList<f64>;
pub type Labels = pointset::LabelSet<f64>;
