//! Convolutional variational autoencoder for Lagrangian particle trajectories
//! in cylindrical coordinates, together with the statistics used to judge
//! generated trajectories: time-averaged mean squared displacement, scaling
//! exponents, velocity distributions, Pearson correlation matrices and the
//! accuracy / generalization scores.
//!
//! The pipeline is
//!
//! 1. [`surrogate::generate`] (or [`trajectory::load_batch`]) produces a
//!    [`TrajectoryBatch`];
//! 2. [`trainer::train`] windows and normalizes it and fits a [`VaeParams`]
//!    with minibatch SGD on [`objective`];
//! 3. [`trainer::sample_model`] decodes unit-Gaussian codes into new
//!    trajectories;
//! 4. [`eval::score_model`] compares generated and ground-truth batches.

pub mod error;
pub mod eval;
pub mod nn;
pub mod objective;
pub mod rng;
pub mod surrogate;
pub mod trainer;
pub mod trajectory;

pub use error::{Error, Result};
pub use nn::{ArchSpec, BatchTensor, LatentCode, VaeParams};
pub use objective::{KlForm, ObjectiveValue};
pub use surrogate::SurrogateParams;
pub use trainer::{TrainConfig, TrainReport};
pub use trajectory::{Axis, NormStats, Trajectory, TrajectoryBatch};
