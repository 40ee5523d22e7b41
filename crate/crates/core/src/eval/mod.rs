//! Statistics for comparing generated trajectories with ground truth:
//! time-averaged MSD and scaling exponents, velocity distributions, Pearson
//! correlation matrices, and the accuracy / generalization scores.

mod correlation;
mod msd;
mod score;
mod velocity;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::trajectory::Axis;

pub use correlation::{
    correlation_matrix, generalization_factor, mean_matrix, pearson, self_correlation, CorrelationMatrix,
};
pub use msd::{fit_exponent, last_decade_window, msd_batch, msd_single, short_time_window, MsdCurve};
pub use score::{accuracy_factor, score_model, AccuracyScore, AxisScore, ScoreCard};
pub use velocity::{density_histogram, velocity_distribution, GaussianFit, Histogram, VelocityDistribution};

/// A cylindrical component or the full 3-d motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvalAxis {
    #[serde(rename = "r")]
    R,
    #[serde(rename = "theta")]
    Theta,
    #[serde(rename = "z")]
    Z,
    #[serde(rename = "3d")]
    ThreeD,
}

impl EvalAxis {
    pub const ALL: [EvalAxis; 4] = [EvalAxis::R, EvalAxis::Theta, EvalAxis::Z, EvalAxis::ThreeD];

    pub fn component(self) -> Option<Axis> {
        match self {
            EvalAxis::R => Some(Axis::R),
            EvalAxis::Theta => Some(Axis::Theta),
            EvalAxis::Z => Some(Axis::Z),
            EvalAxis::ThreeD => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EvalAxis::R => "r",
            EvalAxis::Theta => "theta",
            EvalAxis::Z => "z",
            EvalAxis::ThreeD => "3d",
        }
    }
}

impl From<Axis> for EvalAxis {
    fn from(a: Axis) -> Self {
        match a {
            Axis::R => EvalAxis::R,
            Axis::Theta => EvalAxis::Theta,
            Axis::Z => EvalAxis::Z,
        }
    }
}

impl fmt::Display for EvalAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
