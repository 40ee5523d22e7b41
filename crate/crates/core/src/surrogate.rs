//! Synthetic ground-truth trajectories.
//!
//! Radius and height are mean-reverting walks driven by AR(1)-smoothed
//! increments:
//!
//! ```text
//! u(t) = p * u(t-1) + sigma * xi(t)
//! s(t) = s(t-1) + relax * (center - s(t-1)) + u(t)
//! ```
//!
//! so motion is ballistic over a few frames (persistent increments) and
//! saturates once the restoring pull dominates. The radius is reflected
//! through zero. The azimuth is a persistent random walk,
//! `w(t) = q * w(t-1) + sigma_theta * xi(t)`, `theta(t) = theta(t-1) + drift + w(t)`,
//! which turns diffusive beyond the persistence time. Each trajectory runs a
//! burn-in from the centers before recording so the recorded part is
//! stationary.
//!
//! Scales are nominal: r around 5 mm with a few tenths of a millimetre of
//! spread, z around 0, and azimuthal excursions well below one radian.
//! All particles start near theta = 0 by default (`theta_spread`), as in a
//! single camera field of view; a wide spread would make the batch-wide
//! normalization of theta dominated by the starting angles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, gaussian, seeded};
use crate::trajectory::{Trajectory, TrajectoryBatch, DEFAULT_T0};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateParams {
    /// Number of trajectories.
    pub m: usize,
    /// Steps per trajectory.
    pub n: usize,
    /// Seconds per step.
    pub t0: f64,
    /// mm
    pub r_center: f64,
    /// Mean-reversion rate of r, per step, in (0, 1).
    pub r_relax: f64,
    /// mm
    pub z_center: f64,
    pub z_relax: f64,
    /// Increment noise, mm per step.
    pub sigma_r: f64,
    pub sigma_z: f64,
    /// AR(1) coefficient of the r and z increments, in [0, 1).
    pub increment_persistence: f64,
    /// Constant azimuthal drift, rad per step.
    pub theta_drift: f64,
    /// AR(1) coefficient of the azimuthal increments, in [0, 1).
    pub theta_persistence: f64,
    /// rad per step
    pub sigma_theta: f64,
    /// Half-width of the uniform initial azimuth, rad, in [0, pi].
    pub theta_spread: f64,
    pub seed: u64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        default_params()
    }
}

/// 15 trajectories of 1100 frames at 4.76 ms.
pub fn default_params() -> SurrogateParams {
    SurrogateParams {
        m: 15,
        n: 1100,
        t0: DEFAULT_T0,
        r_center: 5.0,
        r_relax: 0.1,
        z_center: 0.0,
        z_relax: 0.1,
        sigma_r: 0.004,
        sigma_z: 0.004,
        increment_persistence: 0.9,
        theta_drift: 0.0,
        theta_persistence: 0.9,
        sigma_theta: 0.0003,
        theta_spread: 0.0,
        seed: 20181211,
    }
}

impl SurrogateParams {
    pub fn validate(&self) -> Result<()> {
        let unit_open = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        let unit_half = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must lie in [0, 1), got {v}")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be positive, got {v}")))
            }
        };
        unit_open("r_relax", self.r_relax)?;
        unit_open("z_relax", self.z_relax)?;
        unit_half("increment_persistence", self.increment_persistence)?;
        unit_half("theta_persistence", self.theta_persistence)?;
        positive("sigma_r", self.sigma_r)?;
        positive("sigma_z", self.sigma_z)?;
        positive("sigma_theta", self.sigma_theta)?;
        positive("t0", self.t0)?;
        if !(0.0..=std::f64::consts::PI).contains(&self.theta_spread) {
            return Err(Error::Parameter(format!("theta_spread must lie in [0, pi], got {}", self.theta_spread)));
        }
        if self.m < 1 {
            return Err(Error::Parameter("m must be >= 1".into()));
        }
        if self.n < 2 {
            return Err(Error::Parameter(format!("n must be >= 2, got {}", self.n)));
        }
        for (name, v) in [("r_center", self.r_center), ("z_center", self.z_center), ("theta_drift", self.theta_drift)] {
            if !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    fn burn_in(&self) -> usize {
        let relax = self.r_relax.min(self.z_relax);
        let pers = self.increment_persistence.max(self.theta_persistence);
        (10.0 / relax).ceil() as usize + (10.0 / (1.0 - pers)).ceil() as usize
    }
}

struct Reverting {
    pos: f64,
    inc: f64,
    center: f64,
    relax: f64,
    persistence: f64,
    sigma: f64,
}

impl Reverting {
    fn step<R: Rng>(&mut self, rng: &mut R) -> f64 {
        self.inc = self.persistence * self.inc + self.sigma * gaussian(rng);
        self.pos += self.relax * (self.center - self.pos) + self.inc;
        self.pos
    }
}

/// Draws a batch; trajectory `i` uses the sub-seed `derive_seed(seed, i)`.
pub fn generate(params: &SurrogateParams) -> Result<TrajectoryBatch> {
    params.validate()?;
    let trajs =
        (0..params.m).map(|i| generate_one(params, derive_seed(params.seed, i as u64))).collect::<Result<Vec<_>>>()?;
    TrajectoryBatch::new(trajs)
}

fn generate_one(p: &SurrogateParams, seed: u64) -> Result<Trajectory> {
    let mut rng = seeded(seed);
    let mut r = Reverting {
        pos: p.r_center,
        inc: 0.0,
        center: p.r_center,
        relax: p.r_relax,
        persistence: p.increment_persistence,
        sigma: p.sigma_r,
    };
    let mut z = Reverting {
        pos: p.z_center,
        inc: 0.0,
        center: p.z_center,
        relax: p.z_relax,
        persistence: p.increment_persistence,
        sigma: p.sigma_z,
    };
    let mut theta = p.theta_spread * (2.0 * rng.random::<f64>() - 1.0);
    let mut omega = 0.0;

    let total = p.burn_in() + p.n;
    let (mut rs, mut ths, mut zs) = (Vec::with_capacity(p.n), Vec::with_capacity(p.n), Vec::with_capacity(p.n));
    for step in 0..total {
        let rv = r.step(&mut rng).abs();
        r.pos = rv;
        let zv = z.step(&mut rng);
        omega = p.theta_persistence * omega + p.sigma_theta * gaussian(&mut rng);
        theta += p.theta_drift + omega;
        if step >= total - p.n {
            rs.push(rv);
            ths.push(theta);
            zs.push(zv);
        }
    }
    Trajectory::new(rs, ths, zs, p.t0)
        .map_err(|e| Error::Parameter(format!("surrogate produced invalid trajectory: {e}")))
}
