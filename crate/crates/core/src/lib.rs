//! Tracking nonlinear MPC with artificial equilibria and smooth point-cloud
//! obstacle avoidance.
//!
//! Obstacles are sampled point clouds, cropped every step by a virtual LiDAR
//! ([`cloud`]). Each sensed cloud is measured with a log-sum-exp smoothed
//! distance ([`smoothdist`]) whose discrete barrier violations are priced by a
//! softplus penalty ([`barrier`]). The penalized tracking problem
//! ([`nmpc`]) is transcribed by multiple shooting over a discretized plant
//! ([`dynamics`]) and solved with an augmented-Lagrangian method
//! ([`solver`]). [`sim`] closes the loop and [`scenario`] describes runs.

pub mod barrier;
pub mod cloud;
pub mod dynamics;
pub mod error;
pub mod gradcheck;
pub mod nmpc;
pub mod scenario;
pub mod sim;
pub mod smoothdist;
pub mod solver;

pub use error::{Error, Result};
