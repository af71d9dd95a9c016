//! Core algorithms for terrain-aware deployment of UAV spectrum sensors.
//!
//! The crate models terrain as a Gaussian mixture over a flat base plane,
//! answers line-of-sight queries against that surface with a BVH-pruned
//! bisection march, scores candidate fleet deployments by cooperative
//! detection probability and hover energy, and searches the deployment
//! space with a genetic stage followed by a per-UAV particle swarm stage.
//!
//! Everything here is `no_std` + `alloc`: no clocks, no IO, no threads.
//! File formats, the CLI, and the Monte Carlo harness live in the
//! companion `terradeploy` crate.

#![no_std]

extern crate alloc;

pub mod deploy;
pub mod energy;
pub mod geometry;
pub mod los;
pub mod math;
pub mod optimizer;
#[cfg(any(test, feature = "oracles"))]
pub mod oracles;
pub mod rng;
pub mod scenario;
pub mod sensing;
pub mod terrain;

pub use deploy::{fitness, repair, violations, Deployment, FitnessReport, Violations};
pub use geometry::Point3;
pub use los::{los_query, Aabb2, Bvh, LosOutcome, LosQuery};
pub use scenario::{Scenario, TerrainContext};
pub use sensing::{cooperative_sum, ebd_threshold, detection_probability, UavState};
pub use terrain::{GaussianBump, HeightGrid, TerrainModel};
