//! Motion planning and feedback control for a general 2-trailer vehicle
//! (car-like tractor, off-axle hitched dolly, on-axle semitrailer).
//!
//! The crate is organised around the pipeline used at run time:
//! offline primitive generation, lattice search, hybrid path following,
//! and state estimation from a rear-facing lidar.

pub mod error;
pub mod linalg;
pub mod vehicle_model;
pub mod primitive_gen;
pub mod lattice_planner;
pub mod path_following;
pub mod observer;
pub mod simulator;

pub use error::{Error, Result};
pub use vehicle_model::{
    AugmentedState, ControlProfile, Direction, PlanningControl, SampledPath, VehicleParams,
    VehicleState,
};
