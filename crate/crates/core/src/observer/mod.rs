//! State estimation: EKF over the kinematic model, rear lidar simulation and edge extraction.

mod ekf;
mod lidar;
mod ransac;

pub use ekf::{
    h_loc, h_loc_jacobian, h_ran, h_ran_jacobian, initial_state, predict_jacobians, predict_mean, EkfState, NoiseConfig,
    UpdateOutcome, GATE_LOC, GATE_RAN,
};
pub use lidar::{add_outliers, cast_ray, simulate_point_cloud, LidarConfig, Point, TrailerOutline};
pub use ransac::{classify, fit_lines, iterative_ransac, LineSegment, RansacConfig, RansacMeasurement};
