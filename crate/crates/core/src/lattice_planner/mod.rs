//! Lattice search over the primitive library on an occupancy grid.

pub mod footprint;
pub mod grid;
pub mod hlut;
pub mod search;
pub mod stitch;

pub use footprint::{tractor_pose, BodyBox, Footprint, FootprintConfig};
pub use grid::{OccupancyGrid, PgmMeta};
pub use hlut::{build_hlut, free_space_costs, heuristic, library_fingerprint, load_or_build, Hlut, DEFAULT_CUTOFF};
pub use search::{collision_check, PlanOutput, PlanResult, PlanSettings, Planner};
pub use stitch::{stitch, PlanStep};
pub use crate::primitive_gen::snap_to_lattice;
