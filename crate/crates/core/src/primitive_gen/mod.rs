//! Offline motion-primitive generation for the state lattice.

mod cost;
mod lattice;
mod ocp;

pub use cost::{path_cost, quantize_cost, stage_cost_integrand, CostWeights};
pub use lattice::{canonical_heading, heading_angle, snap_to_lattice, LatticeState, Symmetry, HEADING_VECTORS, RESOLUTION, STEERING_SET};
pub use ocp::{restore_feasibility, shooting_cost, solve_ocp, OcpSettings, OcpSolution};
mod menu;
pub use menu::{default_menu, solve_entry, ManeuverKind, MenuEntry, SolvedEntry, MAX_COST_RATIO};
mod library;
pub use library::{
    cheapest_composition, expand_by_symmetry, generate_from_menu, generate_library, load_or_generate, make_backward_primitive,
    params_hash, primitive_from_solution, reduce_set, replay_composition, seed_primitive, solve_menu, validate_primitive, Library,
    LibraryHeader, MotionPrimitive, Progenitor, Reduction, SuccessorIndex, ENDPOINT_TOL, LIBRARY_VERSION,
};
