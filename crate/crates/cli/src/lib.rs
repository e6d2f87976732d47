//! Command-line support: acceptance checks and canned reproduction scenarios.

pub mod checks;
pub mod repro;
