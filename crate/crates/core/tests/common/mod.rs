#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use g2t_core::primitive_gen::{load_or_generate, Library, OcpSettings};
use g2t_core::VehicleParams;

pub const ETA: f64 = 1.2;

/// Default library, generated once per build directory and shared by the test binaries.
pub fn library() -> &'static Library {
    static LIB: OnceLock<Library> = OnceLock::new();
    LIB.get_or_init(|| {
        let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("g2t-default-library.json");
        let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
        load_or_generate(&path, &VehicleParams::default(), &OcpSettings::default(), ETA, jobs).expect("library generation")
    })
}

pub const HLUT_CUTOFF: f64 = g2t_core::lattice_planner::DEFAULT_CUTOFF;

/// Heuristic table for [`library`], cached like the library.
pub fn hlut() -> &'static g2t_core::lattice_planner::Hlut {
    static HLUT: OnceLock<g2t_core::lattice_planner::Hlut> = OnceLock::new();
    HLUT.get_or_init(|| {
        let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("g2t-default-hlut.bin");
        g2t_core::lattice_planner::load_or_build(&path, library(), HLUT_CUTOFF).expect("heuristic table")
    })
}
