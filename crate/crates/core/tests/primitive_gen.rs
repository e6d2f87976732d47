mod common;

use std::collections::HashSet;

use g2t_core::primitive_gen::{
    path_cost, replay_composition, restore_feasibility, shooting_cost, solve_entry, CostWeights, LatticeState,
    ManeuverKind, MenuEntry, OcpSettings, Symmetry,
};
use g2t_core::vehicle_model::reverse_path;
use g2t_core::{Direction, VehicleParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn p() -> VehicleParams {
    VehicleParams::default()
}

#[test]
fn straight_cell_costs_its_length() {
    let e = MenuEntry {
        direction: Direction::Forward,
        start_heading: 0,
        start_alpha: 1,
        end_alpha: 1,
        dheading: 0,
        kind: ManeuverKind::Straight { cells: 1 },
        length: 0.0,
    };
    let s = solve_entry(&e, &p(), &OcpSettings::default()).unwrap();
    assert!((s.solution.s_f - 1.0).abs() < 1e-9);
    assert!((s.solution.cost - 1.0).abs() < 1e-9);
    assert!(s.solution.u.iter().all(|u| u.abs() < 1e-9));
}

#[test]
fn heading_change_is_locally_optimal() {
    let p = p();
    let settings = OcpSettings::default();
    // Left turn by one heading step; the menu lists the mirrored right turn.
    let e = MenuEntry {
        direction: Direction::Forward,
        start_heading: 0,
        start_alpha: 1,
        end_alpha: 1,
        dheading: 1,
        kind: ManeuverKind::HeadingChange,
        length: 22.0,
    };
    let s = solve_entry(&e, &p, &settings).unwrap();
    let sol = &s.solution;
    let dist = ((s.to.ix.pow(2) + s.to.iy.pow(2)) as f64).sqrt();
    assert!(sol.cost >= sol.s_f && sol.cost >= dist, "cost {} s_f {} dist {dist}", sol.cost, sol.s_f);

    let start = s.from.decode(&p).unwrap();
    let target = s.to.decode(&p).unwrap();
    let w = CostWeights::forward();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let u: Vec<f64> = sol.u.iter().map(|u| u + rng.gen_range(-1e-3..1e-3)).collect();
        let q = restore_feasibility(&start, &target, &w, &p, &settings, &u, sol.s_f, sol.substeps).unwrap();
        let (_, j) = shooting_cost(&start, &q.u, q.s_f, q.substeps, &w, &p);
        worst = worst.min(j - sol.cost);
    }
    assert!(worst > -1e-7, "a feasible neighbour is cheaper by {}", -worst);
}

#[test]
fn library_primitives_meet_their_invariants() {
    let p = p();
    let lib = common::library();
    assert!(lib.header.skipped.is_empty(), "{:?}", lib.header.skipped);
    for m in &lib.primitives {
        let first = m.path.states[0];
        let last = m.path.last();
        assert!(first.omega.abs() < 1e-9 && last.omega.abs() < 1e-9);
        assert!(m.cost >= m.length - 1e-9);
        assert!((m.length - m.path.length()).abs() < 1e-9);
        for z in &m.path.states {
            assert!(z.alpha.abs() <= 0.8 * p.alpha_max + 1e-9);
            assert!(z.state.beta2.abs() < 1.4 && z.state.beta3.abs() < 1.4);
        }
        let r = m.replay_residual(&p).unwrap();
        assert!(r < 1e-6, "primitive {} replay {r:e}", m.id);
    }
}

#[test]
fn endpoints_decode_to_lattice_states() {
    let p = p();
    for m in &common::library().primitives {
        let a = m.path.states[0].to_array();
        let b = m.from.decode(&p).unwrap().to_array();
        let c = m.path.last().to_array();
        let d = m.to.decode(&p).unwrap().to_array();
        for i in 0..7 {
            let wrap = |x: f64| if i == 2 { g2t_core::vehicle_model::wrap_angle(x) } else { x };
            assert!(wrap(a[i] - b[i]).abs() < 1e-6 && wrap(c[i] - d[i]).abs() < 1e-6, "primitive {} component {i}", m.id);
        }
    }
}

#[test]
fn backward_primitives_reverse_their_progenitors() {
    let p = p();
    let lib = common::library();
    let w = CostWeights::backward();
    let mut seen = 0;
    for m in lib.primitives.iter().filter(|m| m.direction == Direction::Backward) {
        let pr = m.progenitor.as_ref().expect("backward primitive without progenitor");
        let fwd = pr.path(&p).unwrap();
        let jf = path_cost(&fwd, &w);
        assert!((jf - m.cost).abs() < 1e-8, "primitive {}: {jf} vs {}", m.id, m.cost);
        let rev = reverse_path(&fwd);
        assert_eq!(rev.states.len(), m.path.states.len());
        for (a, b) in rev.states.iter().zip(&m.path.states) {
            let dx = a.state.x3 - pr.to.ix as f64 - b.state.x3;
            let dy = a.state.y3 - pr.to.iy as f64 - b.state.y3;
            assert!(dx.abs() < 1e-9 && dy.abs() < 1e-9 && (a.omega - b.omega).abs() < 1e-9);
        }
        seen += 1;
    }
    assert!(seen > 0);
}

#[test]
fn orbits_match_symmetry_counts() {
    let lib = common::library();
    let mut by_orbit: std::collections::HashMap<u32, Vec<&g2t_core::primitive_gen::MotionPrimitive>> = Default::default();
    for m in &lib.primitives {
        by_orbit.entry(m.orbit).or_default().push(m);
    }
    let removed: HashSet<_> = lib.reductions.iter().map(|r| (r.from, r.to, r.direction)).collect();
    for members in by_orbit.values() {
        let m = members[0];
        let images: HashSet<(LatticeState, LatticeState)> =
            Symmetry::all().map(|g| (g.map_lattice(&m.from), g.map_lattice(&m.to))).collect();
        let present = members.len() + images.iter().filter(|(f, t)| removed.contains(&(*f, *t, m.direction))).count();
        assert_eq!(present, images.len(), "orbit of primitive {}", m.id);
        for other in members {
            assert!(images.contains(&(other.from, other.to)));
        }
    }
}

#[test]
fn reductions_carry_valid_certificates() {
    let lib = common::library();
    assert!(!lib.reductions.is_empty());
    for r in &lib.reductions {
        let (end, cost) = replay_composition(lib, &r.composition).unwrap();
        assert_eq!(lib.get(r.composition[0]).from, r.from);
        assert_eq!(end, r.to);
        assert!((cost - r.composition_cost).abs() < 1e-9);
        assert!(cost <= common::ETA * r.cost * (1.0 + 1e-12), "{cost} vs {}", r.cost);
    }
}

#[test]
fn library_survives_a_json_round_trip() {
    let lib = common::library();
    let back = g2t_core::primitive_gen::Library::from_json(&lib.to_json().unwrap()).unwrap();
    assert_eq!(back.primitives, lib.primitives);
    assert_eq!(back.reductions, lib.reductions);
    assert_eq!(back.header, lib.header);
}

#[test]
fn rotations_and_mirrors_preserve_feasibility() {
    let p = p();
    let lib = common::library();
    let m = lib.primitives.iter().find(|m| m.direction == Direction::Backward && m.to.itheta != m.from.itheta).unwrap();
    let j = path_cost(&m.path, &CostWeights::backward());
    for g in Symmetry::all() {
        let t = m.transformed(g);
        assert!(t.replay_residual(&p).unwrap() < 1e-6);
        assert!((path_cost(&t.path, &CostWeights::backward()) - j).abs() < 1e-9);
    }
}
