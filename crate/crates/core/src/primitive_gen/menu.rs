//! Endpoint menu for the canonical start headings and the warm starts used to solve it.

use serde::{Deserialize, Serialize};

use super::cost::CostWeights;
use super::lattice::{heading_angle, LatticeState, HEADING_VECTORS, RESOLUTION};
use super::ocp::{shooting_cost, solve_ocp, OcpSettings, OcpSolution};
use crate::error::{Error, Result};
use crate::vehicle_model::{wrap_angle, AugmentedState, Direction, VehicleParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ManeuverKind {
    Straight { cells: i32 },
    HeadingChange,
    /// Lateral offset to the left of the start heading [m].
    Parallel { lateral: f64 },
}

/// One OCP of the menu, always solved in forward motion from the origin.
/// Backward entries are reversed after solving, so their forward solve ends at the
/// backward primitive's start steering angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MenuEntry {
    pub direction: Direction,
    pub start_heading: u8,
    pub start_alpha: u8,
    pub end_alpha: u8,
    pub dheading: i8,
    pub kind: ManeuverKind,
    /// Reference length for the warm start [m].
    pub length: f64,
}

impl MenuEntry {
    pub fn weights(&self) -> CostWeights {
        match self.direction {
            Direction::Forward => CostWeights::forward(),
            Direction::Backward => CostWeights::backward(),
        }
    }

    pub fn end_heading(&self) -> u8 {
        (self.start_heading as i32 + self.dheading as i32).rem_euclid(16) as u8
    }
}

/// Straight, heading-change and parallel maneuvers from headings 0, 1 and 2.
/// Backward maneuvers are longer than their forward counterparts. Headings 0 and 2 are
/// fixed by a reflection, so only the right-turning half of their menu is listed; symmetry
/// expansion supplies the rest.
pub fn default_menu() -> Vec<MenuEntry> {
    let mut out = Vec::new();
    for direction in [Direction::Forward, Direction::Backward] {
        let scale = if direction == Direction::Forward { 1.0 } else { 1.35 };
        for h0 in 0..3u8 {
            let half = h0 != 1;
            let mut push = |sa: u8, ea: u8, dh: i8, kind: ManeuverKind, len: f64| {
                let (start_alpha, end_alpha) = if direction == Direction::Forward { (sa, ea) } else { (ea, sa) };
                out.push(MenuEntry { direction, start_heading: h0, start_alpha, end_alpha, dheading: dh, kind, length: len * scale });
            };
            push(1, 1, 0, ManeuverKind::Straight { cells: 1 }, 0.0);
            push(1, 1, 0, ManeuverKind::Straight { cells: 2 }, 0.0);
            for dh in [-2i8, -1, 1, 2] {
                if !(half && dh > 0) {
                    push(1, 1, dh, ManeuverKind::HeadingChange, 16.0 + 6.0 * dh.unsigned_abs() as f64);
                }
            }
            for lat in [-2.0, -1.0, 1.0, 2.0] {
                if !(half && lat > 0.0) {
                    push(1, 1, 0, ManeuverKind::Parallel { lateral: lat }, 24.0 + 6.0 * f64::abs(lat));
                }
            }
            // Nonzero steering at the free end: biased towards turning the same way.
            for (a, sg) in [(0u8, -1i8), (2u8, 1i8)] {
                if half && sg > 0 {
                    continue;
                }
                push(a, 1, 0, ManeuverKind::HeadingChange, 22.0);
                push(a, 1, sg, ManeuverKind::HeadingChange, 22.0);
                push(a, 1, 2 * sg, ManeuverKind::HeadingChange, 28.0);
            }
        }
    }
    out
}

fn reference_controls(a0: f64, ap: f64, a1: f64, n: usize, s0: f64) -> Vec<f64> {
    let h = s0 / n as f64;
    let r = (n / 10).max(1);
    let mut u = vec![0.0; n];
    let ramp = |u: &mut [f64], from: usize, da: f64| {
        let c = da / (r as f64 * h).powi(2);
        for k in 0..r {
            u[from + k] = c;
            u[from + r + k] = -c;
        }
    };
    ramp(&mut u, 0, ap - a0);
    ramp(&mut u, 4 * r, a1 - ap);
    u
}

struct Reference {
    u: Vec<f64>,
    s0: f64,
    end: AugmentedState,
}

fn substeps_for(s0: f64, n: usize, max_step: f64) -> usize {
    ((s0 / (n as f64 * max_step)) - 1e-9).ceil().max(1.0) as usize
}

fn build_reference(e: &MenuEntry, start: &AugmentedState, p: &VehicleParams, settings: &OcpSettings) -> Result<Reference> {
    let n = settings.intervals;
    let w = e.weights();
    let (a0, a1) = (start.alpha, super::lattice::STEERING_SET[e.end_alpha as usize]);
    if let ManeuverKind::Straight { cells } = e.kind {
        let (vx, vy) = HEADING_VECTORS[e.start_heading as usize];
        let s0 = cells as f64 * RESOLUTION * ((vx * vx + vy * vy) as f64).sqrt();
        let u = vec![0.0; n];
        let (end, _) = shooting_cost(start, &u, s0, substeps_for(s0, n, settings.max_step), &w, p);
        return Ok(Reference { u, s0, end });
    }
    let s0 = e.length;
    let m = substeps_for(s0, n, settings.max_step);
    let th_target = heading_angle(e.end_heading());
    let eval = |ap: f64| {
        let u = reference_controls(a0, ap, a1, n, s0);
        let (end, _) = shooting_cost(start, &u, s0, m, &w, p);
        (u, end)
    };
    let zero_turn = a0 == 0.0 && a1 == 0.0 && e.dheading == 0;
    if zero_turn {
        let (u, end) = eval(0.0);
        return Ok(Reference { u, s0, end });
    }
    let lim = settings.tightening * p.alpha_max - 0.05;
    let err = |ap: f64| wrap_angle(eval(ap).1.state.theta3 - th_target);
    let (mut lo, mut hi) = (-lim, lim);
    let (mut flo, fhi) = (err(lo), err(hi));
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return Err(Error::Infeasible(format!("heading change not bracketed for {e:?}")));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let fm = err(mid);
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let (u, end) = eval(0.5 * (lo + hi));
    Ok(Reference { u, s0, end })
}

/// Lattice target for an entry given where its reference maneuver ended.
fn snapped_target(e: &MenuEntry, r: &Reference, push_cells: i32) -> LatticeState {
    let h1 = e.end_heading();
    let (vx, vy) = HEADING_VECTORS[h1 as usize];
    let (mut x, mut y) = (r.end.state.x3, r.end.state.y3);
    if let ManeuverKind::Parallel { lateral } = e.kind {
        let th = heading_angle(e.start_heading);
        x -= lateral * th.sin();
        y += lateral * th.cos();
    }
    let round = |v: f64| (v / RESOLUTION).round() as i32;
    if let ManeuverKind::Straight { cells } = e.kind {
        return LatticeState::new(cells * vx, cells * vy, h1, e.end_alpha);
    }
    LatticeState::new(round(x) + push_cells * vx, round(y) + push_cells * vy, h1, e.end_alpha)
}

fn interpolate_target(a: &AugmentedState, b: &AugmentedState, lambda: f64) -> AugmentedState {
    let (za, zb) = (a.to_array(), b.to_array());
    let mut out = [0.0; 7];
    for i in 0..7 {
        let d = if i == 2 { wrap_angle(zb[i] - za[i]) } else { zb[i] - za[i] };
        out[i] = za[i] + lambda * d;
    }
    AugmentedState::from_array(&out)
}

/// Continuation from the reference end state to the lattice target.
fn solve_with_homotopy(
    start: &AugmentedState,
    target: &AugmentedState,
    r: &Reference,
    w: &CostWeights,
    p: &VehicleParams,
    settings: &OcpSettings,
) -> Result<OcpSolution> {
    let mut last_err = Error::NotConverged { violation: f64::NAN };
    for steps in [1usize, 2, 4, 8] {
        let mut u = r.u.clone();
        let mut s0 = r.s0;
        let mut ok = true;
        for k in 1..=steps {
            let lam = k as f64 / steps as f64;
            let t = interpolate_target(&r.end, target, lam);
            match solve_ocp(start, &t, w, p, settings, &u, s0) {
                Ok(sol) => {
                    u = sol.u.clone();
                    s0 = sol.s_f;
                    if k == steps {
                        return Ok(sol);
                    }
                }
                Err(err) => {
                    last_err = err;
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            break;
        }
    }
    Err(last_err)
}

/// Solved forward-motion OCP for one menu entry.
#[derive(Clone, Debug)]
pub struct SolvedEntry {
    pub entry: MenuEntry,
    pub from: LatticeState,
    pub to: LatticeState,
    pub solution: OcpSolution,
}

/// Largest admissible cost per unit length of a primitive.
pub const MAX_COST_RATIO: f64 = 1.5;

pub fn solve_entry(e: &MenuEntry, p: &VehicleParams, settings: &OcpSettings) -> Result<SolvedEntry> {
    let from = LatticeState::new(0, 0, e.start_heading, e.start_alpha);
    let start = from.decode(p)?;
    let r = build_reference(e, &start, p, settings)?;
    let w = e.weights();
    let mut last = Error::Infeasible(format!("{e:?}"));
    for push in 0..3 {
        let to = snapped_target(e, &r, push);
        if to == from {
            return Err(Error::Infeasible("target coincides with start".into()));
        }
        let target = to.decode(p)?;
        match solve_with_homotopy(&start, &target, &r, &w, p, settings) {
            Ok(sol) if sol.cost / sol.s_f < MAX_COST_RATIO => return Ok(SolvedEntry { entry: *e, from, to, solution: sol }),
            Ok(sol) => last = Error::Infeasible(format!("cost ratio {:.3}", sol.cost / sol.s_f)),
            Err(err) => last = err,
        }
        if matches!(e.kind, ManeuverKind::Straight { .. }) {
            break;
        }
    }
    Err(last)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_profile_reaches_targets() {
        let p = VehicleParams::default();
        let start = LatticeState::new(0, 0, 0, 1).decode(&p).unwrap();
        let u = reference_controls(0.0, 0.3, 0.1, 30, 24.0);
        let (end, _) = shooting_cost(&start, &u, 24.0, 8, &CostWeights::forward(), &p);
        assert!((end.alpha - 0.1).abs() < 1e-12 && end.omega.abs() < 1e-12);
    }

    #[test]
    fn heading_change_entry_solves() {
        let p = VehicleParams::default();
        let e = MenuEntry {
            direction: Direction::Forward,
            start_heading: 0,
            start_alpha: 1,
            end_alpha: 1,
            dheading: 1,
            kind: ManeuverKind::HeadingChange,
            length: 22.0,
        };
        let s = solve_entry(&e, &p, &OcpSettings::default()).unwrap();
        assert_eq!(s.to.itheta, 1);
        assert!(s.solution.cost >= s.solution.s_f);
        let dist = ((s.to.ix * s.to.ix + s.to.iy * s.to.iy) as f64).sqrt();
        assert!(s.solution.cost >= dist);
    }
}
