use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::vehicle_model::{equilibrium_state, wrap_angle, AugmentedState, SampledPath, VehicleParams};

/// Grid resolution of the lattice [m].
pub const RESOLUTION: f64 = 1.0;

/// Heading directions as integer grid vectors, counter-clockwise from the x axis.
pub const HEADING_VECTORS: [(i32, i32); 16] = [
    (1, 0),
    (2, 1),
    (1, 1),
    (1, 2),
    (0, 1),
    (-1, 2),
    (-1, 1),
    (-2, 1),
    (-1, 0),
    (-2, -1),
    (-1, -1),
    (-1, -2),
    (0, -1),
    (1, -2),
    (1, -1),
    (2, -1),
];

/// Discrete steering angles of lattice states [rad].
pub const STEERING_SET: [f64; 3] = [-0.1, 0.0, 0.1];

pub fn heading_angle(itheta: u8) -> f64 {
    let (x, y) = HEADING_VECTORS[itheta as usize % 16];
    (y as f64).atan2(x as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticeState {
    pub ix: i32,
    pub iy: i32,
    pub itheta: u8,
    pub ialpha: u8,
}

impl LatticeState {
    pub fn new(ix: i32, iy: i32, itheta: u8, ialpha: u8) -> Self {
        Self { ix, iy, itheta, ialpha }
    }

    pub fn alpha(&self) -> f64 {
        STEERING_SET[self.ialpha as usize]
    }

    pub fn theta(&self) -> f64 {
        heading_angle(self.itheta)
    }

    /// Continuous state: equilibrium joint angles for the discrete steering angle, zero steering rate.
    pub fn decode(&self, p: &VehicleParams) -> Result<AugmentedState> {
        equilibrium_state(self.ix as f64 * RESOLUTION, self.iy as f64 * RESOLUTION, self.theta(), self.alpha(), p)
    }

    /// Same pose class with the position moved to the origin.
    pub fn at_origin(&self) -> Self {
        Self { ix: 0, iy: 0, ..*self }
    }

    pub fn translated(&self, dx: i32, dy: i32) -> Self {
        Self { ix: self.ix + dx, iy: self.iy + dy, ..*self }
    }
}

fn round_half_down(x: f64) -> i32 {
    (x - 0.5).ceil() as i32
}

/// Nearest lattice state. Ties go to the smaller index.
pub fn snap_to_lattice(z: &AugmentedState) -> LatticeState {
    let ix = round_half_down(z.state.x3 / RESOLUTION);
    let iy = round_half_down(z.state.y3 / RESOLUTION);
    let mut itheta = 0u8;
    let mut best = f64::INFINITY;
    for k in 0..16u8 {
        let d = wrap_angle(z.state.theta3 - heading_angle(k)).abs();
        if d < best - 1e-12 {
            best = d;
            itheta = k;
        }
    }
    let mut ialpha = 0u8;
    let mut best = f64::INFINITY;
    for (i, a) in STEERING_SET.iter().enumerate() {
        let d = (z.alpha - a).abs();
        if d < best - 1e-12 {
            best = d;
            ialpha = i as u8;
        }
    }
    LatticeState { ix, iy, itheta, ialpha }
}

/// Element of the eight-element symmetry group of the grid: optional mirror
/// about the x axis followed by `rot` quarter turns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Symmetry {
    pub rot: u8,
    pub mirror: bool,
}

impl Symmetry {
    pub const IDENTITY: Symmetry = Symmetry { rot: 0, mirror: false };

    pub fn all() -> impl Iterator<Item = Symmetry> {
        (0..8u8).map(|i| Symmetry { rot: i % 4, mirror: i >= 4 })
    }

    pub fn compose(self, then: Symmetry) -> Symmetry {
        // then ∘ self; a mirror conjugates a rotation into its inverse.
        let r1 = if then.mirror { (4 - self.rot) % 4 } else { self.rot };
        Symmetry { rot: (r1 + then.rot) % 4, mirror: self.mirror ^ then.mirror }
    }

    pub fn inverse(self) -> Symmetry {
        if self.mirror {
            self
        } else {
            Symmetry { rot: (4 - self.rot) % 4, mirror: false }
        }
    }

    pub fn map_cell(&self, x: i32, y: i32) -> (i32, i32) {
        let (mut x, mut y) = (x, if self.mirror { -y } else { y });
        for _ in 0..self.rot {
            (x, y) = (-y, x);
        }
        (x, y)
    }

    pub fn map_point(&self, x: f64, y: f64) -> (f64, f64) {
        let (mut x, mut y) = (x, if self.mirror { -y } else { y });
        for _ in 0..self.rot {
            (x, y) = (-y, x);
        }
        (x, y)
    }

    pub fn map_heading(&self, k: u8) -> u8 {
        let m = if self.mirror { (16 - k % 16) % 16 } else { k % 16 };
        (m + 4 * self.rot) % 16
    }

    pub fn map_alpha_index(&self, i: u8) -> u8 {
        if self.mirror {
            2 - i
        } else {
            i
        }
    }

    pub fn map_lattice(&self, s: &LatticeState) -> LatticeState {
        let (ix, iy) = self.map_cell(s.ix, s.iy);
        LatticeState { ix, iy, itheta: self.map_heading(s.itheta), ialpha: self.map_alpha_index(s.ialpha) }
    }

    pub fn sign(&self) -> f64 {
        if self.mirror {
            -1.0
        } else {
            1.0
        }
    }

    pub fn map_state(&self, z: &AugmentedState) -> AugmentedState {
        let sg = self.sign();
        let (x, y) = self.map_point(z.state.x3, z.state.y3);
        let mut out = *z;
        out.state.x3 = x;
        out.state.y3 = y;
        // Left unwrapped so mapped paths stay continuous in heading.
        out.state.theta3 = sg * z.state.theta3 + self.rot as f64 * std::f64::consts::FRAC_PI_2;
        out.state.beta3 = sg * z.state.beta3;
        out.state.beta2 = sg * z.state.beta2;
        out.alpha = sg * z.alpha;
        out.omega = sg * z.omega;
        out
    }

    pub fn map_path(&self, path: &SampledPath) -> SampledPath {
        let sg = self.sign();
        SampledPath {
            s: path.s.clone(),
            states: path.states.iter().map(|z| self.map_state(z)).collect(),
            controls: path.controls.iter().map(|c| crate::vehicle_model::PlanningControl { v: c.v, u_omega: sg * c.u_omega }).collect(),
        }
    }
}

/// Symmetry taking `itheta` into the canonical headings {0, 1, 2}, and the canonical heading.
pub fn canonical_heading(itheta: u8) -> (Symmetry, u8) {
    for g in Symmetry::all() {
        let k = g.map_heading(itheta);
        if k <= 2 {
            return (g, k);
        }
    }
    unreachable!("every heading orbit meets {{0, 1, 2}}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle_model::VehicleState;

    #[test]
    fn heading_maps_agree_with_vectors() {
        for g in Symmetry::all() {
            for k in 0..16u8 {
                let (x, y) = HEADING_VECTORS[k as usize];
                let (mx, my) = g.map_cell(x, y);
                assert_eq!(HEADING_VECTORS[g.map_heading(k) as usize], (mx, my), "{g:?} {k}");
                let a = wrap_angle(g.sign() * heading_angle(k) + g.rot as f64 * std::f64::consts::FRAC_PI_2);
                assert!(wrap_angle(a - heading_angle(g.map_heading(k))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn group_laws() {
        let s = LatticeState::new(3, -2, 5, 0);
        for a in Symmetry::all() {
            assert_eq!(a.inverse().map_lattice(&a.map_lattice(&s)), s);
            for b in Symmetry::all() {
                assert_eq!(a.compose(b).map_lattice(&s), b.map_lattice(&a.map_lattice(&s)), "{a:?} {b:?}");
            }
        }
        let r = Symmetry { rot: 1, mirror: false };
        assert_eq!(r.compose(r).compose(r).compose(r), Symmetry::IDENTITY);
    }

    #[test]
    fn canonical_headings_cover_orbits() {
        for k in 0..16u8 {
            let (g, c) = canonical_heading(k);
            assert!(c <= 2);
            assert_eq!(g.map_heading(k), c);
        }
    }

    #[test]
    fn snapping() {
        let z = AugmentedState::new(VehicleState::new(0.4, 0.6, 0.01, 0.0, 0.0), 0.04, 0.0);
        assert_eq!(snap_to_lattice(&z), LatticeState::new(0, 1, 0, 1));
        let p = VehicleParams::default();
        let s = LatticeState::new(-4, 7, 9, 2);
        assert_eq!(snap_to_lattice(&s.decode(&p).unwrap()), s);
        let half = AugmentedState::new(VehicleState::new(0.5, -0.5, 0.0, 0.0, 0.0), 0.05, 0.0);
        let h = snap_to_lattice(&half);
        assert_eq!((h.ix, h.iy, h.ialpha), (0, -1, 1));
    }
}
