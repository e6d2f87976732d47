//! Vehicle outline as two rectangles, each covered by three discs.

use serde::{Deserialize, Serialize};

use crate::vehicle_model::{VehicleParams, VehicleState};

/// Body dimensions not given by [`VehicleParams`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootprintConfig {
    /// Tractor body behind the rear axle [m]; must cover the hitch.
    pub tractor_rear: f64,
    /// Tractor body ahead of the front axle [m].
    pub tractor_front: f64,
    pub tractor_width: f64,
    /// Semitrailer body behind its axle [m].
    pub trailer_rear: f64,
    /// Added to every disc radius to cover motion between path samples [m].
    pub margin: f64,
}

impl Default for FootprintConfig {
    fn default() -> Self {
        Self { tractor_rear: 2.0, tractor_front: 1.4, tractor_width: 2.5, trailer_rear: 3.0, margin: 0.1 }
    }
}

/// Rectangle along a body axis: `back` and `front` are signed distances from the
/// reference point along the heading.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyBox {
    pub back: f64,
    pub front: f64,
    pub width: f64,
}

impl BodyBox {
    fn disc_offsets(&self) -> [f64; 3] {
        let l = (self.front - self.back) / 6.0;
        [self.back + l, self.back + 3.0 * l, self.back + 5.0 * l]
    }

    fn disc_radius(&self) -> f64 {
        ((self.front - self.back) / 6.0).hypot(0.5 * self.width)
    }

    /// Corners counter-clockwise, for a reference point at `(x, y)` and heading `th`.
    pub fn corners(&self, x: f64, y: f64, th: f64) -> [(f64, f64); 4] {
        let (c, s) = (th.cos(), th.sin());
        let w = 0.5 * self.width;
        let pt = |a: f64, b: f64| (x + a * c - b * s, y + a * s + b * c);
        [pt(self.back, -w), pt(self.front, -w), pt(self.front, w), pt(self.back, w)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footprint {
    pub tractor: BodyBox,
    pub trailer: BodyBox,
    pub tractor_radius: f64,
    pub trailer_radius: f64,
}

/// Tractor rear-axle pose of a vehicle state.
pub fn tractor_pose(x: &VehicleState, p: &VehicleParams) -> (f64, f64, f64) {
    let th2 = x.theta3 + x.beta3;
    let th1 = th2 + x.beta2;
    (
        x.x3 + p.l3 * x.theta3.cos() + p.l2 * th2.cos() + p.m1 * th1.cos(),
        x.y3 + p.l3 * x.theta3.sin() + p.l2 * th2.sin() + p.m1 * th1.sin(),
        th1,
    )
}

impl Footprint {
    pub fn new(p: &VehicleParams, cfg: &FootprintConfig) -> Self {
        let tractor = BodyBox { back: -cfg.tractor_rear, front: p.l1 + cfg.tractor_front, width: cfg.tractor_width };
        let trailer = BodyBox { back: -cfg.trailer_rear, front: p.l3 + p.la, width: p.b };
        Self {
            tractor,
            trailer,
            tractor_radius: tractor.disc_radius() + cfg.margin,
            trailer_radius: trailer.disc_radius() + cfg.margin,
        }
    }

    /// Radius the grid is inflated by.
    pub fn inflation_radius(&self) -> f64 {
        self.tractor_radius.max(self.trailer_radius)
    }

    /// Disc centres: three on the semitrailer, then three on the tractor.
    pub fn disc_centres(&self, x: &VehicleState, p: &VehicleParams) -> [(f64, f64); 6] {
        let mut out = [(0.0, 0.0); 6];
        let (c3, s3) = (x.theta3.cos(), x.theta3.sin());
        for (k, a) in self.trailer.disc_offsets().into_iter().enumerate() {
            out[k] = (x.x3 + a * c3, x.y3 + a * s3);
        }
        let (x1, y1, th1) = tractor_pose(x, p);
        let (c1, s1) = (th1.cos(), th1.sin());
        for (k, a) in self.tractor.disc_offsets().into_iter().enumerate() {
            out[3 + k] = (x1 + a * c1, y1 + a * s1);
        }
        out
    }

    /// Semitrailer and tractor rectangles.
    pub fn polygons(&self, x: &VehicleState, p: &VehicleParams) -> [[(f64, f64); 4]; 2] {
        let (x1, y1, th1) = tractor_pose(x, p);
        [self.trailer.corners(x.x3, x.y3, x.theta3), self.tractor.corners(x1, y1, th1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discs_cover_their_rectangles() {
        let p = VehicleParams::default();
        let f = Footprint::new(&p, &FootprintConfig { margin: 0.0, ..Default::default() });
        let x = VehicleState::new(1.0, -2.0, 0.7, 0.2, -0.3);
        let discs = f.disc_centres(&x, &p);
        let polys = f.polygons(&x, &p);
        for (b, poly) in polys.iter().enumerate() {
            let r = if b == 0 { f.trailer_radius } else { f.tractor_radius };
            let ds = &discs[3 * b..3 * b + 3];
            for i in 0..=50 {
                for j in 0..=50 {
                    let (u, v) = (i as f64 / 50.0, j as f64 / 50.0);
                    let lerp = |a: (f64, f64), c: (f64, f64), t: f64| (a.0 + t * (c.0 - a.0), a.1 + t * (c.1 - a.1));
                    let q = lerp(lerp(poly[0], poly[1], u), lerp(poly[3], poly[2], u), v);
                    assert!(ds.iter().any(|d| (q.0 - d.0).hypot(q.1 - d.1) <= r + 1e-9));
                }
            }
        }
        assert!((f.trailer_radius - 2.45).abs() < 0.01);
    }
}
