use nalgebra::Vector2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::vehicle_model::{VehicleParams, VehicleState};

pub type Point = Vector2<f64>;

/// Rear-facing planar scanner mounted on the tractor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarConfig {
    /// Mount position behind the tractor rear axle [m].
    pub offset: f64,
    pub fov_deg: f64,
    pub resolution_deg: f64,
    pub max_range: f64,
    /// Semitrailer body length behind its axle [m].
    pub rear_overhang: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self { offset: 0.5, fov_deg: 120.0, resolution_deg: 0.25, max_range: 30.0, rear_overhang: 3.0 }
    }
}

impl LidarConfig {
    pub fn origin(&self) -> Point {
        Point::new(-self.offset, 0.0)
    }

    pub fn ray_angles(&self) -> Vec<f64> {
        let n = (self.fov_deg / self.resolution_deg).round() as usize;
        let start = std::f64::consts::PI - 0.5 * self.fov_deg.to_radians();
        (0..=n).map(|i| start + (i as f64 * self.resolution_deg).to_radians()).collect()
    }
}

/// Semitrailer body outline in the tractor frame (x forward, origin at the rear axle).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrailerOutline {
    pub front_mid: Point,
    /// Unit axis pointing from the semitrailer towards the tractor.
    pub axis: Point,
    pub corners: [Point; 4],
}

impl TrailerOutline {
    pub fn new(beta3: f64, beta2: f64, p: &VehicleParams, cfg: &LidarConfig) -> Self {
        let phi = beta2 + beta3;
        let king = Point::new(-p.m1 - p.l2 * beta2.cos(), p.l2 * beta2.sin());
        let axis = Point::new(phi.cos(), -phi.sin());
        let left = Point::new(-axis.y, axis.x);
        let front_mid = king + axis * p.la;
        let rear_mid = king - axis * (p.l3 + cfg.rear_overhang);
        let hb = 0.5 * p.b;
        Self {
            front_mid,
            axis,
            corners: [front_mid + left * hb, front_mid - left * hb, rear_mid - left * hb, rear_mid + left * hb],
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        (0..4).map(move |i| (self.corners[i], self.corners[(i + 1) % 4]))
    }

    /// Distance from `q` to the outline boundary.
    pub fn boundary_distance(&self, q: &Point) -> f64 {
        self.edges()
            .map(|(a, b)| {
                let e = b - a;
                let t = ((q - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
                (q - (a + e * t)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn cross(a: &Point, b: &Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Range along `dir` from `o` to the first hit on the outline, if any.
pub fn cast_ray(o: &Point, dir: &Point, outline: &TrailerOutline) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (a, b) in outline.edges() {
        let e = b - a;
        let den = cross(dir, &e);
        if den.abs() < 1e-15 {
            continue;
        }
        let w = a - o;
        let t = cross(&w, &e) / den;
        let s = cross(&w, dir) / den;
        if t > 0.0 && (0.0..=1.0).contains(&s) && best.map_or(true, |bt| t < bt) {
            best = Some(t);
        }
    }
    best
}

/// Ray-cast the semitrailer body; radial noise with standard deviation `sigma`.
pub fn simulate_point_cloud<R: Rng>(
    state: &VehicleState,
    p: &VehicleParams,
    cfg: &LidarConfig,
    sigma: f64,
    rng: &mut R,
) -> Vec<Point> {
    let outline = TrailerOutline::new(state.beta3, state.beta2, p, cfg);
    let o = cfg.origin();
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    cfg.ray_angles()
        .into_iter()
        .filter_map(|ang| {
            let d = Point::new(ang.cos(), ang.sin());
            let r = cast_ray(&o, &d, &outline)?;
            if r > cfg.max_range {
                return None;
            }
            let r = if sigma > 0.0 { r + noise.sample(rng) } else { r };
            Some(o + d * r)
        })
        .collect()
}

/// Append uniformly scattered returns so that they make up `fraction` of the result.
pub fn add_outliers<R: Rng>(cloud: &mut Vec<Point>, fraction: f64, cfg: &LidarConfig, max_range: f64, rng: &mut R) {
    if !(0.0..1.0).contains(&fraction) || cloud.is_empty() {
        return;
    }
    let n = (cloud.len() as f64 * fraction / (1.0 - fraction)).round() as usize;
    let half = 0.5 * cfg.fov_deg.to_radians();
    let o = cfg.origin();
    for _ in 0..n {
        let a = std::f64::consts::PI + rng.gen_range(-half..half);
        let r = rng.gen_range(0.5..max_range);
        cloud.push(o + Point::new(a.cos(), a.sin()) * r);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn straight_front_is_perpendicular_line() {
        let p = VehicleParams::default();
        let cfg = LidarConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let cloud = simulate_point_cloud(&VehicleState::default(), &p, &cfg, 0.0, &mut rng);
        assert!(cloud.len() > 50);
        let x0 = -p.m1 - p.l2 + p.la;
        for q in &cloud {
            assert!((q.x - x0).abs() < 1e-12);
            assert!(q.y.abs() <= 0.5 * p.b + 1e-12);
        }
    }

    #[test]
    fn noise_free_points_lie_on_outline() {
        let p = VehicleParams::default();
        let cfg = LidarConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let s = VehicleState::new(0.0, 0.0, 0.0, rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6));
            let outline = TrailerOutline::new(s.beta3, s.beta2, &p, &cfg);
            for q in simulate_point_cloud(&s, &p, &cfg, 0.0, &mut rng) {
                assert!(outline.boundary_distance(&q) < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_range_gives_empty_cloud() {
        let p = VehicleParams::default();
        let cfg = LidarConfig { max_range: 2.0, ..Default::default() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        assert!(simulate_point_cloud(&VehicleState::default(), &p, &cfg, 0.0, &mut rng).is_empty());
    }
}
