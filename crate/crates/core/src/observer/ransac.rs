use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lidar::{LidarConfig, Point};
use crate::vehicle_model::VehicleParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Inlier band half-width [m].
    pub band: f64,
    pub max_lines: usize,
    pub min_inliers: usize,
    /// Width tolerance when accepting a segment as the front edge [m].
    pub width_tol: f64,
    /// Gate between the hitch-circle solution and the segment-extent midpoint [m].
    pub extent_gate: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { iterations: 500, band: 0.05, max_lines: 2, min_inliers: 8, width_tol: 0.12, extent_gate: 0.012 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacMeasurement {
    pub ly: f64,
    pub phi: f64,
}

/// Fitted edge: unit direction, centroid and extent of the supporting cluster along the direction.
#[derive(Clone, Debug, PartialEq)]
pub struct LineSegment {
    pub dir: Point,
    pub centroid: Point,
    pub t_min: f64,
    pub t_max: f64,
    pub points: Vec<Point>,
}

impl LineSegment {
    pub fn normal(&self) -> Point {
        Point::new(-self.dir.y, self.dir.x)
    }

    pub fn distance(&self, q: &Point) -> f64 {
        (q - self.centroid).dot(&self.normal()).abs()
    }

    pub fn length(&self) -> f64 {
        self.t_max - self.t_min
    }

    pub fn at(&self, t: f64) -> Point {
        self.centroid + self.dir * t
    }
}

/// Total least squares line through `pts`: (centroid, unit direction).
fn tls(pts: &[Point]) -> Option<(Point, Point)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let c = pts.iter().fold(Point::zeros(), |a, p| a + p) / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let d = p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    if sxx + syy <= 0.0 {
        return None;
    }
    let ang = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some((c, Point::new(ang.cos(), ang.sin())))
}

fn line_distance(c: &Point, dir: &Point, q: &Point) -> f64 {
    ((q - c).x * dir.y - (q - c).y * dir.x).abs()
}

/// Trimmed refit: drop points beyond three robust sigmas until the support stops changing.
fn robust_fit(pts: &[Point]) -> Option<(Point, Point, Vec<Point>)> {
    let mut keep: Vec<Point> = pts.to_vec();
    let (mut c, mut d) = tls(&keep)?;
    for _ in 0..6 {
        let mut r: Vec<f64> = keep.iter().map(|q| line_distance(&c, &d, q)).collect();
        let mut sorted = r.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let scale = 1.4826 * sorted[sorted.len() / 2];
        let thr = (3.0 * scale).max(1e-9);
        let before = keep.len();
        let mut next = Vec::with_capacity(before);
        for (q, ri) in keep.iter().zip(r.drain(..)) {
            if ri <= thr {
                next.push(*q);
            }
        }
        if next.len() < 2 || next.len() == before {
            break;
        }
        keep = next;
        (c, d) = tls(&keep)?;
    }
    Some((c, d, keep))
}

/// Largest run of points along `dir` with no gap wider than a few typical spacings.
fn largest_cluster(c: &Point, dir: &Point, pts: &[Point]) -> (f64, f64, Vec<Point>) {
    let mut t: Vec<(f64, Point)> = pts.iter().map(|q| ((q - c).dot(dir), *q)).collect();
    t.sort_by(|a, b| a.0.total_cmp(&b.0));
    if t.len() < 3 {
        return (t[0].0, t[t.len() - 1].0, t.into_iter().map(|x| x.1).collect());
    }
    let mut gaps: Vec<f64> = t.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let split = {
        let mut g = gaps.clone();
        g.sort_by(|a, b| a.total_cmp(b));
        (5.0 * g[g.len() / 2]).max(0.03)
    };
    let (mut best, mut start) = ((0usize, 0usize), 0usize);
    for (i, g) in gaps.drain(..).enumerate() {
        if g > split {
            if i - start > best.1 - best.0 {
                best = (start, i);
            }
            start = i + 1;
        }
    }
    if t.len() - 1 - start > best.1 - best.0 {
        best = (start, t.len() - 1);
    }
    let slice = &t[best.0..=best.1];
    (slice[0].0, slice[slice.len() - 1].0, slice.iter().map(|x| x.1).collect())
}

fn segment_from(pts: &[Point]) -> Option<LineSegment> {
    let (c, d, support) = robust_fit(pts)?;
    let (t_min, t_max, points) = largest_cluster(&c, &d, &support);
    Some(LineSegment { dir: d, centroid: c, t_min, t_max, points })
}

/// Sequential two-point RANSAC. Inliers of each accepted line are removed before the next round.
pub fn fit_lines<R: Rng>(cloud: &[Point], cfg: &RansacConfig, rng: &mut R) -> Vec<LineSegment> {
    let mut rest: Vec<Point> = cloud.to_vec();
    let mut lines: Vec<LineSegment> = Vec::new();
    while lines.len() < cfg.max_lines && rest.len() >= cfg.min_inliers.max(2) {
        let mut best: Option<(usize, Point, Point)> = None;
        for _ in 0..cfg.iterations {
            let i = rng.gen_range(0..rest.len());
            let j = rng.gen_range(0..rest.len());
            let e = rest[j] - rest[i];
            let len = e.norm();
            if i == j || len < 1e-9 {
                continue;
            }
            let d = e / len;
            let count = rest.iter().filter(|q| line_distance(&rest[i], &d, q) <= cfg.band).count();
            if best.map_or(true, |b| count > b.0) {
                best = Some((count, rest[i], d));
            }
        }
        let Some((count, c, d)) = best else { break };
        if count < cfg.min_inliers {
            break;
        }
        let (inl, out): (Vec<Point>, Vec<Point>) = rest.iter().partition(|q| line_distance(&c, &d, q) <= cfg.band);
        let Some(mut seg) = segment_from(&inl) else { break };
        // A refit can shift the band; use the refined line for the removal as well.
        let (inl2, out2): (Vec<Point>, Vec<Point>) = inl.iter().chain(out.iter()).partition(|q| seg.distance(q) <= cfg.band);
        if inl2.len() >= cfg.min_inliers {
            if let Some(s) = segment_from(&inl2) {
                seg = s;
            }
            rest = out2;
        } else {
            rest = out;
        }
        lines.push(seg);
    }
    if lines.len() == 2 && lines[0].dir.dot(&lines[1].dir).abs() < PERP_COS {
        reassign_shared(&mut lines);
    }
    lines
}

/// Lines closer than 15 degrees to perpendicular are treated as adjacent body edges.
const PERP_COS: f64 = 0.258_819_045_102_520_8;
/// Allowed gap between a side edge and the front edge corner [m].
const CORNER_TOL: f64 = 0.2;

/// Points near a shared corner fall in both bands; give each to the closer line and refit.
fn reassign_shared(lines: &mut [LineSegment]) {
    let all: Vec<Point> = lines.iter().flat_map(|l| l.points.iter().copied()).collect();
    let mut parts: [Vec<Point>; 2] = [Vec::new(), Vec::new()];
    for q in all {
        let k = if lines[0].distance(&q) <= lines[1].distance(&q) { 0 } else { 1 };
        parts[k].push(q);
    }
    for k in 0..2 {
        if parts[k].len() >= 2 {
            if let Some(s) = segment_from(&parts[k]) {
                lines[k] = s;
            }
        }
    }
}

/// Candidate front-edge interpretation with its geometric consistency residual.
struct Candidate {
    mid: Point,
    phi: f64,
    residual: f64,
}

fn axis_towards(front: &LineSegment, sensor: &Point) -> Point {
    let n = front.normal();
    if (sensor - front.centroid).dot(&n) >= 0.0 {
        n
    } else {
        -n
    }
}

fn hitch_residual(mid: &Point, axis: &Point, p: &VehicleParams) -> f64 {
    let king = mid - axis * p.la;
    let hitch = Point::new(-p.m1, 0.0);
    ((king - hitch).norm() - p.l2).abs()
}

fn phi_of(axis: &Point) -> f64 {
    (-axis.y).atan2(axis.x)
}

fn front_with_side(front: &LineSegment, side: &LineSegment, p: &VehicleParams, sensor: &Point) -> Option<Candidate> {
    let axis = axis_towards(front, sensor);
    // Side line forced parallel to the axis through the side centroid.
    let n = front.normal();
    let den = axis.dot(&n);
    if den.abs() < 1e-9 {
        return None;
    }
    let t = (front.centroid - side.centroid).dot(&n) / den;
    let corner = side.centroid + axis * t;
    if (side.centroid - corner).dot(&axis) > 0.0 {
        return None;
    }
    let near_side = [side.at(side.t_min), side.at(side.t_max)].iter().map(|q| (q - corner).norm()).fold(f64::INFINITY, f64::min);
    let near_front = [front.at(front.t_min), front.at(front.t_max)].iter().map(|q| (q - corner).norm()).fold(f64::INFINITY, f64::min);
    if near_side > CORNER_TOL || near_front > CORNER_TOL {
        return None;
    }
    let mut w = front.dir;
    if (front.at(0.5 * (front.t_min + front.t_max)) - corner).dot(&w) < 0.0 {
        w = -w;
    }
    let mid = corner + w * (0.5 * p.b);
    Some(Candidate { mid, phi: phi_of(&axis), residual: hitch_residual(&mid, &axis, p) })
}

fn front_alone(front: &LineSegment, p: &VehicleParams, sensor: &Point, gate: f64) -> Candidate {
    let axis = axis_towards(front, sensor);
    let t_ext = 0.5 * (front.t_min + front.t_max);
    let ext_mid = front.at(t_ext);
    let residual = hitch_residual(&ext_mid, &axis, p);
    // Kingpin on the circle of radius L2 about the hitch.
    let d0 = front.centroid - axis * p.la - Point::new(-p.m1, 0.0);
    let bq = front.dir.dot(&d0);
    let disc = bq * bq - (d0.norm_squared() - p.l2 * p.l2);
    let mut t = t_ext;
    if disc >= 0.0 {
        let s = disc.sqrt();
        let root = [-bq - s, -bq + s].into_iter().min_by(|a, b| (a - t_ext).abs().total_cmp(&(b - t_ext).abs())).unwrap();
        if (root - t_ext).abs() <= gate {
            t = root;
        }
    }
    Candidate { mid: front.at(t), phi: phi_of(&axis), residual }
}

/// Lateral front-midpoint offset and relative orientation from the extracted edges.
pub fn classify(lines: &[LineSegment], p: &VehicleParams, lidar: &LidarConfig, cfg: &RansacConfig) -> Option<RansacMeasurement> {
    let sensor = lidar.origin();
    let mut best: Option<Candidate> = None;
    for (i, f) in lines.iter().enumerate() {
        if f.length() > p.b + cfg.width_tol || f.points.len() < 2 {
            continue;
        }
        let side = lines.iter().enumerate().find(|(j, s)| *j != i && s.dir.dot(&f.dir).abs() < PERP_COS).map(|x| x.1);
        let cand = side
            .and_then(|s| front_with_side(f, s, p, &sensor))
            .unwrap_or_else(|| front_alone(f, p, &sensor, cfg.extent_gate));
        if best.as_ref().map_or(true, |b| cand.residual < b.residual) {
            best = Some(cand);
        }
    }
    let c = best?;
    if c.residual > 0.3 || c.phi.abs() >= std::f64::consts::FRAC_PI_2 {
        return None;
    }
    Some(RansacMeasurement { ly: c.mid.y, phi: c.phi })
}

pub fn iterative_ransac<R: Rng>(
    cloud: &[Point],
    p: &VehicleParams,
    lidar: &LidarConfig,
    cfg: &RansacConfig,
    rng: &mut R,
) -> Option<RansacMeasurement> {
    if cloud.len() < 2 {
        return None;
    }
    classify(&fit_lines(cloud, cfg, rng), p, lidar, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn two_points_give_exact_line() {
        let a = Point::new(-3.8, -0.7);
        let b = Point::new(-3.7, 0.9);
        let cfg = RansacConfig { min_inliers: 2, ..Default::default() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let lines = fit_lines(&[a, b], &cfg, &mut rng);
        assert_eq!(lines.len(), 1);
        let l = &lines[0];
        assert!(l.distance(&a) < 1e-12 && l.distance(&b) < 1e-12);
        assert!((l.length() - (b - a).norm()).abs() < 1e-12);
    }

    #[test]
    fn tls_recovers_vertical_line() {
        let pts: Vec<Point> = (0..10).map(|i| Point::new(2.0, i as f64 * 0.1)).collect();
        let (c, d) = tls(&pts).unwrap();
        assert!((c.x - 2.0).abs() < 1e-12 && d.x.abs() < 1e-12);
    }

    #[test]
    fn cluster_drops_far_stragglers() {
        let mut pts: Vec<Point> = (0..50).map(|i| Point::new(0.0, i as f64 * 0.02)).collect();
        pts.push(Point::new(0.0, 3.0));
        let (lo, hi, kept) = largest_cluster(&Point::zeros(), &Point::new(0.0, 1.0), &pts);
        assert_eq!(kept.len(), 50);
        assert!(lo.abs() < 1e-12 && (hi - 0.98).abs() < 1e-12);
    }
}
