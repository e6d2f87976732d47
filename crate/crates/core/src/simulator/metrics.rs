//! Run traces and their summary metrics.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Event bits of a trace row.
pub mod event {
    /// The curvature command hit the steering limit.
    pub const SATURATED: u8 = 1;
    /// A localisation measurement was rejected by the gate.
    pub const LOC_GATED: u8 = 2;
    /// A joint-angle measurement was rejected by the gate.
    pub const RAN_GATED: u8 = 4;
    /// RANSAC returned no measurement.
    pub const RAN_MISSING: u8 = 8;
    /// The controller issued a new command at this step.
    pub const CONTROL: u8 = 16;
    /// The tracker moved to the next direction segment.
    pub const SWITCH: u8 = 32;
}

/// One plant step. Error columns are relative to the reference point of the
/// estimated projection (`err_*`) and of the true projection (`true_*`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x3: f64,
    pub y3: f64,
    pub theta3: f64,
    pub beta3: f64,
    pub beta2: f64,
    pub est_x3: f64,
    pub est_y3: f64,
    pub est_theta3: f64,
    pub est_beta3: f64,
    pub est_beta2: f64,
    pub s_tilde: f64,
    pub err_z3: f64,
    pub err_theta3: f64,
    pub err_beta3: f64,
    pub err_beta2: f64,
    pub true_s_tilde: f64,
    pub true_z3: f64,
    pub true_theta3: f64,
    pub true_beta3: f64,
    pub true_beta2: f64,
    /// Rate of the true projection parameter.
    pub s_tilde_dot: f64,
    pub v: f64,
    pub kappa: f64,
    pub kappa_r: f64,
    pub events: u8,
}

impl TraceRow {
    pub fn est_error(&self) -> [f64; 4] {
        [self.err_z3, self.err_theta3, self.err_beta3, self.err_beta2]
    }

    pub fn true_error(&self) -> [f64; 4] {
        [self.true_z3, self.true_theta3, self.true_beta3, self.true_beta2]
    }

    pub fn position_error(&self) -> f64 {
        (self.x3 - self.est_x3).hypot(self.y3 - self.est_y3)
    }
}

pub fn write_trace<W: Write>(rows: &[TraceRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(r: R) -> Result<Vec<TraceRow>> {
    csv::Reader::from_reader(r).deserialize().map(|r| r.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub steps: usize,
    pub duration: f64,
    /// Estimated lateral error, as seen by the controller.
    pub max_abs_z3: f64,
    pub mean_abs_z3: f64,
    /// Lateral error of the true state.
    pub max_abs_true_z3: f64,
    pub mean_abs_true_z3: f64,
    /// Distance between true and estimated semitrailer axle positions.
    pub max_position_error: f64,
    pub mean_position_error: f64,
    /// Largest magnitude of each estimated error state.
    pub max_abs_error: [f64; 4],
    /// Largest magnitude of each true error state.
    pub max_abs_true_error: [f64; 4],
    /// Largest magnitude of each true error state over the last 20 % of the path.
    pub tail_abs_true_error: [f64; 4],
    pub saturation_count: usize,
    /// Whether the true path parameter advanced at every step.
    pub s_tilde_increasing: bool,
    pub min_s_tilde_dot: f64,
    /// Path fraction at which all true error states first fell below the tolerance.
    pub reach_fraction: Option<f64>,
    /// Path fraction after which they stayed below it.
    pub settle_fraction: Option<f64>,
    /// Path fraction covered by the true projection.
    pub progress: f64,
}

/// Aggregate a trace of a path whose semitrailer arc length runs over `s_range`.
pub fn compute_metrics(rows: &[TraceRow], s_range: (f64, f64), tol: f64) -> RunMetrics {
    let mut m = RunMetrics { s_tilde_increasing: true, min_s_tilde_dot: f64::INFINITY, ..Default::default() };
    if rows.is_empty() {
        m.min_s_tilde_dot = 0.0;
        m.s_tilde_increasing = false;
        return m;
    }
    let span = s_range.1 - s_range.0;
    let frac = |s: f64| if span > 0.0 { (s - s_range.0) / span } else { 1.0 };
    let n = rows.len() as f64;
    let (mut sz, mut stz, mut se) = (0.0, 0.0, 0.0);
    let mut last_bad: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        let (e, te) = (r.est_error(), r.true_error());
        sz += r.err_z3.abs();
        stz += r.true_z3.abs();
        let pe = r.position_error();
        se += pe;
        m.max_position_error = m.max_position_error.max(pe);
        for k in 0..4 {
            m.max_abs_error[k] = m.max_abs_error[k].max(e[k].abs());
            m.max_abs_true_error[k] = m.max_abs_true_error[k].max(te[k].abs());
            if frac(r.true_s_tilde) >= 0.8 {
                m.tail_abs_true_error[k] = m.tail_abs_true_error[k].max(te[k].abs());
            }
        }
        if r.events & event::SATURATED != 0 && r.events & event::CONTROL != 0 {
            m.saturation_count += 1;
        }
        m.min_s_tilde_dot = m.min_s_tilde_dot.min(r.s_tilde_dot);
        if !(r.s_tilde_dot > 0.0) {
            m.s_tilde_increasing = false;
        }
        let inside = te.iter().all(|x| x.abs() < tol);
        if inside && m.reach_fraction.is_none() {
            m.reach_fraction = Some(frac(r.true_s_tilde));
        }
        if !inside {
            last_bad = Some(i);
        }
    }
    m.settle_fraction = match last_bad {
        None => Some(frac(rows[0].true_s_tilde)),
        Some(i) if i + 1 < rows.len() => Some(frac(rows[i + 1].true_s_tilde)),
        Some(_) => None,
    };
    m.steps = rows.len();
    m.duration = rows[rows.len() - 1].t;
    m.max_abs_z3 = m.max_abs_error[0];
    m.max_abs_true_z3 = m.max_abs_true_error[0];
    m.mean_abs_z3 = sz / n;
    m.mean_abs_true_z3 = stz / n;
    m.mean_position_error = se / n;
    m.progress = frac(rows[rows.len() - 1].true_s_tilde);
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize) -> Vec<TraceRow> {
        (0..n)
            .map(|i| TraceRow { t: i as f64 * 1e-3, true_s_tilde: i as f64, s_tilde: i as f64, s_tilde_dot: 1.0, ..Default::default() })
            .collect()
    }

    #[test]
    fn zero_trace_gives_zero_metrics() {
        let m = compute_metrics(&rows(11), (0.0, 10.0), 0.02);
        assert_eq!(m.max_abs_z3, 0.0);
        assert_eq!(m.mean_abs_z3, 0.0);
        assert_eq!(m.max_position_error, 0.0);
        assert_eq!(m.max_abs_true_error, [0.0; 4]);
        assert_eq!(m.saturation_count, 0);
        assert_eq!(m.reach_fraction, Some(0.0));
        assert_eq!(m.settle_fraction, Some(0.0));
        assert!(m.s_tilde_increasing);
        assert_eq!(m.progress, 1.0);
    }

    #[test]
    fn single_spike_sets_the_maximum() {
        let mut r = rows(11);
        r[4].err_z3 = -0.5;
        r[4].true_z3 = 0.5;
        let m = compute_metrics(&r, (0.0, 10.0), 0.02);
        assert_eq!(m.max_abs_z3, 0.5);
        assert_eq!(m.max_abs_true_z3, 0.5);
        assert_eq!(m.mean_abs_z3, 0.5 / 11.0);
        assert_eq!(m.settle_fraction, Some(0.5));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut r = rows(5);
        r[2].x3 = 0.1 + 0.2;
        r[3].est_beta2 = -1.0 / 3.0;
        r[1].events = event::SATURATED | event::CONTROL;
        let mut buf = Vec::new();
        write_trace(&r, &mut buf).unwrap();
        let back = read_trace(buf.as_slice()).unwrap();
        assert_eq!(back, r);
        assert_eq!(compute_metrics(&back, (0.0, 4.0), 0.02), compute_metrics(&r, (0.0, 4.0), 0.02));
    }
}
