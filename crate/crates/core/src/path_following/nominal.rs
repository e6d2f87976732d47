use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle_model::{velocity_ratio, AugmentedState, Direction, SampledPath, VehicleParams, VehicleState};

/// One sample of a nominal path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NominalSample {
    /// Tractor arc length.
    pub s: f64,
    /// Semitrailer arc length.
    pub s_tilde: f64,
    pub state: AugmentedState,
    /// Direction on the interval starting at this sample.
    pub v_r: Direction,
    /// Tractor curvature.
    pub kappa_r: f64,
    /// Library id of the primitive this sample belongs to, -1 if none.
    pub primitive_id: i64,
}

/// Nominal quantities interpolated at some `s_tilde`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefPoint {
    pub s_tilde: f64,
    pub x3: f64,
    pub y3: f64,
    pub theta3: f64,
    pub beta3: f64,
    pub beta2: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub v_r: Direction,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NominalPath {
    pub samples: Vec<NominalSample>,
}

impl NominalPath {
    /// Build from a single-direction sampled path, integrating the semitrailer
    /// arc length with the trapezoid rule on the velocity ratio.
    pub fn from_sampled(path: &SampledPath, params: &VehicleParams, primitive_id: i64, s0: f64, s_tilde0: f64) -> Self {
        let mut out = NominalPath::default();
        out.append_sampled(path, params, primitive_id, s0, s_tilde0);
        out
    }

    pub(crate) fn append_sampled(&mut self, path: &SampledPath, params: &VehicleParams, primitive_id: i64, s0: f64, s_tilde0: f64) {
        let gv = |z: &AugmentedState| velocity_ratio(z.state.beta2, z.state.beta3, z.kappa(params), params);
        let mut st = s_tilde0;
        let n = path.states.len();
        for i in 0..n {
            let z = path.states[i];
            if i > 0 {
                let h = path.s[i] - path.s[i - 1];
                st += 0.5 * h * (gv(&path.states[i - 1]) + gv(&z));
            }
            let v_r = if i < path.controls.len() {
                path.controls[i].v
            } else if let Some(c) = path.controls.last() {
                c.v
            } else {
                Direction::Forward
            };
            self.samples.push(NominalSample {
                s: s0 + path.s[i],
                s_tilde: st,
                state: z,
                v_r,
                kappa_r: z.kappa(params),
                primitive_id,
            });
        }
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// One row per sample. Floats are written in shortest round-trip form.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for n in &self.samples {
            let x = &n.state.state;
            wr.serialize(PlanRow {
                s: n.s,
                s_tilde: n.s_tilde,
                x3: x.x3,
                y3: x.y3,
                theta3: x.theta3,
                beta3: x.beta3,
                beta2: x.beta2,
                alpha: n.state.alpha,
                omega: n.state.omega,
                v_r: n.v_r.sign() as i8,
                kappa_r: n.kappa_r,
                primitive_id: n.primitive_id,
            })
            .map_err(csv_error)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut out = NominalPath::default();
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: PlanRow = row.map_err(csv_error)?;
            let v_r = match row.v_r {
                1 => Direction::Forward,
                -1 => Direction::Backward,
                v => return Err(Error::Format(format!("direction {v} is not +1 or -1"))),
            };
            out.samples.push(NominalSample {
                s: row.s,
                s_tilde: row.s_tilde,
                state: AugmentedState::new(VehicleState::new(row.x3, row.y3, row.theta3, row.beta3, row.beta2), row.alpha, row.omega),
                v_r,
                kappa_r: row.kappa_r,
                primitive_id: row.primitive_id,
            });
        }
        Ok(out)
    }

    pub fn s_tilde_end(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.s_tilde)
    }

    pub fn s_end(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.s)
    }

    /// Maximal index ranges of constant direction. Neighbouring ranges share
    /// their junction (cusp) sample.
    pub fn segments(&self) -> Vec<Range<usize>> {
        let n = self.samples.len();
        if n < 2 {
            return vec![0..n];
        }
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..n - 1 {
            if self.samples[i].v_r != self.samples[i - 1].v_r {
                out.push(start..i + 1);
                start = i;
            }
        }
        out.push(start..n);
        out
    }

    /// Interpolate linearly in `s_tilde` within an index range (clamped to its ends).
    pub fn interpolate_in(&self, range: Range<usize>, s_tilde: f64) -> RefPoint {
        let sm = &self.samples[range.clone()];
        let dir = sm[0].v_r;
        if sm.len() == 1 || s_tilde <= sm[0].s_tilde {
            return ref_point(&sm[0], &sm[0], 0.0, dir);
        }
        if s_tilde >= sm[sm.len() - 1].s_tilde {
            let l = &sm[sm.len() - 1];
            return ref_point(l, l, 0.0, dir);
        }
        let k = sm.partition_point(|p| p.s_tilde <= s_tilde).clamp(1, sm.len() - 1);
        let (a, b) = (&sm[k - 1], &sm[k]);
        let d = b.s_tilde - a.s_tilde;
        let t = if d > 0.0 { (s_tilde - a.s_tilde) / d } else { 0.0 };
        ref_point(a, b, t, dir)
    }

    pub fn interpolate(&self, s_tilde: f64) -> RefPoint {
        let segs = self.segments();
        let seg = segs
            .iter()
            .find(|r| s_tilde <= self.samples[r.end - 1].s_tilde)
            .unwrap_or(segs.last().unwrap())
            .clone();
        self.interpolate_in(seg, s_tilde)
    }
}

#[derive(Serialize, Deserialize)]
struct PlanRow {
    s: f64,
    s_tilde: f64,
    x3: f64,
    y3: f64,
    theta3: f64,
    beta3: f64,
    beta2: f64,
    alpha: f64,
    omega: f64,
    v_r: i8,
    kappa_r: f64,
    primitive_id: i64,
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn ref_point(a: &NominalSample, b: &NominalSample, t: f64, v_r: Direction) -> RefPoint {
    let l = |x: f64, y: f64| x + t * (y - x);
    let (za, zb) = (&a.state, &b.state);
    RefPoint {
        s_tilde: l(a.s_tilde, b.s_tilde),
        x3: l(za.state.x3, zb.state.x3),
        y3: l(za.state.y3, zb.state.y3),
        theta3: l(za.state.theta3, zb.state.theta3),
        beta3: l(za.state.beta3, zb.state.beta3),
        beta2: l(za.state.beta2, zb.state.beta2),
        alpha: l(za.alpha, zb.alpha),
        kappa: l(a.kappa_r, b.kappa_r),
        v_r,
    }
}
