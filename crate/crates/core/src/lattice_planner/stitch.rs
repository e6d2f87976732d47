use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path_following::NominalPath;
use crate::primitive_gen::LatticeState;
use crate::primitive_gen::Library;
use crate::vehicle_model::VehicleParams;

/// One primitive of a plan and the lattice state it starts from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub primitive: u32,
    pub anchor: LatticeState,
}

/// Concatenate the primitives of a plan. The last sample of each primitive is
/// replaced by the first sample of the next, which carries the new direction.
pub fn stitch(lib: &Library, steps: &[PlanStep], p: &VehicleParams) -> Result<NominalPath> {
    let mut out = NominalPath::default();
    let mut expect: Option<LatticeState> = None;
    for (k, st) in steps.iter().enumerate() {
        let m = lib.primitives.get(st.primitive as usize).ok_or(Error::ChainMismatch(k))?;
        if m.from.itheta != st.anchor.itheta || m.from.ialpha != st.anchor.ialpha || expect.is_some_and(|e| e != st.anchor) {
            return Err(Error::ChainMismatch(k));
        }
        let (s0, st0, th) = match out.samples.pop() {
            Some(last) => (last.s, last.s_tilde, last.state.state.theta3),
            None => (0.0, 0.0, st.anchor.theta()),
        };
        let path = m.anchored_path(st.anchor.ix, st.anchor.iy, th);
        out.append_sampled(&path, p, m.id as i64, s0, st0);
        expect = Some(LatticeState::new(st.anchor.ix + m.to.ix, st.anchor.iy + m.to.iy, m.to.itheta, m.to.ialpha));
    }
    Ok(out)
}
