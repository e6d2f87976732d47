//! ARA* over the primitive graph.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::footprint::{Footprint, FootprintConfig};
use super::grid::OccupancyGrid;
use super::hlut::{heuristic, Hlut};
use super::stitch::{stitch, PlanStep};
use crate::error::{Error, Result};
use crate::path_following::NominalPath;
use crate::primitive_gen::{snap_to_lattice, LatticeState, RESOLUTION};
use crate::primitive_gen::{Library, MotionPrimitive};
use crate::vehicle_model::{AugmentedState, VehicleParams, VehicleState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSettings {
    pub gamma0: f64,
    pub gamma_step: f64,
    /// Wall-clock limit; `None` for no limit.
    pub max_time_ms: Option<u64>,
    pub max_expansions: Option<usize>,
}

impl Default for PlanSettings {
    fn default() -> Self {
        Self { gamma0: 2.0, gamma_step: 0.1, max_time_ms: Some(10_000), max_expansions: None }
    }
}

#[derive(Clone, Debug)]
pub struct PlanResult {
    pub steps: Vec<PlanStep>,
    pub path: NominalPath,
    pub cost: f64,
    pub gamma: f64,
    /// Expansions since the search started.
    pub expansions: usize,
    pub time: Duration,
}

impl PlanResult {
    pub fn primitive_ids(&self) -> Vec<u32> {
        self.steps.iter().map(|s| s.primitive).collect()
    }
}

/// Outcome of a planning call: the solutions found, improving, and whether the
/// budget ran out before γ = 1.
#[derive(Clone, Debug)]
pub struct PlanOutput {
    pub results: Vec<PlanResult>,
    pub exhausted: bool,
}

impl PlanOutput {
    pub fn best(&self) -> &PlanResult {
        self.results.last().expect("plan output holds at least one result")
    }
}

/// Footprint check of a single primitive; discs are placed at every sample.
pub fn collision_check(
    prim: &MotionPrimitive,
    anchor: &LatticeState,
    grid: &OccupancyGrid,
    fp: &Footprint,
    p: &VehicleParams,
) -> bool {
    let (dx, dy) = (anchor.ix as f64 * RESOLUTION, anchor.iy as f64 * RESOLUTION);
    prim.path.states.iter().all(|z| {
        fp.disc_centres(&z.state, p).iter().all(|&(x, y)| grid.occupied_at(x + dx, y + dy) == Some(false))
    })
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct Node {
    state: LatticeState,
    g: f64,
    h: f64,
    parent: u32,
    via: u32,
    open: bool,
    closed: bool,
    incons: bool,
}

/// Heap entry. Smallest f first, then larger g, then lower incoming primitive id.
#[derive(Clone, Copy, Debug)]
struct Key {
    f: f64,
    g: f64,
    via: u32,
    node: u32,
}

impl PartialEq for Key {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Key {
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&o.g))
            .then_with(|| o.via.cmp(&self.via))
            .then_with(|| o.node.cmp(&self.node))
    }
}

/// Planning context for one library, vehicle and map. Collision results are cached
/// across calls.
pub struct Planner<'a> {
    lib: &'a Library,
    hlut: Option<&'a Hlut>,
    grid: OccupancyGrid,
    params: VehicleParams,
    footprint: Footprint,
    /// Disc centres of every primitive sample, relative to its start cell.
    discs: Vec<Vec<(f64, f64)>>,
    cache: HashMap<(u32, i32, i32), bool>,
}

impl<'a> Planner<'a> {
    /// `grid` holds raw occupancy; it is inflated here by the footprint's disc radius.
    pub fn new(
        lib: &'a Library,
        hlut: Option<&'a Hlut>,
        grid: &OccupancyGrid,
        params: &VehicleParams,
        cfg: &FootprintConfig,
    ) -> Self {
        let footprint = Footprint::new(params, cfg);
        let mut grid = grid.clone();
        grid.inflate(footprint.inflation_radius());
        let discs = lib
            .primitives
            .iter()
            .map(|m| m.path.states.iter().flat_map(|z| footprint.disc_centres(&z.state, params)).collect())
            .collect();
        Self { lib, hlut, grid, params: *params, footprint, discs, cache: HashMap::new() }
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn footprint(&self) -> &Footprint {
        &self.footprint
    }

    /// True when the vehicle at the decoded lattice state touches no inflated cell.
    pub fn state_free(&self, s: &LatticeState) -> bool {
        match s.decode(&self.params) {
            Ok(z) => self.pose_free(&z.state),
            Err(_) => false,
        }
    }

    fn pose_free(&self, x: &VehicleState) -> bool {
        self.footprint.disc_centres(x, &self.params).iter().all(|&(x, y)| self.grid.occupied_at(x, y) == Some(false))
    }

    /// Cached collision-free test of primitive `k` started from cell `(ix, iy)`.
    pub fn edge_free(&mut self, k: u32, ix: i32, iy: i32) -> bool {
        if let Some(&v) = self.cache.get(&(k, ix, iy)) {
            return v;
        }
        let (dx, dy) = (ix as f64 * RESOLUTION, iy as f64 * RESOLUTION);
        let g = &self.grid;
        let v = self.discs[k as usize].iter().all(|&(x, y)| g.occupied_at(x + dx, y + dy) == Some(false));
        self.cache.insert((k, ix, iy), v);
        v
    }

    fn successors(&mut self, s: &LatticeState) -> Vec<(u32, LatticeState, f64)> {
        let lib = self.lib;
        let mut out = Vec::new();
        for &k in lib.successors(s) {
            let m = &lib.primitives[k];
            if self.edge_free(m.id, s.ix, s.iy) {
                out.push((m.id, LatticeState::new(s.ix + m.to.ix, s.iy + m.to.iy, m.to.itheta, m.to.ialpha), m.cost));
            }
        }
        out
    }

    fn endpoints(&self, start: &LatticeState, goal: &LatticeState) -> Result<()> {
        if !self.state_free(start) {
            return Err(Error::StartInCollision);
        }
        if !self.state_free(goal) {
            return Err(Error::GoalInCollision);
        }
        Ok(())
    }

    /// Plan between continuous states, snapped to the lattice first.
    pub fn plan(&mut self, start: &AugmentedState, goal: &AugmentedState, settings: &PlanSettings) -> Result<PlanOutput> {
        self.plan_lattice(snap_to_lattice(start), snap_to_lattice(goal), settings)
    }

    pub fn plan_lattice(&mut self, start: LatticeState, goal: LatticeState, settings: &PlanSettings) -> Result<PlanOutput> {
        if self.lib.is_empty() {
            return Err(Error::EmptyLibrary);
        }
        self.endpoints(&start, &goal)?;
        let t0 = Instant::now();
        if start == goal {
            let r = PlanResult { steps: vec![], path: NominalPath::default(), cost: 0.0, gamma: 1.0, expansions: 0, time: t0.elapsed() };
            return Ok(PlanOutput { results: vec![r], exhausted: false });
        }
        let deadline = settings.max_time_ms.map(|ms| t0 + Duration::from_millis(ms));
        let max_exp = settings.max_expansions.unwrap_or(usize::MAX);
        // Inflation factors as integer multiples of the step, so the schedule ends exactly at 1.
        let step = settings.gamma_step;
        let mut level = ((settings.gamma0 - 1.0) / step).round().max(0.0) as u32;
        let gamma_of = |level: u32| 1.0 + level as f64 * step;

        let mut nodes: Vec<Node> = Vec::new();
        let mut ids: HashMap<LatticeState, u32> = HashMap::new();
        let hlut = self.hlut;
        let mut intern = |s: LatticeState, nodes: &mut Vec<Node>| -> u32 {
            *ids.entry(s).or_insert_with(|| {
                nodes.push(Node {
                    state: s,
                    g: f64::INFINITY,
                    h: heuristic(&s, &goal, hlut),
                    parent: NONE,
                    via: NONE,
                    open: false,
                    closed: false,
                    incons: false,
                });
                (nodes.len() - 1) as u32
            })
        };
        let si = intern(start, &mut nodes);
        let gi = intern(goal, &mut nodes);
        nodes[si as usize].g = 0.0;
        nodes[si as usize].open = true;
        let mut open = BinaryHeap::new();
        let mut incons: Vec<u32> = Vec::new();
        let mut eps = gamma_of(level);
        open.push(Key { f: eps * nodes[si as usize].h, g: 0.0, via: NONE, node: si });
        let mut expansions = 0usize;
        let mut results: Vec<PlanResult> = Vec::new();
        loop {
            // ImprovePath.
            let mut exhausted = false;
            while let Some(&top) = open.peek() {
                let n = nodes[top.node as usize];
                if !n.open || top.g != n.g {
                    open.pop();
                    continue;
                }
                if nodes[gi as usize].g <= top.f {
                    break;
                }
                if expansions >= max_exp || deadline.is_some_and(|d| Instant::now() >= d) {
                    exhausted = true;
                    break;
                }
                open.pop();
                expansions += 1;
                let u = top.node;
                nodes[u as usize].open = false;
                nodes[u as usize].closed = true;
                let (su, gu) = (n.state, n.g);
                for (k, t, c) in self.successors(&su) {
                    let ti = intern(t, &mut nodes);
                    let node = &mut nodes[ti as usize];
                    let gt = gu + c;
                    if gt < node.g {
                        node.g = gt;
                        node.parent = u;
                        node.via = k;
                        if node.closed {
                            if !node.incons {
                                node.incons = true;
                                incons.push(ti);
                            }
                        } else {
                            node.open = true;
                            open.push(Key { f: gt + eps * node.h, g: gt, via: k, node: ti });
                        }
                    }
                }
            }
            let goal_g = nodes[gi as usize].g;
            if exhausted {
                if results.is_empty() {
                    return Err(Error::BudgetExhausted);
                }
                return Ok(PlanOutput { results, exhausted: true });
            }
            if !goal_g.is_finite() {
                return Err(Error::NoPath);
            }
            let improved = results.last().is_none_or(|r| goal_g < r.cost || eps < r.gamma);
            if improved {
                let mut steps = Vec::new();
                let mut cur = gi;
                while cur != si {
                    let n = nodes[cur as usize];
                    steps.push(PlanStep { primitive: n.via, anchor: nodes[n.parent as usize].state });
                    cur = n.parent;
                }
                steps.reverse();
                let path = stitch(self.lib, &steps, &self.params)?;
                results.push(PlanResult { steps, path, cost: goal_g, gamma: eps, expansions, time: t0.elapsed() });
            }
            if level == 0 {
                return Ok(PlanOutput { results, exhausted: false });
            }
            level -= 1;
            eps = gamma_of(level);
            for i in incons.drain(..) {
                nodes[i as usize].incons = false;
                nodes[i as usize].open = true;
            }
            open.clear();
            for (i, n) in nodes.iter_mut().enumerate() {
                n.closed = false;
                if n.open {
                    open.push(Key { f: n.g + eps * n.h, g: n.g, via: n.via, node: i as u32 });
                }
            }
        }
    }

    /// Optimal cost by uniform-cost search on the same graph.
    pub fn optimal_cost(&mut self, start: LatticeState, goal: LatticeState) -> Result<f64> {
        self.endpoints(&start, &goal)?;
        let mut best: HashMap<LatticeState, f64> = HashMap::new();
        let mut open = BinaryHeap::new();
        best.insert(start, 0.0);
        open.push(UcsEntry(0.0, start));
        while let Some(UcsEntry(g, s)) = open.pop() {
            if g > best[&s] {
                continue;
            }
            if s == goal {
                return Ok(g);
            }
            for (_, t, c) in self.successors(&s) {
                let gt = g + c;
                if best.get(&t).is_none_or(|&b| gt < b) {
                    best.insert(t, gt);
                    open.push(UcsEntry(gt, t));
                }
            }
        }
        Err(Error::NoPath)
    }
}

struct UcsEntry(f64, LatticeState);

impl PartialEq for UcsEntry {
    fn eq(&self, o: &Self) -> bool {
        self.0.total_cmp(&o.0) == Ordering::Equal
    }
}
impl Eq for UcsEntry {}
impl PartialOrd for UcsEntry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for UcsEntry {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0)
    }
}
