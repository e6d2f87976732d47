//! The primitive library: menu solutions turned into primitives, backward motion by
//! reversal, symmetry expansion, redundancy reduction and the on-disk format.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cost::{path_cost, quantize_cost, CostWeights};
use super::lattice::{LatticeState, Symmetry, RESOLUTION};
use super::menu::{default_menu, solve_entry, MenuEntry, SolvedEntry};
use super::ocp::OcpSettings;
use crate::error::{Error, Result};
use crate::vehicle_model::{
    integrate, membership_violation, reverse_path, wrap_angle, AugmentedState, ControlProfile, Direction, PlanningControl,
    SampledPath, VehicleParams,
};

pub const LIBRARY_VERSION: u32 = 2;

/// Tolerance on endpoint decoding and on dynamic replay of stored samples.
pub const ENDPOINT_TOL: f64 = 1e-6;

/// Forward-motion solution a backward primitive was reversed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progenitor {
    pub from: LatticeState,
    pub to: LatticeState,
    pub u: Vec<f64>,
    pub s_f: f64,
    pub substeps: usize,
}

impl Progenitor {
    pub fn step(&self) -> f64 {
        self.s_f / (self.u.len() * self.substeps) as f64
    }

    /// Forward path re-integrated from the decoded start state.
    pub fn path(&self, p: &VehicleParams) -> Result<SampledPath> {
        let h = self.s_f / self.u.len() as f64;
        let mut prof = ControlProfile::default();
        for &u in &self.u {
            prof.push(Direction::Forward, u, h);
        }
        integrate(&self.from.decode(p)?, &prof, self.step(), p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionPrimitive {
    pub id: u32,
    /// Start state; always at the origin cell.
    pub from: LatticeState,
    /// End state relative to the start cell.
    pub to: LatticeState,
    pub direction: Direction,
    pub length: f64,
    pub cost: f64,
    /// Sample spacing in tractor path length.
    pub step: f64,
    pub path: SampledPath,
    pub progenitor: Option<Progenitor>,
    /// Index of the seed whose symmetry orbit this primitive belongs to.
    pub orbit: u32,
}

impl MotionPrimitive {
    /// Image under a grid symmetry. The start stays at the origin.
    pub fn transformed(&self, g: Symmetry) -> MotionPrimitive {
        let sg = g.sign();
        MotionPrimitive {
            from: g.map_lattice(&self.from),
            to: g.map_lattice(&self.to),
            path: g.map_path(&self.path),
            progenitor: self.progenitor.as_ref().map(|pr| Progenitor {
                from: g.map_lattice(&pr.from),
                to: g.map_lattice(&pr.to),
                u: pr.u.iter().map(|u| sg * u).collect(),
                ..pr.clone()
            }),
            ..self.clone()
        }
    }

    /// Control profile with one constant segment per sample interval.
    pub fn profile(&self) -> ControlProfile {
        let mut prof = ControlProfile::default();
        for (i, c) in self.path.controls.iter().enumerate() {
            prof.push(c.v, c.u_omega, self.path.s[i + 1] - self.path.s[i]);
        }
        prof
    }

    /// Largest deviation between the stored samples and a re-integration of the stored
    /// controls from the first sample.
    pub fn replay_residual(&self, p: &VehicleParams) -> Result<f64> {
        let replay = integrate(&self.path.states[0], &self.profile(), self.step * (1.0 + 1e-9), p)?;
        if replay.states.len() != self.path.states.len() {
            return Err(Error::Format(format!("primitive {}: replay produced {} samples", self.id, replay.states.len())));
        }
        let mut worst = 0.0f64;
        for (a, b) in replay.states.iter().zip(&self.path.states) {
            let (a, b) = (a.to_array(), b.to_array());
            for i in 0..7 {
                worst = worst.max((a[i] - b[i]).abs());
            }
        }
        Ok(worst)
    }

    /// Path moved so that it starts in cell `(ix, iy)` and at heading `theta_ref`
    /// up to whole turns.
    pub fn anchored_path(&self, ix: i32, iy: i32, theta_ref: f64) -> SampledPath {
        let th0 = self.path.states[0].state.theta3;
        let turns = ((theta_ref - th0) / std::f64::consts::TAU).round() * std::f64::consts::TAU;
        let (dx, dy) = (ix as f64 * RESOLUTION, iy as f64 * RESOLUTION);
        let mut out = self.path.clone();
        for z in &mut out.states {
            z.state.x3 += dx;
            z.state.y3 += dy;
            z.state.theta3 += turns;
        }
        out
    }
}

fn endpoint_error(z: &AugmentedState, s: &LatticeState, p: &VehicleParams) -> Result<f64> {
    let (a, b) = (z.to_array(), s.decode(p)?.to_array());
    let mut worst = 0.0f64;
    for i in 0..7 {
        let d = if i == 2 { wrap_angle(a[i] - b[i]) } else { a[i] - b[i] };
        worst = worst.max(d.abs());
    }
    Ok(worst)
}

/// Check endpoints, bounds and dynamic consistency of a primitive.
pub fn validate_primitive(m: &MotionPrimitive, p: &VehicleParams, tightening: f64) -> Result<()> {
    let bad = |why: String| Err(Error::Infeasible(format!("primitive {} {:?} -> {:?}: {why}", m.id, m.from, m.to)));
    if m.path.states.len() < 2 {
        return bad("fewer than two samples".into());
    }
    if m.from.ix != 0 || m.from.iy != 0 {
        return bad("start is not at the origin".into());
    }
    let e0 = endpoint_error(&m.path.states[0], &m.from, p)?;
    let e1 = endpoint_error(m.path.last(), &m.to, p)?;
    if e0 > ENDPOINT_TOL || e1 > ENDPOINT_TOL {
        return bad(format!("endpoint error {e0:.2e} / {e1:.2e}"));
    }
    let a_lim = tightening * p.alpha_max + 1e-9;
    for z in &m.path.states {
        if let Some(r) = membership_violation(z, p) {
            return bad(r);
        }
        if z.alpha.abs() > a_lim {
            return bad(format!("|alpha| = {:.5} above the tightened bound", z.alpha.abs()));
        }
    }
    if m.path.controls.iter().any(|c| c.v != m.direction || c.u_omega.abs() > p.u_omega_max) {
        return bad("control outside the admissible set".into());
    }
    if m.cost < m.length - 1e-9 {
        return bad(format!("cost {} below length {}", m.cost, m.length));
    }
    let r = m.replay_residual(p)?;
    if r > ENDPOINT_TOL {
        return bad(format!("replay residual {r:.2e}"));
    }
    Ok(())
}

/// Forward primitive from a solved menu entry; its cost uses `weights`.
pub fn primitive_from_solution(se: &SolvedEntry, weights: &CostWeights, p: &VehicleParams) -> Result<MotionPrimitive> {
    let path = se.solution.path(&se.from.decode(p)?, p)?;
    Ok(MotionPrimitive {
        id: 0,
        from: se.from,
        to: se.to,
        direction: Direction::Forward,
        length: path.length(),
        cost: quantize_cost(path_cost(&path, weights)),
        step: se.solution.step(),
        path,
        progenitor: None,
        orbit: 0,
    })
}

/// Backward primitive tracing a forward one in reverse, moved to start at the origin.
pub fn make_backward_primitive(fwd: &MotionPrimitive, weights: &CostWeights) -> MotionPrimitive {
    let mut path = reverse_path(&fwd.path);
    let (dx, dy) = (fwd.to.ix as f64 * RESOLUTION, fwd.to.iy as f64 * RESOLUTION);
    for z in &mut path.states {
        z.state.x3 -= dx;
        z.state.y3 -= dy;
    }
    let from = fwd.to.at_origin();
    let to = LatticeState::new(fwd.from.ix - fwd.to.ix, fwd.from.iy - fwd.to.iy, fwd.from.itheta, fwd.from.ialpha);
    MotionPrimitive {
        id: 0,
        from,
        to,
        direction: Direction::Backward,
        length: path.length(),
        cost: quantize_cost(path_cost(&path, weights)),
        step: fwd.step,
        path,
        progenitor: None,
        orbit: fwd.orbit,
    }
}

/// Primitive for a solved menu entry, reversed if the entry is a backward one.
pub fn seed_primitive(se: &SolvedEntry, p: &VehicleParams) -> Result<MotionPrimitive> {
    let w = se.entry.weights();
    let fwd = primitive_from_solution(se, &w, p)?;
    Ok(match se.entry.direction {
        Direction::Forward => fwd,
        Direction::Backward => {
            let mut b = make_backward_primitive(&fwd, &w);
            b.progenitor = Some(Progenitor {
                from: se.from,
                to: se.to,
                u: se.solution.u.clone(),
                s_f: se.solution.s_f,
                substeps: se.solution.substeps,
            });
            b
        }
    })
}

type Key = (LatticeState, LatticeState, Direction);

/// Images of every seed under the eight grid symmetries. Coinciding transitions keep
/// the cheaper primitive; every image is validated.
pub fn expand_by_symmetry(seeds: &[MotionPrimitive], p: &VehicleParams, tightening: f64) -> Result<Vec<MotionPrimitive>> {
    let mut best: HashMap<Key, MotionPrimitive> = HashMap::new();
    for (k, seed) in seeds.iter().enumerate() {
        for g in Symmetry::all() {
            let mut m = seed.transformed(g);
            m.orbit = k as u32;
            validate_primitive(&m, p, tightening)?;
            let key = (m.from, m.to, m.direction);
            match best.get(&key) {
                Some(old) if old.cost <= m.cost => {}
                _ => {
                    best.insert(key, m);
                }
            }
        }
    }
    let mut out: Vec<MotionPrimitive> = best.into_values().collect();
    sort_and_number(&mut out);
    Ok(out)
}

fn sort_key(m: &MotionPrimitive) -> (u8, u8, Direction, u8, u8, i32, i32) {
    (m.from.itheta, m.from.ialpha, m.direction, m.to.itheta, m.to.ialpha, m.to.ix, m.to.iy)
}

fn sort_and_number(v: &mut [MotionPrimitive]) {
    v.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
    for (i, m) in v.iter_mut().enumerate() {
        m.id = i as u32;
    }
}

/// Primitives grouped by start heading and steering index.
#[derive(Clone, Debug, Default)]
pub struct SuccessorIndex {
    by_start: HashMap<(u8, u8), Vec<usize>>,
}

impl SuccessorIndex {
    pub fn new(prims: &[MotionPrimitive]) -> Self {
        let mut by_start: HashMap<(u8, u8), Vec<usize>> = HashMap::new();
        for (i, m) in prims.iter().enumerate() {
            by_start.entry((m.from.itheta, m.from.ialpha)).or_default().push(i);
        }
        Self { by_start }
    }

    pub fn from_state(&self, s: &LatticeState) -> &[usize] {
        self.by_start.get(&(s.itheta, s.ialpha)).map_or(&[], |v| v.as_slice())
    }
}

/// Priority-queue entry ordered by smallest `f`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Queued<T> {
    pub f: f64,
    pub item: T,
}

impl<T> PartialEq for Queued<T> {
    fn eq(&self, o: &Self) -> bool {
        self.f.total_cmp(&o.f) == Ordering::Equal
    }
}
impl<T> Eq for Queued<T> {}
impl<T> PartialOrd for Queued<T> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<T> Ord for Queued<T> {
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f)
    }
}

/// Cheapest obstacle-free chain of active primitives from `from` to `to` costing at
/// most `bound`. A* with the Euclidean distance, which never exceeds the cost of a path.
pub fn cheapest_composition(
    prims: &[MotionPrimitive],
    index: &SuccessorIndex,
    active: &[bool],
    from: LatticeState,
    to: LatticeState,
    bound: f64,
) -> Option<(f64, Vec<usize>)> {
    let h = |s: &LatticeState| (((s.ix - to.ix) as f64).powi(2) + ((s.iy - to.iy) as f64).powi(2)).sqrt() * RESOLUTION;
    let mut g: HashMap<LatticeState, (f64, Option<(LatticeState, usize)>)> = HashMap::new();
    let mut open = BinaryHeap::new();
    g.insert(from, (0.0, None));
    open.push(Queued { f: h(&from), item: (0.0f64, from) });
    while let Some(Queued { item: (gs, s), .. }) = open.pop() {
        if gs > g[&s].0 {
            continue;
        }
        if s == to {
            let mut chain = Vec::new();
            let mut cur = s;
            while let Some((prev, k)) = g[&cur].1 {
                chain.push(k);
                cur = prev;
            }
            chain.reverse();
            return Some((gs, chain));
        }
        for &k in index.from_state(&s) {
            if !active[k] {
                continue;
            }
            let m = &prims[k];
            let t = LatticeState::new(s.ix + m.to.ix, s.iy + m.to.iy, m.to.itheta, m.to.ialpha);
            let gt = gs + m.cost;
            if gt + h(&t) > bound {
                continue;
            }
            if g.get(&t).is_none_or(|(old, _)| gt < *old) {
                g.insert(t, (gt, Some((s, k))));
                open.push(Queued { f: gt + h(&t), item: (gt, t) });
            }
        }
    }
    None
}

/// A removed primitive and the chain of kept primitives replacing it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub from: LatticeState,
    pub to: LatticeState,
    pub direction: Direction,
    pub cost: f64,
    pub composition: Vec<u32>,
    pub composition_cost: f64,
}

/// Remove primitives whose transition a chain of other primitives achieves for at most
/// `eta` times their cost. Symmetry orbits are removed as a whole. Returns the kept
/// indices and, per removed index, the replacing chain (indices into `prims`).
pub fn reduce_set(prims: &[MotionPrimitive], eta: f64) -> (Vec<usize>, Vec<(usize, Vec<usize>, f64)>) {
    let index = SuccessorIndex::new(prims);
    let mut active = vec![true; prims.len()];
    let mut orbits: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, m) in prims.iter().enumerate() {
        orbits.entry(m.orbit).or_default().push(i);
    }
    let mut order: Vec<u32> = orbits.keys().copied().collect();
    let rep_cost = |o: &u32| prims[orbits[o][0]].cost;
    order.sort_by(|a, b| rep_cost(b).total_cmp(&rep_cost(a)).then(a.cmp(b)));
    let bound = |m: &MotionPrimitive| eta * m.cost * (1.0 + 1e-12);
    for o in &order {
        let members = &orbits[o];
        for &k in members {
            active[k] = false;
        }
        let rep = &prims[members[0]];
        if cheapest_composition(prims, &index, &active, rep.from, rep.to, bound(rep)).is_none() {
            for &k in members {
                active[k] = true;
            }
        }
    }
    // Certificates against the final set. A failure restores the primitive, which can
    // only make other certificates cheaper.
    loop {
        let mut restored = false;
        for k in 0..prims.len() {
            if !active[k] && cheapest_composition(prims, &index, &active, prims[k].from, prims[k].to, bound(&prims[k])).is_none() {
                active[k] = true;
                restored = true;
            }
        }
        if !restored {
            break;
        }
    }
    let mut removed = Vec::new();
    for k in 0..prims.len() {
        if !active[k] {
            let (c, chain) = cheapest_composition(prims, &index, &active, prims[k].from, prims[k].to, bound(&prims[k]))
                .expect("certificate checked above");
            removed.push((k, chain, c));
        }
    }
    let kept = (0..prims.len()).filter(|&k| active[k]).collect();
    (kept, removed)
}

pub fn params_hash(p: &VehicleParams) -> String {
    let bytes = serde_json::to_vec(p).expect("parameters serialise");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryHeader {
    pub version: u32,
    pub params_hash: String,
    pub params: VehicleParams,
    /// Largest sample spacing [m].
    pub ds: f64,
    pub tightening: f64,
    pub eta: f64,
    pub intervals: usize,
    /// Number of primitives before reduction.
    pub expanded: usize,
    /// Menu entries that produced no primitive, with the reason.
    pub skipped: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Library {
    pub header: LibraryHeader,
    pub primitives: Vec<MotionPrimitive>,
    pub reductions: Vec<Reduction>,
    index: SuccessorIndex,
}

#[derive(Serialize, Deserialize)]
struct PrimitiveRecord {
    id: u32,
    from: LatticeState,
    to: LatticeState,
    direction: Direction,
    length: f64,
    cost: f64,
    step: f64,
    orbit: u32,
    s: Vec<f64>,
    /// x3, y3, theta3, beta3, beta2, alpha, omega per sample.
    z: Vec<[f64; 7]>,
    /// Steering acceleration per sample interval.
    u: Vec<f64>,
    progenitor: Option<Progenitor>,
}

#[derive(Serialize, Deserialize)]
struct LibraryFile {
    header: LibraryHeader,
    primitives: Vec<PrimitiveRecord>,
    reductions: Vec<Reduction>,
}

impl Library {
    pub fn new(header: LibraryHeader, primitives: Vec<MotionPrimitive>, reductions: Vec<Reduction>) -> Self {
        let index = SuccessorIndex::new(&primitives);
        Self { header, primitives, reductions, index }
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn get(&self, id: u32) -> &MotionPrimitive {
        &self.primitives[id as usize]
    }

    /// Indices of the primitives applicable at `s`.
    pub fn successors(&self, s: &LatticeState) -> &[usize] {
        self.index.from_state(s)
    }

    pub fn index(&self) -> &SuccessorIndex {
        &self.index
    }

    pub fn to_json(&self) -> Result<String> {
        let file = LibraryFile {
            header: self.header.clone(),
            primitives: self
                .primitives
                .iter()
                .map(|m| PrimitiveRecord {
                    id: m.id,
                    from: m.from,
                    to: m.to,
                    direction: m.direction,
                    length: m.length,
                    cost: m.cost,
                    step: m.step,
                    orbit: m.orbit,
                    s: m.path.s.clone(),
                    z: m.path.states.iter().map(|z| z.to_array()).collect(),
                    u: m.path.controls.iter().map(|c| c.u_omega).collect(),
                    progenitor: m.progenitor.clone(),
                })
                .collect(),
            reductions: self.reductions.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LibraryFile = serde_json::from_str(text)?;
        if file.header.version != LIBRARY_VERSION {
            return Err(Error::Format(format!("library version {} (expected {LIBRARY_VERSION})", file.header.version)));
        }
        let mut prims = Vec::with_capacity(file.primitives.len());
        for (i, r) in file.primitives.into_iter().enumerate() {
            if r.id as usize != i || r.z.len() != r.s.len() || r.u.len() + 1 != r.s.len() {
                return Err(Error::Format(format!("malformed primitive record {i}")));
            }
            let controls = r.u.iter().map(|&u| PlanningControl { v: r.direction, u_omega: u }).collect();
            prims.push(MotionPrimitive {
                id: r.id,
                from: r.from,
                to: r.to,
                direction: r.direction,
                length: r.length,
                cost: r.cost,
                step: r.step,
                path: SampledPath { s: r.s, states: r.z.iter().map(AugmentedState::from_array).collect(), controls },
                progenitor: r.progenitor,
                orbit: r.orbit,
            });
        }
        if prims.is_empty() {
            return Err(Error::EmptyLibrary);
        }
        Ok(Self::new(file.header, prims, file.reductions))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Write atomically through a temporary file in the target directory.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir)?;
        let tmp = tempfile::NamedTempFile::new_in(dir)?;
        std::fs::write(tmp.path(), self.to_json()?)?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }

    /// Whether this library was generated for the given inputs.
    pub fn matches(&self, p: &VehicleParams, settings: &OcpSettings, eta: f64) -> bool {
        let h = &self.header;
        h.version == LIBRARY_VERSION
            && h.params_hash == params_hash(p)
            && h.ds == settings.max_step
            && h.tightening == settings.tightening
            && h.intervals == settings.intervals
            && h.eta == eta
    }
}

/// Solve the menu on `jobs` worker threads. Entries without a solution are returned
/// as messages.
pub fn solve_menu(menu: &[MenuEntry], p: &VehicleParams, settings: &OcpSettings, jobs: usize) -> Result<(Vec<SolvedEntry>, Vec<String>)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let results: Vec<Result<SolvedEntry>> = pool.install(|| menu.par_iter().map(|e| solve_entry(e, p, settings)).collect());
    let mut solved = Vec::new();
    let mut skipped = Vec::new();
    for (e, r) in menu.iter().zip(results) {
        match r {
            Ok(s) => solved.push(s),
            Err(err) => {
                log::warn!("menu entry skipped: {e:?}: {err}");
                skipped.push(format!("{e:?}: {err}"));
            }
        }
    }
    Ok((solved, skipped))
}

pub fn generate_library(p: &VehicleParams, settings: &OcpSettings, eta: f64, jobs: usize) -> Result<Library> {
    generate_from_menu(&default_menu(), p, settings, eta, jobs)
}

pub fn generate_from_menu(menu: &[MenuEntry], p: &VehicleParams, settings: &OcpSettings, eta: f64, jobs: usize) -> Result<Library> {
    if !(eta >= 1.0) {
        return Err(Error::InvalidParameter(format!("eta must be at least 1, got {eta}")));
    }
    let (solved, mut skipped) = solve_menu(menu, p, settings, jobs)?;
    let mut seeds = Vec::new();
    for se in &solved {
        match seed_primitive(se, p) {
            Ok(m) => seeds.push(m),
            Err(err) => skipped.push(format!("{:?}: {err}", se.entry)),
        }
    }
    let expanded = expand_by_symmetry(&seeds, p, settings.tightening)?;
    let (kept, removed) = reduce_set(&expanded, eta);
    let mut new_id = vec![u32::MAX; expanded.len()];
    let mut prims = Vec::with_capacity(kept.len());
    for (j, &k) in kept.iter().enumerate() {
        new_id[k] = j as u32;
        let mut m = expanded[k].clone();
        m.id = j as u32;
        prims.push(m);
    }
    let reductions = removed
        .into_iter()
        .map(|(k, chain, c)| {
            let m = &expanded[k];
            Reduction {
                from: m.from,
                to: m.to,
                direction: m.direction,
                cost: m.cost,
                composition: chain.iter().map(|&i| new_id[i]).collect(),
                composition_cost: c,
            }
        })
        .collect();
    if prims.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    let header = LibraryHeader {
        version: LIBRARY_VERSION,
        params_hash: params_hash(p),
        params: *p,
        ds: settings.max_step,
        tightening: settings.tightening,
        eta,
        intervals: settings.intervals,
        expanded: expanded.len(),
        skipped,
    };
    Ok(Library::new(header, prims, reductions))
}

/// Load the library at `path` if it was generated for these inputs, otherwise generate
/// and store it there.
pub fn load_or_generate(path: &Path, p: &VehicleParams, settings: &OcpSettings, eta: f64, jobs: usize) -> Result<Library> {
    if path.exists() {
        match Library::load(path) {
            Ok(lib) if lib.matches(p, settings, eta) => return Ok(lib),
            Ok(_) => log::info!("cached library at {} is stale; regenerating", path.display()),
            Err(e) => log::info!("cached library at {} unreadable ({e}); regenerating", path.display()),
        }
    }
    let lib = generate_library(p, settings, eta, jobs)?;
    lib.save(path)?;
    Ok(lib)
}

/// Chain a reduction certificate from the origin and return its end state and cost.
pub fn replay_composition(lib: &Library, chain: &[u32]) -> Result<(LatticeState, f64)> {
    let Some(&first) = chain.first() else {
        return Err(Error::InvalidParameter("empty composition".into()));
    };
    let mut at = lib.get(first).from;
    let mut cost = 0.0;
    for (i, &id) in chain.iter().enumerate() {
        let m = lib.get(id);
        if (m.from.itheta, m.from.ialpha) != (at.itheta, at.ialpha) {
            return Err(Error::ChainMismatch(i));
        }
        at = LatticeState::new(at.ix + m.to.ix, at.iy + m.to.iy, m.to.itheta, m.to.ialpha);
        cost += m.cost;
    }
    Ok((at, cost))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(cells: i32, p: &VehicleParams) -> MotionPrimitive {
        let from = LatticeState::new(0, 0, 0, 1);
        let prof = ControlProfile::constant(Direction::Forward, 0.0, cells as f64);
        let path = integrate(&from.decode(p).unwrap(), &prof, 0.1, p).unwrap();
        MotionPrimitive {
            id: 0,
            from,
            to: LatticeState::new(cells, 0, 0, 1),
            direction: Direction::Forward,
            length: cells as f64,
            cost: path_cost(&path, &CostWeights::forward()),
            step: 0.1,
            path,
            progenitor: None,
            orbit: cells as u32,
        }
    }

    #[test]
    fn exact_duplicate_is_removed() {
        let p = VehicleParams::default();
        let mut a = straight(1, &p);
        let mut b = straight(1, &p);
        a.orbit = 0;
        b.orbit = 1;
        let (kept, removed) = reduce_set(&[a, b], 1.0);
        assert_eq!(kept.len(), 1);
        assert_eq!(removed.len(), 1);
        assert_eq!(removed[0].1.len(), 1);
    }

    #[test]
    fn minimal_straight_set_is_kept() {
        let p = VehicleParams::default();
        let set = [straight(1, &p)];
        let (kept, removed) = reduce_set(&set, 1.0);
        assert_eq!(kept, vec![0]);
        assert!(removed.is_empty());
    }

    #[test]
    fn double_straight_is_composite() {
        let p = VehicleParams::default();
        let set = [straight(1, &p), straight(2, &p)];
        let (kept, removed) = reduce_set(&set, 1.0);
        assert_eq!(kept, vec![0]);
        assert_eq!(removed[0].1, vec![0, 0]);
    }

    #[test]
    fn backward_straight_reverses_forward() {
        let p = VehicleParams::default();
        let f = straight(1, &p);
        let b = make_backward_primitive(&f, &CostWeights::forward());
        assert_eq!(b.direction, Direction::Backward);
        assert_eq!(b.to, LatticeState::new(-1, 0, 0, 1));
        assert!((b.cost - f.cost).abs() < 1e-12);
        validate_primitive(&b, &p, 0.8).unwrap();
    }

    #[test]
    fn full_turn_is_identity() {
        let p = VehicleParams::default();
        let m = straight(2, &p);
        let r = Symmetry { rot: 1, mirror: false };
        let back = m.transformed(r).transformed(r).transformed(r).transformed(r);
        assert_eq!(back.from, m.from);
        assert_eq!(back.to, m.to);
        for (a, b) in back.path.states.iter().zip(&m.path.states) {
            assert!((a.state.x3 - b.state.x3).abs() < 1e-12 && (a.state.y3 - b.state.y3).abs() < 1e-12);
            assert!(wrap_angle(a.state.theta3 - b.state.theta3).abs() < 1e-12);
        }
    }
}
