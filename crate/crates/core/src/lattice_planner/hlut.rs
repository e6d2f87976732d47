//! Free-space cost-to-go table from the canonical start states.

use std::collections::{BinaryHeap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::primitive_gen::{canonical_heading, LatticeState, RESOLUTION, STEERING_SET};
use crate::primitive_gen::Library;

const MAGIC: &[u8; 4] = b"G2TH";
const VERSION: u32 = 1;

/// Default cut-off cost of the table.
pub const DEFAULT_CUTOFF: f64 = 170.0;

/// Key of one table entry: goal offset, goal heading and goal steering index.
type Key = (i32, i32, u8, u8);

#[derive(Clone, Debug, PartialEq)]
pub struct Hlut {
    pub cutoff: f64,
    /// Fingerprint of the library the table was built from.
    pub library: String,
    /// One table per canonical start, indexed `3 * heading + steering`.
    tables: Vec<HashMap<Key, f64>>,
}

/// Hash over the graph-relevant content of a library.
pub fn library_fingerprint(lib: &Library) -> String {
    let mut h = Sha256::new();
    for m in &lib.primitives {
        for s in [m.from, m.to] {
            h.update(s.ix.to_le_bytes());
            h.update(s.iy.to_le_bytes());
            h.update([s.itheta, s.ialpha]);
        }
        h.update(m.cost.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Dijkstra over the obstacle-free lattice from `start`; every state settled at a
/// cost of at most `cutoff` is returned.
pub fn free_space_costs(lib: &Library, start: LatticeState, cutoff: f64) -> HashMap<LatticeState, f64> {
    let mut best: HashMap<LatticeState, f64> = HashMap::new();
    let mut done: HashMap<LatticeState, f64> = HashMap::new();
    let mut open = BinaryHeap::new();
    best.insert(start, 0.0);
    open.push(Entry(0.0, start));
    while let Some(Entry(g, s)) = open.pop() {
        if g > cutoff {
            break;
        }
        if done.contains_key(&s) || g > best[&s] {
            continue;
        }
        done.insert(s, g);
        for &k in lib.successors(&s) {
            let m = &lib.primitives[k];
            let t = LatticeState::new(s.ix + m.to.ix, s.iy + m.to.iy, m.to.itheta, m.to.ialpha);
            let gt = g + m.cost;
            if gt <= cutoff && best.get(&t).is_none_or(|&b| gt < b) {
                best.insert(t, gt);
                open.push(Entry(gt, t));
            }
        }
    }
    done
}

struct Entry(f64, LatticeState);

impl PartialEq for Entry {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o).is_eq()
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Entry {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        let key = |s: &LatticeState| (s.ix, s.iy, s.itheta, s.ialpha);
        o.0.total_cmp(&self.0).then_with(|| key(&o.1).cmp(&key(&self.1)))
    }
}

pub fn build_hlut(lib: &Library, cutoff: f64) -> Hlut {
    let tables = (0..3 * STEERING_SET.len())
        .into_par_iter()
        .map(|i| {
            let start = LatticeState::new(0, 0, (i / 3) as u8, (i % 3) as u8);
            free_space_costs(lib, start, cutoff)
                .into_iter()
                .map(|(s, g)| ((s.ix, s.iy, s.itheta, s.ialpha), g))
                .collect()
        })
        .collect();
    Hlut { cutoff, library: library_fingerprint(lib), tables }
}

impl Hlut {
    pub fn len(&self) -> usize {
        self.tables.iter().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Free-space optimal cost from `s` to `g`, if it is at most the cut-off.
    pub fn lookup(&self, s: &LatticeState, g: &LatticeState) -> Option<f64> {
        let (sym, k) = canonical_heading(s.itheta);
        let a = sym.map_alpha_index(s.ialpha);
        let (dx, dy) = sym.map_cell(g.ix - s.ix, g.iy - s.iy);
        let key = (dx, dy, sym.map_heading(g.itheta), sym.map_alpha_index(g.ialpha));
        self.tables[3 * k as usize + a as usize].get(&key).copied()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_f64::<LittleEndian>(self.cutoff)?;
        let fp = self.library.as_bytes();
        w.write_u32::<LittleEndian>(fp.len() as u32)?;
        w.write_all(fp)?;
        w.write_u32::<LittleEndian>(self.tables.len() as u32)?;
        for t in &self.tables {
            let mut entries: Vec<_> = t.iter().collect();
            entries.sort_by_key(|(k, _)| **k);
            w.write_u64::<LittleEndian>(entries.len() as u64)?;
            for (&(dx, dy, th, a), &c) in entries {
                w.write_i32::<LittleEndian>(dx)?;
                w.write_i32::<LittleEndian>(dy)?;
                w.write_u8(th)?;
                w.write_u8(a)?;
                w.write_f64::<LittleEndian>(c)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a heuristic table".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!("heuristic table version {version}, expected {VERSION}")));
        }
        let cutoff = r.read_f64::<LittleEndian>()?;
        let mut fp = vec![0u8; r.read_u32::<LittleEndian>()? as usize];
        r.read_exact(&mut fp)?;
        let library = String::from_utf8(fp).map_err(|e| Error::Format(e.to_string()))?;
        let n = r.read_u32::<LittleEndian>()? as usize;
        let mut tables = Vec::with_capacity(n);
        for _ in 0..n {
            let m = r.read_u64::<LittleEndian>()? as usize;
            let mut t = HashMap::with_capacity(m);
            for _ in 0..m {
                let dx = r.read_i32::<LittleEndian>()?;
                let dy = r.read_i32::<LittleEndian>()?;
                let th = r.read_u8()?;
                let a = r.read_u8()?;
                t.insert((dx, dy, th, a), r.read_f64::<LittleEndian>()?);
            }
            tables.push(t);
        }
        Ok(Self { cutoff, library, tables })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        let mut w = std::io::BufWriter::new(&mut tmp);
        self.write_to(&mut w)?;
        w.flush()?;
        drop(w);
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Larger of the Euclidean distance and the table value. A state missing from a
/// complete table costs more than the cut-off, which is then used as the bound.
/// The distance is shrunk slightly: primitive costs are quadrature sums and a
/// straight diagonal can come out an ulp below its length.
pub fn heuristic(s: &LatticeState, g: &LatticeState, hlut: Option<&Hlut>) -> f64 {
    let e = (((g.ix - s.ix) as f64).powi(2) + ((g.iy - s.iy) as f64).powi(2)).sqrt() * RESOLUTION * (1.0 - 1e-9);
    match hlut {
        None => e,
        Some(t) => e.max(t.lookup(s, g).unwrap_or(t.cutoff)),
    }
}

/// Table for `lib` read from `path`, or built and written there when missing or stale.
pub fn load_or_build(path: &Path, lib: &Library, cutoff: f64) -> Result<Hlut> {
    if let Ok(t) = Hlut::load(path) {
        if t.cutoff == cutoff && t.library == library_fingerprint(lib) {
            return Ok(t);
        }
    }
    let t = build_hlut(lib, cutoff);
    t.save(path)?;
    Ok(t)
}
