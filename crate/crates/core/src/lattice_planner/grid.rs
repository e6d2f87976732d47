//! Occupancy grid with a conservative inflation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major occupancy grid; row 0 is the bottom row (smallest y).
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// World position of the lower-left corner of cell (0, 0).
    pub origin: [f64; 2],
    raw: Vec<bool>,
    /// Occupancy after inflation.
    cells: Vec<bool>,
    inflation: f64,
}

/// On-disk JSON form. `data` is row-major from the bottom row, nonzero = occupied.
#[derive(Serialize, Deserialize)]
struct GridFile {
    resolution: f64,
    width: usize,
    height: usize,
    origin: [f64; 2],
    data: Vec<u8>,
}

/// Sidecar of a PGM map.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PgmMeta {
    pub resolution: f64,
    pub origin: [f64; 2],
    /// Pixels darker than this are occupied.
    #[serde(default = "default_threshold")]
    pub occupied_below: u8,
}

fn default_threshold() -> u8 {
    128
}

impl OccupancyGrid {
    pub fn new(resolution: f64, width: usize, height: usize, origin: [f64; 2]) -> Result<Self> {
        if !(resolution > 0.0) || width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!("grid {width}x{height} at resolution {resolution}")));
        }
        let n = width * height;
        Ok(Self { resolution, width, height, origin, raw: vec![false; n], cells: vec![false; n], inflation: 0.0 })
    }

    pub fn inflation(&self) -> f64 {
        self.inflation
    }

    fn index(&self, cx: i64, cy: i64) -> Option<usize> {
        (cx >= 0 && cy >= 0 && (cx as usize) < self.width && (cy as usize) < self.height)
            .then(|| cy as usize * self.width + cx as usize)
    }

    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin[0]) / self.resolution).floor() as i64,
            ((y - self.origin[1]) / self.resolution).floor() as i64,
        )
    }

    /// Mark a raw cell occupied. Call [`OccupancyGrid::inflate`] afterwards.
    pub fn set_occupied(&mut self, cx: usize, cy: usize, occ: bool) {
        if let Some(i) = self.index(cx as i64, cy as i64) {
            self.raw[i] = occ;
        }
    }

    pub fn fill(&mut self, occ: bool) {
        self.raw.iter_mut().for_each(|c| *c = occ);
    }

    pub fn is_raw_occupied(&self, cx: usize, cy: usize) -> bool {
        self.index(cx as i64, cy as i64).is_some_and(|i| self.raw[i])
    }

    pub fn raw_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.raw.iter().enumerate().filter(|(_, &o)| o).map(|(i, _)| (i % self.width, i / self.width))
    }

    /// Occupancy after inflation at a world point; `None` outside the grid.
    pub fn occupied_at(&self, x: f64, y: f64) -> Option<bool> {
        let (cx, cy) = self.cell_of(x, y);
        self.index(cx, cy).map(|i| self.cells[i])
    }

    /// Mark every cell whose square lies within `radius` of an occupied square.
    /// A disc of that radius centred anywhere in a free cell then misses all obstacles.
    pub fn inflate(&mut self, radius: f64) {
        let r = self.resolution;
        let reach = (radius / r).ceil() as i64 + 1;
        let mut offsets = Vec::new();
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let gx = (dx.abs() - 1).max(0) as f64 * r;
                let gy = (dy.abs() - 1).max(0) as f64 * r;
                if gx.hypot(gy) <= radius {
                    offsets.push((dx, dy));
                }
            }
        }
        self.cells = self.raw.clone();
        for (cx, cy) in self.raw_cells().collect::<Vec<_>>() {
            for &(dx, dy) in &offsets {
                if let Some(i) = self.index(cx as i64 + dx, cy as i64 + dy) {
                    self.cells[i] = true;
                }
            }
        }
        self.inflation = radius;
    }

    pub fn to_json(&self) -> Result<String> {
        let f = GridFile {
            resolution: self.resolution,
            width: self.width,
            height: self.height,
            origin: self.origin,
            data: self.raw.iter().map(|&o| o as u8).collect(),
        };
        Ok(serde_json::to_string(&f)?)
    }

    /// Raw (uninflated) grid from JSON.
    pub fn from_json(text: &str) -> Result<Self> {
        let f: GridFile = serde_json::from_str(text)?;
        let mut g = Self::new(f.resolution, f.width, f.height, f.origin)?;
        if f.data.len() != f.width * f.height {
            return Err(Error::Format(format!("grid data has {} cells, expected {}", f.data.len(), f.width * f.height)));
        }
        g.raw = f.data.iter().map(|&v| v != 0).collect();
        g.cells = g.raw.clone();
        Ok(g)
    }

    /// Raw grid from a PGM image. The top image row is the top of the map.
    pub fn from_pgm(path: &Path, meta: &PgmMeta) -> Result<Self> {
        let img = image::ImageReader::open(path)?
            .with_guessed_format()?
            .decode()
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
            .into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut g = Self::new(meta.resolution, w, h, meta.origin)?;
        for (x, y, px) in img.enumerate_pixels() {
            g.raw[(h - 1 - y as usize) * w + x as usize] = px.0[0] < meta.occupied_below;
        }
        g.cells = g.raw.clone();
        Ok(g)
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let mut img = image::GrayImage::new(self.width as u32, self.height as u32);
        for (x, y, px) in img.enumerate_pixels_mut() {
            let occ = self.raw[(self.height - 1 - y as usize) * self.width + x as usize];
            px.0[0] = if occ { 0 } else { 255 };
        }
        img.save_with_format(path, image::ImageFormat::Pnm).map_err(|e| Error::Format(e.to_string()))
    }

    /// Load a `.json` grid, or a `.pgm` with its sidecar `<stem>.json`.
    pub fn load(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("pgm") => {
                let meta: PgmMeta = serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
                Self::from_pgm(path, &meta)
            }
            _ => Self::from_json(&std::fs::read_to_string(path)?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inflation_keeps_discs_clear() {
        let mut g = OccupancyGrid::new(0.5, 40, 40, [-10.0, -10.0]).unwrap();
        g.set_occupied(20, 20, true);
        g.inflate(1.3);
        // Any free point is farther than the radius from the occupied square [0, 0.5]^2.
        for i in 0..400 {
            for j in 0..400 {
                let (x, y) = (-10.0 + 0.05 * i as f64 + 0.025, -10.0 + 0.05 * j as f64 + 0.025);
                if g.occupied_at(x, y) == Some(false) {
                    let dx = (0.0 - x).max(x - 0.5).max(0.0);
                    let dy = (0.0 - y).max(y - 0.5).max(0.0);
                    assert!(dx.hypot(dy) > 1.3);
                }
            }
        }
        assert_eq!(g.occupied_at(0.25, 0.25), Some(true));
        assert_eq!(g.occupied_at(100.0, 0.0), None);
    }

    #[test]
    fn json_and_pgm_round_trip() {
        let mut g = OccupancyGrid::new(0.25, 7, 5, [1.0, -2.0]).unwrap();
        g.set_occupied(1, 0, true);
        g.set_occupied(6, 4, true);
        let back = OccupancyGrid::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back.raw, g.raw);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        g.save_pgm(&p).unwrap();
        let meta = PgmMeta { resolution: 0.25, origin: [1.0, -2.0], occupied_below: 128 };
        std::fs::write(p.with_extension("json"), serde_json::to_string(&meta).unwrap()).unwrap();
        let back = OccupancyGrid::load(&p).unwrap();
        assert_eq!(back.raw, g.raw);
        assert!(back.is_raw_occupied(6, 4) && !back.is_raw_occupied(0, 4));
    }
}
