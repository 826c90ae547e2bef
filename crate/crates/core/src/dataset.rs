//! Synthetic rooms-and-corridors maps with simulated trajectories, the
//! on-disk dataset layout, map-level splitting and a random-walk baseline.
//!
//! A dataset directory holds `manifest.json`, one `.occ` file per map under
//! `maps/` and one trajectory CSV per map under `trajectories/`. Paths in the
//! manifest are relative to the manifest's directory.

use std::collections::{HashSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{load_trajectories, save_trajectories, DiscreteTrajectory};
use crate::grid::{cell_center, load_grid, save_grid, OccupancyGrid};
use crate::{Error, Exec, Point, Result};

pub const MANIFEST_VERSION: u32 = 1;
const SMOOTHING_WINDOW: usize = 5;
const WALL_MARGIN: u32 = 3;
const WALL_PENALTY: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub rows: usize,
    pub cols: usize,
    pub min_rooms: usize,
    pub max_rooms: usize,
    pub corridor_width: usize,
    pub trajectories_per_map: usize,
    /// Waypoints per trajectory.
    pub waypoints: usize,
    pub num_maps: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            rows: 32,
            cols: 32,
            min_rooms: 2,
            max_rooms: 3,
            corridor_width: 4,
            trajectories_per_map: 48,
            waypoints: 100,
            num_maps: 120,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rows", self.rows),
            ("cols", self.cols),
            ("corridor_width", self.corridor_width),
            ("trajectories_per_map", self.trajectories_per_map),
            ("num_maps", self.num_maps),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.min_rooms < 2 || self.max_rooms < self.min_rooms {
            return Err(Error::invalid(format!(
                "room count range {}..={} must satisfy 2 <= min <= max",
                self.min_rooms, self.max_rooms
            )));
        }
        if self.waypoints < 2 {
            return Err(Error::invalid("waypoints per trajectory must be at least 2"));
        }
        Ok(())
    }

    /// Side of the square slot layout rooms are placed in.
    fn slots_per_side(&self) -> usize {
        let mut s = 2;
        while s * s < self.max_rooms {
            s += 1;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub map_id: String,
    pub grid: OccupancyGrid,
    pub trajectories: Vec<DiscreteTrajectory>,
}

impl Entry {
    pub fn new(map_id: impl Into<String>, grid: OccupancyGrid, trajectories: Vec<DiscreteTrajectory>) -> Result<Self> {
        let entry = Entry {
            map_id: map_id.into(),
            grid,
            trajectories,
        };
        entry.check()?;
        Ok(entry)
    }

    fn check(&self) -> Result<()> {
        if self.trajectories.is_empty() {
            return Err(Error::Dataset(format!("map {} has no trajectories", self.map_id)));
        }
        for (i, t) in self.trajectories.iter().enumerate() {
            if let Some(j) = t.waypoints().iter().position(|p| self.grid.is_occupied(*p)) {
                return Err(Error::Dataset(format!(
                    "map {}: trajectory {i} waypoint {j} lies in an occupied cell",
                    self.map_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Generator settings when the dataset was synthesised.
    pub params: Option<SynthParams>,
    pub entries: Vec<Entry>,
}

impl Dataset {
    pub fn new(params: Option<SynthParams>, entries: Vec<Entry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.map_id.as_str()) {
                return Err(Error::Dataset(format!("duplicate map id {}", e.map_id)));
            }
            e.check()?;
        }
        Ok(Dataset { params, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, map_id: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.map_id == map_id)
    }

    pub fn map_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.map_id.as_str()).collect()
    }
}

pub fn map_id(index: usize) -> String {
    format!("map_{index:03}")
}

/// Independent generator for map `index`, so synthesis order does not matter.
pub fn map_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Room {
    r0: usize,
    c0: usize,
    h: usize,
    w: usize,
}

impl Room {
    fn center_cell(&self) -> (usize, usize) {
        (self.r0 + self.h / 2, self.c0 + self.w / 2)
    }

    fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.r0 && r < self.r0 + self.h && c >= self.c0 && c < self.c0 + self.w
    }
}

/// A synthesised map with the rooms it was built from.
#[derive(Debug, Clone)]
pub struct SynthMap {
    pub grid: OccupancyGrid,
    rooms: Vec<Room>,
}

impl SynthMap {
    pub fn num_rooms(&self) -> usize {
        self.rooms.len()
    }

    /// Index of the room containing `p`, if any.
    pub fn room_of(&self, p: Point) -> Option<usize> {
        let (r, c) = self.grid.cell_of(p)?;
        self.rooms.iter().position(|room| room.contains(r, c))
    }
}

/// Rooms are rectangles placed in distinct slots of a square slot layout and
/// chained by L-shaped corridors in slot order.
pub fn synth_map<R: Rng + ?Sized>(params: &SynthParams, rng: &mut R) -> Result<SynthMap> {
    params.validate()?;
    let s = params.slots_per_side();
    let slot_h = (params.rows.saturating_sub(2)) / s;
    let slot_w = (params.cols.saturating_sub(2)) / s;
    if slot_h < 5 || slot_w < 5 || params.corridor_width + 2 > params.rows.min(params.cols) {
        return Err(Error::invalid(format!(
            "a {}x{} grid is too small for {} rooms with corridor width {}",
            params.rows, params.cols, params.max_rooms, params.corridor_width
        )));
    }
    let n_rooms = rng.random_range(params.min_rooms..=params.max_rooms);
    let mut slots: Vec<usize> = (0..s * s).collect();
    slots.shuffle(rng);
    let mut slots = slots[..n_rooms].to_vec();
    slots.sort_unstable();

    let mut grid = OccupancyGrid::filled(params.rows, params.cols, true)?;
    let mut rooms = Vec::with_capacity(n_rooms);
    for &slot in &slots {
        let (sr, sc) = (slot / s, slot % s);
        // Centres are fixed per slot; only the extents vary.
        let h = rng.random_range(slot_h / 2..=(slot_h * 3 / 4).max(slot_h / 2)).max(3);
        let w = rng.random_range(slot_w / 2..=(slot_w * 3 / 4).max(slot_w / 2)).max(3);
        let r0 = 1 + sr * slot_h + slot_h / 2 - h / 2;
        let c0 = 1 + sc * slot_w + slot_w / 2 - w / 2;
        let room = Room { r0, c0, h, w };
        for r in room.r0..room.r0 + h {
            for c in room.c0..room.c0 + w {
                grid.set(r, c, false);
            }
        }
        rooms.push(room);
    }
    for pair in rooms.windows(2) {
        let horizontal_first = rng.random_bool(0.5);
        carve_corridor(
            &mut grid,
            pair[0].center_cell(),
            pair[1].center_cell(),
            params.corridor_width,
            horizontal_first,
        );
    }
    if !is_connected(&grid) {
        return Err(Error::Dataset("synthesised map is not connected".into()));
    }
    Ok(SynthMap { grid, rooms })
}

fn carve_corridor(
    grid: &mut OccupancyGrid,
    a: (usize, usize),
    b: (usize, usize),
    width: usize,
    horizontal_first: bool,
) {
    let corner = if horizontal_first { (a.0, b.1) } else { (b.0, a.1) };
    carve_segment(grid, a, corner, width);
    carve_segment(grid, corner, b, width);
}

/// Carves a straight segment between two cells as a band of `width` cells
/// centred on the segment, clipped to the inside of the boundary ring.
fn carve_segment(grid: &mut OccupancyGrid, a: (usize, usize), b: (usize, usize), width: usize) {
    let (lo, hi) = ((width - 1) / 2, width / 2);
    let r_lo = a.0.min(b.0).saturating_sub(lo).max(1);
    let r_hi = (a.0.max(b.0) + hi).min(grid.rows() - 2);
    let c_lo = a.1.min(b.1).saturating_sub(lo).max(1);
    let c_hi = (a.1.max(b.1) + hi).min(grid.cols() - 2);
    for r in r_lo..=r_hi {
        for c in c_lo..=c_hi {
            grid.set(r, c, false);
        }
    }
}

const NEIGHBOURS: [(i64, i64); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

fn free_neighbours(grid: &OccupancyGrid, (r, c): (usize, usize)) -> impl Iterator<Item = (usize, usize)> + '_ {
    NEIGHBOURS.iter().filter_map(move |&(dr, dc)| {
        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
        if nr < 0 || nc < 0 || nr as usize >= grid.rows() || nc as usize >= grid.cols() {
            return None;
        }
        let cell = (nr as usize, nc as usize);
        (!grid.get(cell.0, cell.1)).then_some(cell)
    })
}

/// True when every free cell is 4-connected to every other.
pub fn is_connected(grid: &OccupancyGrid) -> bool {
    let free = grid.free_cells();
    let Some(&start) = free.first() else {
        return true;
    };
    let mut seen = vec![false; grid.rows() * grid.cols()];
    let mut queue = VecDeque::from([start]);
    seen[start.0 * grid.cols() + start.1] = true;
    let mut reached = 1;
    while let Some(cell) = queue.pop_front() {
        for n in free_neighbours(grid, cell) {
            let idx = n.0 * grid.cols() + n.1;
            if !seen[idx] {
                seen[idx] = true;
                reached += 1;
                queue.push_back(n);
            }
        }
    }
    reached == free.len()
}

/// Chebyshev distance from each cell to the nearest occupied cell (0 for
/// occupied cells), row-major.
pub fn clearance(grid: &OccupancyGrid) -> Vec<u32> {
    let (rows, cols) = (grid.rows(), grid.cols());
    let mut dist = vec![u32::MAX; rows * cols];
    let mut queue = VecDeque::new();
    for r in 0..rows {
        for c in 0..cols {
            // Cells on the edge border the outside, which counts as occupied.
            if grid.get(r, c) {
                dist[r * cols + c] = 0;
                queue.push_back((r, c));
            } else if r == 0 || c == 0 || r + 1 == rows || c + 1 == cols {
                dist[r * cols + c] = 1;
                queue.push_back((r, c));
            }
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        let d = dist[r * cols + c] + 1;
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < 0 || nc < 0 || nr as usize >= rows || nc as usize >= cols {
                    continue;
                }
                let idx = nr as usize * cols + nc as usize;
                if dist[idx] > d {
                    dist[idx] = d;
                    queue.push_back((nr as usize, nc as usize));
                }
            }
        }
    }
    dist
}

/// Least-cost 4-neighbour path between two free cells, inclusive. Entering a
/// cell costs one step plus `wall_penalty` for every unit its clearance falls
/// short of `margin`, so routes keep to the middle of corridors where they
/// can. Ties resolve by cell index, which keeps the result deterministic.
pub fn clear_path(
    grid: &OccupancyGrid,
    from: (usize, usize),
    to: (usize, usize),
    margin: u32,
    wall_penalty: u64,
) -> Option<Vec<(usize, usize)>> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    if grid.get(from.0, from.1) || grid.get(to.0, to.1) {
        return None;
    }
    let cols = grid.cols();
    let clear = clearance(grid);
    let step = |idx: usize| 1 + wall_penalty * u64::from(margin.saturating_sub(clear[idx]));
    let mut cost = vec![u64::MAX; grid.rows() * cols];
    let mut prev = vec![usize::MAX; grid.rows() * cols];
    let (start, goal) = (from.0 * cols + from.1, to.0 * cols + to.1);
    cost[start] = 0;
    let mut heap = BinaryHeap::from([Reverse((0u64, start))]);
    while let Some(Reverse((d, idx))) = heap.pop() {
        if d > cost[idx] {
            continue;
        }
        if idx == goal {
            let mut path = vec![to];
            let mut i = goal;
            while i != start {
                i = prev[i];
                path.push((i / cols, i % cols));
            }
            path.reverse();
            return Some(path);
        }
        for n in free_neighbours(grid, (idx / cols, idx % cols)) {
            let ni = n.0 * cols + n.1;
            let nd = d + step(ni);
            if nd < cost[ni] {
                cost[ni] = nd;
                prev[ni] = idx;
                heap.push(Reverse((nd, ni)));
            }
        }
    }
    None
}

/// Breadth-first shortest 4-neighbour path between two free cells, inclusive.
pub fn shortest_path(grid: &OccupancyGrid, from: (usize, usize), to: (usize, usize)) -> Option<Vec<(usize, usize)>> {
    if grid.get(from.0, from.1) || grid.get(to.0, to.1) {
        return None;
    }
    let cols = grid.cols();
    let mut prev = vec![usize::MAX; grid.rows() * cols];
    let start = from.0 * cols + from.1;
    prev[start] = start;
    let mut queue = VecDeque::from([from]);
    while let Some(cell) = queue.pop_front() {
        if cell == to {
            let mut path = vec![to];
            let mut idx = to.0 * cols + to.1;
            while idx != start {
                idx = prev[idx];
                path.push((idx / cols, idx % cols));
            }
            path.reverse();
            return Some(path);
        }
        for n in free_neighbours(grid, cell) {
            let idx = n.0 * cols + n.1;
            if prev[idx] == usize::MAX {
                prev[idx] = cell.0 * cols + cell.1;
                queue.push_back(n);
            }
        }
    }
    None
}

/// Centred moving average; the window shrinks near the ends so both endpoints
/// stay fixed.
pub fn smooth(points: &[Point], window: usize) -> Vec<Point> {
    let half = window / 2;
    let n = points.len();
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let span = &points[i - h..=i + h];
            let k = span.len() as f64;
            Point::new(
                span.iter().map(|p| p.x).sum::<f64>() / k,
                span.iter().map(|p| p.y).sum::<f64>() / k,
            )
        })
        .collect()
}

/// Resamples a polyline to `n` points equally spaced in arc length.
pub fn resample(points: &[Point], n: usize) -> Vec<Point> {
    assert!(!points.is_empty() && n >= 2);
    let mut cum = Vec::with_capacity(points.len());
    cum.push(0.0);
    for pair in points.windows(2) {
        let last = *cum.last().unwrap();
        cum.push(last + pair[0].dist(pair[1]));
    }
    let total = *cum.last().unwrap();
    if total == 0.0 {
        return vec![points[0]; n];
    }
    let mut seg = 0;
    (0..n)
        .map(|i| {
            if i == n - 1 {
                return *points.last().unwrap();
            }
            let s = total * i as f64 / (n - 1) as f64;
            while seg + 2 < cum.len() && cum[seg + 1] < s {
                seg += 1;
            }
            let len = cum[seg + 1] - cum[seg];
            let t = if len > 0.0 {
                ((s - cum[seg]) / len).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (a, b) = (points[seg], points[seg + 1]);
            Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
        })
        .collect()
}

/// Trajectories between the centres of the first and last room of the
/// corridor chain along the shortest path, alternating direction so both
/// directions of travel are present.
pub fn synth_trajectories(map: &SynthMap, params: &SynthParams) -> Result<Vec<DiscreteTrajectory>> {
    let n = map.rooms.len();
    if n < 2 {
        return Err(Error::Dataset("need at least two rooms".into()));
    }
    let (a, b) = (0, n - 1);
    let grid = &map.grid;
    (0..params.trajectories_per_map)
        .map(|k| {
            let (from, to) = if k % 2 == 0 { (a, b) } else { (b, a) };
            let path = clear_path(
                grid,
                map.rooms[from].center_cell(),
                map.rooms[to].center_cell(),
                WALL_MARGIN,
                WALL_PENALTY,
            )
            .expect("rooms of a connected map are mutually reachable");
            let raw: Vec<Point> = path.iter().map(|&(r, c)| cell_center(r, c)).collect();
            let smoothed = resample(&smooth(&raw, SMOOTHING_WINDOW), params.waypoints);
            let waypoints = if smoothed.iter().any(|p| grid.is_occupied(*p)) {
                resample(&raw, params.waypoints)
            } else {
                smoothed
            };
            DiscreteTrajectory::new(waypoints)
        })
        .collect()
}

pub fn synth_entry(params: &SynthParams, index: usize) -> Result<Entry> {
    let mut rng = map_rng(params.seed, index);
    let map = synth_map(params, &mut rng)?;
    let trajectories = synth_trajectories(&map, params)?;
    Entry::new(map_id(index), map.grid, trajectories)
}

pub fn synth_dataset(params: &SynthParams, exec: Exec) -> Result<Dataset> {
    params.validate()?;
    let entries = exec.try_map_range(params.num_maps, |i| synth_entry(params, i))?;
    Dataset::new(Some(params.clone()), entries)
}

/// Seeded map-level split; the train side gets `floor(fraction * N)` maps,
/// clamped so each side keeps at least one. Entries keep their input order.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::Dataset(format!("cannot split {n} map(s)")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction {train_fraction} outside (0,1)")));
    }
    let n_train = ((train_fraction * n as f64).floor() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_train = vec![false; n];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    let pick = |want: bool| Dataset {
        params: dataset.params.clone(),
        entries: dataset
            .entries
            .iter()
            .zip(&is_train)
            .filter(|(_, &t)| t == want)
            .map(|(e, _)| e.clone())
            .collect(),
    };
    Ok((pick(true), pick(false)))
}

/// Random 4-neighbour walk over free cells, as cell centres. Returns `t_len`
/// waypoints starting at a uniformly chosen free cell.
pub fn random_baseline<R: Rng + ?Sized>(grid: &OccupancyGrid, t_len: usize, rng: &mut R) -> Result<DiscreteTrajectory> {
    let free = grid.free_cells();
    let Some(&start) = free.choose(rng) else {
        return Err(Error::invalid("map has no free cell"));
    };
    let mut cell = start;
    let mut out = Vec::with_capacity(t_len);
    out.push(cell_center(cell.0, cell.1));
    let mut options = Vec::with_capacity(4);
    while out.len() < t_len {
        options.clear();
        options.extend(free_neighbours(grid, cell));
        if let Some(&next) = options.choose(rng) {
            cell = next;
        }
        out.push(cell_center(cell.0, cell.1));
    }
    DiscreteTrajectory::new(out)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    params: Option<SynthParams>,
    entries: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    map_id: String,
    map: String,
    trajectories: String,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `dir/manifest.json`, `dir/maps/<id>.occ` and
/// `dir/trajectories/<id>.csv`; returns the manifest path.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    create_dir(&dir.join("maps"))?;
    create_dir(&dir.join("trajectories"))?;
    let mut entries = Vec::with_capacity(dataset.len());
    for e in &dataset.entries {
        if e.map_id.is_empty() || e.map_id.contains(['/', '\\']) || e.map_id.starts_with('.') {
            return Err(Error::Dataset(format!(
                "map id {:?} is not usable as a file name",
                e.map_id
            )));
        }
        let map = format!("maps/{}.occ", e.map_id);
        let trajectories = format!("trajectories/{}.csv", e.map_id);
        save_grid(&e.grid, dir.join(&map))?;
        save_trajectories(&e.trajectories, dir.join(&trajectories))?;
        entries.push(ManifestEntry {
            map_id: e.map_id.clone(),
            map,
            trajectories,
        });
    }
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        params: dataset.params.clone(),
        entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Loads a dataset from its manifest, re-validating every trajectory against
/// its map.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let path = manifest_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(Error::Dataset(format!(
            "unsupported manifest version {} (expected {MANIFEST_VERSION})",
            manifest.format_version
        )));
    }
    if let Some(p) = &manifest.params {
        p.validate()?;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let entries = manifest
        .entries
        .into_iter()
        .map(|m| {
            let grid = load_grid(base.join(&m.map))?;
            let trajectories = load_trajectories(base.join(&m.trajectories))?;
            Entry::new(m.map_id, grid, trajectories)
        })
        .collect::<Result<Vec<_>>>()?;
    if entries.is_empty() {
        return Err(Error::Dataset(format!("{}: manifest lists no maps", path.display())));
    }
    Dataset::new(manifest.params, entries)
}
