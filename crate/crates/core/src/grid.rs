//! Binary occupancy grids.
//!
//! World coordinates are in cell units: cell `(r, c)` covers
//! `x ∈ [c, c+1)`, `y ∈ [r, r+1)` and its center is `(c + 0.5, r + 0.5)`.
//!
//! The `.occ` text format is a `"<rows> <cols>"` header line followed by
//! exactly `rows` lines of `cols` characters from `{'0', '1'}`, each
//! newline-terminated.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Point, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyGrid {
    rows: usize,
    cols: usize,
    cells: Vec<u8>,
}

impl OccupancyGrid {
    /// Builds a grid from row-major cells, each 0 (free) or 1 (occupied).
    pub fn new(rows: usize, cols: usize, cells: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("grid must have at least one row and column"));
        }
        if cells.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: cells.len(),
            });
        }
        if let Some(v) = cells.iter().find(|&&v| v > 1) {
            return Err(Error::invalid(format!("cell value {v} is not 0 or 1")));
        }
        Ok(OccupancyGrid { rows, cols, cells })
    }

    pub fn filled(rows: usize, cols: usize, value: bool) -> Result<Self> {
        Self::new(rows, cols, vec![value as u8; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.cells[r * self.cols + c] == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, occupied: bool) {
        self.cells[r * self.cols + c] = occupied as u8;
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&v| v == 1).count()
    }

    pub fn free_count(&self) -> usize {
        self.cells.len() - self.occupied_count()
    }

    /// Free cells as `(row, col)` in row-major order.
    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .filter(|&(r, c)| !self.get(r, c))
            .collect()
    }

    /// The cell containing `p`, or `None` when `p` lies outside the grid.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        if !p.is_finite() {
            return None;
        }
        let c = p.x.floor();
        let r = p.y.floor();
        if c < 0.0 || r < 0.0 || c >= self.cols as f64 || r >= self.rows as f64 {
            return None;
        }
        Some((r as usize, c as usize))
    }

    /// True when the cell containing `p` is occupied. Points outside the grid
    /// (and non-finite points) count as occupied.
    pub fn is_occupied(&self, p: Point) -> bool {
        match self.cell_of(p) {
            Some((r, c)) => self.get(r, c),
            None => true,
        }
    }

    /// One point per occupied cell, at the cell center, in row-major order.
    pub fn occupied_points(&self) -> PointSet {
        let points = (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .filter(|&(r, c)| self.get(r, c))
            .map(|(r, c)| cell_center(r, c))
            .collect();
        PointSet(points)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let body = text.strip_suffix('\n').unwrap_or(text);
        let mut lines = body.split('\n');
        let header = lines.next().unwrap_or("");
        let (rows, cols) = header
            .split_once(' ')
            .and_then(|(r, c)| Some((parse_dim(r)?, parse_dim(c)?)))
            .ok_or_else(|| err(1, format!("bad header {header:?}, expected \"<rows> <cols>\"")))?;
        if rows == 0 || cols == 0 {
            return Err(err(1, "rows and cols must be positive".into()));
        }
        let mut cells = Vec::with_capacity(rows * cols);
        let mut seen = 0;
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            if seen == rows {
                return Err(err(lineno, "trailing content after last row".into()));
            }
            if line.len() != cols {
                return Err(err(
                    lineno,
                    format!("row has {} characters, expected {cols}", line.len()),
                ));
            }
            for ch in line.bytes() {
                match ch {
                    b'0' => cells.push(0),
                    b'1' => cells.push(1),
                    other => return Err(err(lineno, format!("unexpected character {:?}", other as char))),
                }
            }
            seen += 1;
        }
        if seen != rows {
            return Err(err(seen + 2, format!("found {seen} rows, expected {rows}")));
        }
        Self::new(rows, cols, cells)
    }

    pub fn to_occ_string(&self) -> String {
        let mut out = String::with_capacity((self.cols + 1) * (self.rows + 1));
        let _ = writeln!(out, "{} {}", self.rows, self.cols);
        for row in self.cells.chunks(self.cols) {
            out.extend(row.iter().map(|&v| if v == 1 { '1' } else { '0' }));
            out.push('\n');
        }
        out
    }
}

fn parse_dim(s: &str) -> Option<usize> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

#[inline]
pub fn cell_center(r: usize, c: usize) -> Point {
    Point::new(c as f64 + 0.5, r as f64 + 0.5)
}

/// Reads a `.occ` file.
pub fn load_grid(path: impl AsRef<Path>) -> Result<OccupancyGrid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    OccupancyGrid::parse(&text, path)
}

/// Writes a `.occ` file.
pub fn save_grid(grid: &OccupancyGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, grid.to_occ_string()).map_err(|e| Error::io(path, e))
}

/// A finite, unordered set of points in world units.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct PointSet(pub Vec<Point>);

impl PointSet {
    pub fn new(points: Vec<Point>) -> Self {
        PointSet(points)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.0
    }
}

impl From<Vec<Point>> for PointSet {
    fn from(points: Vec<Point>) -> Self {
        PointSet(points)
    }
}
