//! Fine and coarse corridor lattices.
//!
//! Cells are addressed with 1-based `(i, j)` indices. `i` runs along the x
//! axis and `j` along the y axis. For block routing, increasing `i` is
//! "north" and increasing `j` is "east", so a predecessor at `(a - 1, b)`
//! lies to the south of `(a, b)`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid side must be at least 2, got {0}")]
    SideTooSmall(usize),
    #[error("cell dimensions must be positive (dx={dx}, dy={dy}, dz={dz})")]
    NonPositiveCell { dx: f64, dy: f64, dz: f64 },
    #[error("altitude must be non-negative, got {0}")]
    NegativeAltitude(f64),
    #[error("fine side {n} is not divisible by coarse side {m}")]
    NotDivisible { n: usize, m: usize },
    #[error("cell {cell} is outside a {side}x{side} lattice")]
    OutOfRange { cell: CellIndex, side: usize },
    #[error("active cells do not form a single simple path: {0}")]
    NotASimplePath(String),
    #[error("cell {0} is not on the coarse path")]
    NotOnPath(CellIndex),
    #[error("corridor text malformed: {0}")]
    Parse(String),
}

/// Geometry of the fine `n x n` lattice at a fixed altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub altitude: f64,
    pub n: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl GridSpec {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        altitude: f64,
        n: usize,
        dx: f64,
        dy: f64,
        dz: f64,
    ) -> Result<Self, GridError> {
        let spec = Self {
            origin_x,
            origin_y,
            altitude,
            n,
            dx,
            dy,
            dz,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.n < 2 {
            return Err(GridError::SideTooSmall(self.n));
        }
        if !(self.dx > 0.0 && self.dy > 0.0 && self.dz > 0.0) {
            return Err(GridError::NonPositiveCell {
                dx: self.dx,
                dy: self.dy,
                dz: self.dz,
            });
        }
        if !(self.altitude >= 0.0) {
            return Err(GridError::NegativeAltitude(self.altitude));
        }
        Ok(())
    }

    /// Axis-aligned coverage of fine cell `idx`.
    pub fn cell_region(&self, idx: CellIndex) -> Result<CellBox, GridError> {
        idx.check(self.n)?;
        let (i, j) = (idx.i as f64, idx.j as f64);
        Ok(CellBox {
            x_min: self.origin_x + (i - 1.0) * self.dx,
            x_max: self.origin_x + i * self.dx,
            y_min: self.origin_y + (j - 1.0) * self.dy,
            y_max: self.origin_y + j * self.dy,
            z_min: self.altitude,
            z_max: self.altitude + self.dz,
        })
    }

    pub fn extent_x(&self) -> f64 {
        self.n as f64 * self.dx
    }

    pub fn extent_y(&self) -> f64 {
        self.n as f64 * self.dy
    }
}

/// Geometry of the `m x m` coarsening of a [`GridSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarseSpec {
    pub m: usize,
    pub factor: usize,
    pub coarse_dx: f64,
    pub coarse_dy: f64,
}

impl CoarseSpec {
    pub fn new(grid: &GridSpec, m: usize) -> Result<Self, GridError> {
        if m < 2 {
            return Err(GridError::SideTooSmall(m));
        }
        if !grid.n.is_multiple_of(m) {
            return Err(GridError::NotDivisible { n: grid.n, m });
        }
        let factor = grid.n / m;
        Ok(Self {
            m,
            factor,
            coarse_dx: grid.dx * factor as f64,
            coarse_dy: grid.dy * factor as f64,
        })
    }

    /// Global fine index of local cell `local` inside coarse block `block`.
    pub fn to_global(&self, block: CellIndex, local: CellIndex) -> CellIndex {
        CellIndex::new(
            (block.i - 1) * self.factor + local.i,
            (block.j - 1) * self.factor + local.j,
        )
    }

    /// Coarse block containing the fine cell `fine`.
    pub fn block_of(&self, fine: CellIndex) -> CellIndex {
        CellIndex::new((fine.i - 1) / self.factor + 1, (fine.j - 1) / self.factor + 1)
    }
}

/// Axis-aligned box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

/// 1-based lattice index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub i: usize,
    pub j: usize,
}

impl CellIndex {
    pub const fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }

    pub fn check(&self, side: usize) -> Result<(), GridError> {
        if self.i == 0 || self.j == 0 || self.i > side || self.j > side {
            Err(GridError::OutOfRange { cell: *self, side })
        } else {
            Ok(())
        }
    }

    /// Row-major offset into a `side x side` array.
    #[inline]
    pub fn offset(&self, side: usize) -> usize {
        (self.i - 1) * side + (self.j - 1)
    }

    #[inline]
    pub fn from_offset(offset: usize, side: usize) -> Self {
        Self::new(offset / side + 1, offset % side + 1)
    }

    pub fn manhattan(&self, other: CellIndex) -> usize {
        self.i.abs_diff(other.i) + self.j.abs_diff(other.j)
    }
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

/// In-bounds 4-neighbours of `idx`, in the order south, north, west, east.
pub fn neighbors4(idx: CellIndex, side: usize) -> Vec<CellIndex> {
    let mut out = Vec::with_capacity(4);
    if idx.i > 1 {
        out.push(CellIndex::new(idx.i - 1, idx.j));
    }
    if idx.i < side {
        out.push(CellIndex::new(idx.i + 1, idx.j));
    }
    if idx.j > 1 {
        out.push(CellIndex::new(idx.i, idx.j - 1));
    }
    if idx.j < side {
        out.push(CellIndex::new(idx.i, idx.j + 1));
    }
    out
}

/// Binary occupancy matrix with its two anchors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorridorMask {
    side: usize,
    bits: Vec<bool>,
    pub departure: CellIndex,
    pub destination: CellIndex,
}

impl CorridorMask {
    /// Empty mask anchored at `(1,1)` and `(side,side)`.
    pub fn new(side: usize) -> Self {
        Self {
            side,
            bits: vec![false; side * side],
            departure: CellIndex::new(1, 1),
            destination: CellIndex::new(side, side),
        }
    }

    pub fn with_anchors(side: usize, departure: CellIndex, destination: CellIndex) -> Self {
        Self {
            side,
            bits: vec![false; side * side],
            departure,
            destination,
        }
    }

    pub fn from_cells(side: usize, cells: &[CellIndex]) -> Self {
        let mut mask = Self::new(side);
        for &c in cells {
            mask.set(c, true);
        }
        mask
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, idx: CellIndex) -> bool {
        self.bits[idx.offset(self.side)]
    }

    pub fn set(&mut self, idx: CellIndex, value: bool) {
        let side = self.side;
        self.bits[idx.offset(side)] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn active_cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        let side = self.side;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(o, _)| CellIndex::from_offset(o, side))
    }

    pub fn active_neighbors(&self, idx: CellIndex) -> usize {
        neighbors4(idx, self.side)
            .into_iter()
            .filter(|n| self.get(*n))
            .count()
    }

    /// Rows of `0`/`1`, row `i = 1` first, newline separated.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.side * (self.side + 1));
        for i in 1..=self.side {
            for j in 1..=self.side {
                out.push(if self.get(CellIndex::new(i, j)) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GridError> {
        let rows: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let side = rows.len();
        if side == 0 {
            return Err(GridError::Parse("empty matrix".into()));
        }
        let mut mask = Self::new(side);
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != side {
                return Err(GridError::Parse(format!(
                    "row {} has {} columns, expected {side}",
                    r + 1,
                    row.chars().count()
                )));
            }
            for (c, ch) in row.chars().enumerate() {
                match ch {
                    '0' => {}
                    '1' => mask.set(CellIndex::new(r + 1, c + 1), true),
                    other => {
                        return Err(GridError::Parse(format!("unexpected character {other:?}")))
                    }
                }
            }
        }
        Ok(mask)
    }
}

/// Which corridor rule a cell (or line) breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum CorridorViolation {
    /// Departure or destination not active.
    AnchorInactive { cell: CellIndex },
    /// Active cell with too few active neighbours.
    TooFewNeighbors { cell: CellIndex, count: usize },
    /// Any cell with more than two active neighbours.
    TooManyNeighbors { cell: CellIndex, count: usize },
    EmptyRow { i: usize },
    EmptyColumn { j: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<CorridorViolation>,
}

/// Checks anchors, the neighbour-count band (anchors need only one active
/// neighbour), the two-neighbour cap on every cell, and row/column coverage.
pub fn validate_corridor(mask: &CorridorMask) -> ValidationReport {
    let side = mask.side();
    let mut violations = Vec::new();
    for anchor in [mask.departure, mask.destination] {
        if anchor.check(side).is_err() || !mask.get(anchor) {
            violations.push(CorridorViolation::AnchorInactive { cell: anchor });
        }
    }
    for offset in 0..side * side {
        let cell = CellIndex::from_offset(offset, side);
        let count = mask.active_neighbors(cell);
        if mask.get(cell) {
            let need = if cell == mask.departure || cell == mask.destination {
                1
            } else {
                2
            };
            if count < need {
                violations.push(CorridorViolation::TooFewNeighbors { cell, count });
            }
        }
        if count > 2 {
            violations.push(CorridorViolation::TooManyNeighbors { cell, count });
        }
    }
    for i in 1..=side {
        if !(1..=side).any(|j| mask.get(CellIndex::new(i, j))) {
            violations.push(CorridorViolation::EmptyRow { i });
        }
    }
    for j in 1..=side {
        if !(1..=side).any(|i| mask.get(CellIndex::new(i, j))) {
            violations.push(CorridorViolation::EmptyColumn { j });
        }
    }
    ValidationReport {
        ok: violations.is_empty(),
        violations,
    }
}

/// Walks the active cells from departure to destination.
///
/// Fails unless the active set is exactly one simple, chordless path between
/// the anchors.
pub fn extract_path(mask: &CorridorMask) -> Result<Vec<CellIndex>, GridError> {
    let side = mask.side();
    let start = mask.departure;
    let goal = mask.destination;
    start.check(side)?;
    goal.check(side)?;
    if !mask.get(start) || !mask.get(goal) {
        return Err(GridError::NotASimplePath("anchor inactive".into()));
    }
    let total = mask.count();
    let mut path = vec![start];
    if start == goal {
        return if total == 1 {
            Ok(path)
        } else {
            Err(GridError::NotASimplePath("extra active cells".into()))
        };
    }
    let mut prev: Option<CellIndex> = None;
    let mut cur = start;
    while cur != goal {
        let next: Vec<CellIndex> = neighbors4(cur, side)
            .into_iter()
            .filter(|n| mask.get(*n) && Some(*n) != prev)
            .collect();
        if next.len() != 1 {
            return Err(GridError::NotASimplePath(format!(
                "cell {cur} has {} onward neighbours",
                next.len()
            )));
        }
        prev = Some(cur);
        cur = next[0];
        path.push(cur);
        if path.len() > total {
            return Err(GridError::NotASimplePath("walk revisits cells".into()));
        }
    }
    if mask.active_neighbors(goal) != 1 {
        return Err(GridError::NotASimplePath("destination is not a path end".into()));
    }
    if path.len() != total {
        return Err(GridError::NotASimplePath(format!(
            "walk covers {} of {total} active cells",
            path.len()
        )));
    }
    Ok(path)
}

/// Side of a block through which a sub-path enters or leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    South,
    North,
    West,
    East,
}

impl Side {
    /// Side of `from` facing the adjacent cell `to`.
    pub fn toward(from: CellIndex, to: CellIndex) -> Option<Side> {
        match (to.i as isize - from.i as isize, to.j as isize - from.j as isize) {
            (-1, 0) => Some(Side::South),
            (1, 0) => Some(Side::North),
            (0, -1) => Some(Side::West),
            (0, 1) => Some(Side::East),
            _ => None,
        }
    }

    /// Midpoint cell of this edge in an `f x f` block.
    pub fn midpoint(self, f: usize) -> CellIndex {
        let mid = f.div_ceil(2);
        match self {
            Side::South => CellIndex::new(1, mid),
            Side::North => CellIndex::new(f, mid),
            Side::West => CellIndex::new(mid, 1),
            Side::East => CellIndex::new(mid, f),
        }
    }

    /// Whether local cell `c` lies on this edge of an `f x f` block.
    pub fn contains(self, c: CellIndex, f: usize) -> bool {
        match self {
            Side::South => c.i == 1,
            Side::North => c.i == f,
            Side::West => c.j == 1,
            Side::East => c.j == f,
        }
    }
}

/// Local start and destination cells of a block sub-path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentEndpoints {
    pub start: CellIndex,
    pub dest: CellIndex,
    /// Edge shared with the predecessor block, if any.
    pub entry: Option<Side>,
    /// Edge shared with the successor block, if any.
    pub exit: Option<Side>,
}

/// Start/destination of the sub-path inside coarse cell `cell`.
///
/// The first block starts at local `(1,1)` and the last ends at `(f,f)`;
/// otherwise the endpoints are the midpoints of the edges shared with the
/// predecessor and successor.
pub fn segment_endpoints(
    coarse_path: &[CellIndex],
    cell: CellIndex,
    factor: usize,
) -> Result<SegmentEndpoints, GridError> {
    let pos = coarse_path
        .iter()
        .position(|c| *c == cell)
        .ok_or(GridError::NotOnPath(cell))?;
    let entry = if pos > 0 {
        Some(Side::toward(cell, coarse_path[pos - 1]).ok_or_else(|| {
            GridError::NotASimplePath(format!("{} and {cell} are not adjacent", coarse_path[pos - 1]))
        })?)
    } else {
        None
    };
    let exit = if pos + 1 < coarse_path.len() {
        Some(Side::toward(cell, coarse_path[pos + 1]).ok_or_else(|| {
            GridError::NotASimplePath(format!("{cell} and {} are not adjacent", coarse_path[pos + 1]))
        })?)
    } else {
        None
    };
    let start = entry.map_or(CellIndex::new(1, 1), |s| s.midpoint(factor));
    let dest = exit.map_or(CellIndex::new(factor, factor), |s| s.midpoint(factor));
    Ok(SegmentEndpoints {
        start,
        dest,
        entry,
        exit,
    })
}
