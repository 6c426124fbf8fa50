//! Planar geometry, range scans and tri-state occupancy grids.
//!
//! Conventions used throughout the crate: x forward, y left, theta
//! counterclockwise. Grids are row-major; cell `(ix, iy)` has its center at
//! `origin ∘ (ix * resolution, iy * resolution)`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("grid format error on line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    // rem_euclid can return exactly 2π for tiny negative inputs
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Planar rigid transform. `theta` is kept in (−π, π].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Pose2D {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub const fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    /// "self then other": applies `other` in the frame of `self`.
    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(
            -(c * self.x + s * self.y),
            -(-s * self.x + c * self.y),
            -self.theta,
        )
    }

    /// Euclidean length of the translational part.
    pub fn translation_norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn translation(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn transform_point(&self, p: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    /// Relative transform taking `self` to `other`: `self ∘ result = other`.
    pub fn between(&self, other: &Pose2D) -> Pose2D {
        self.inverse().compose(other)
    }
}

pub fn compose(a: &Pose2D, b: &Pose2D) -> Pose2D {
    a.compose(b)
}

pub fn inverse(p: &Pose2D) -> Pose2D {
    p.inverse()
}

pub fn translation_norm(p: &Pose2D) -> f64 {
    p.translation_norm()
}

/// A 2D range scan expressed in the sensor frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Scan2D {
    pub points: Vec<Point2>,
    pub max_range: f64,
}

impl Scan2D {
    pub fn new(points: Vec<Point2>, max_range: f64) -> Self {
        Self { points, max_range }
    }

    pub fn empty(max_range: f64) -> Self {
        Self {
            points: Vec::new(),
            max_range,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn transform_scan(s: &Scan2D, t: &Pose2D) -> Scan2D {
    Scan2D {
        points: s.points.iter().map(|p| t.transform_point(*p)).collect(),
        max_range: s.max_range,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
#[repr(u8)]
pub enum Cell {
    Free,
    Occupied,
    #[default]
    Unknown,
}

impl Cell {
    pub fn to_char(self) -> char {
        match self {
            Cell::Free => '.',
            Cell::Occupied => '#',
            Cell::Unknown => '?',
        }
    }

    pub fn from_char(c: char) -> Option<Cell> {
        match c {
            '.' => Some(Cell::Free),
            '#' => Some(Cell::Occupied),
            '?' => Some(Cell::Unknown),
            _ => None,
        }
    }

    /// Fusion rank: occupied beats free beats unknown.
    pub fn rank(self) -> u8 {
        match self {
            Cell::Unknown => 0,
            Cell::Free => 1,
            Cell::Occupied => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub origin: Pose2D,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>,
}

impl OccupancyGrid {
    /// All-unknown grid.
    ///
    /// Panics if `resolution` is not positive or a dimension is zero.
    pub fn new(resolution: f64, origin: Pose2D, width: usize, height: usize) -> Self {
        Self::filled(resolution, origin, width, height, Cell::Unknown)
    }

    pub fn filled(
        resolution: f64,
        origin: Pose2D,
        width: usize,
        height: usize,
        fill: Cell,
    ) -> Self {
        assert!(resolution > 0.0, "grid resolution must be positive");
        assert!(width >= 1 && height >= 1, "grid must have at least one cell");
        Self {
            resolution,
            origin,
            width,
            height,
            cells: vec![fill; width * height],
        }
    }

    pub fn in_bounds(&self, ix: i64, iy: i64) -> bool {
        ix >= 0 && iy >= 0 && (ix as usize) < self.width && (iy as usize) < self.height
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.width + ix
    }

    pub fn get(&self, ix: i64, iy: i64) -> Option<Cell> {
        self.in_bounds(ix, iy)
            .then(|| self.cells[self.index(ix as usize, iy as usize)])
    }

    /// Out-of-bounds cells read as unknown.
    pub fn get_or_unknown(&self, ix: i64, iy: i64) -> Cell {
        self.get(ix, iy).unwrap_or(Cell::Unknown)
    }

    pub fn set(&mut self, ix: i64, iy: i64, c: Cell) -> bool {
        if !self.in_bounds(ix, iy) {
            return false;
        }
        let i = self.index(ix as usize, iy as usize);
        self.cells[i] = c;
        true
    }

    pub fn index_to_coord(&self, ix: i64, iy: i64) -> Point2 {
        self.origin.transform_point(Point2::new(
            ix as f64 * self.resolution,
            iy as f64 * self.resolution,
        ))
    }

    /// Continuous cell coordinates (cell centers at integers).
    pub fn coord_to_cell_space(&self, p: Point2) -> Point2 {
        let local = self.origin.inverse().transform_point(p);
        Point2::new(local.x / self.resolution, local.y / self.resolution)
    }

    pub fn coord_to_index(&self, p: Point2) -> (i64, i64) {
        let c = self.coord_to_cell_space(p);
        ((c.x + 0.5).floor() as i64, (c.y + 0.5).floor() as i64)
    }

    pub fn count(&self, c: Cell) -> usize {
        self.cells.iter().filter(|&&x| x == c).count()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * (self.height + 1) + 64);
        let _ = writeln!(
            s,
            "grid {} {} {} {} {} {}",
            self.width,
            self.height,
            self.resolution,
            self.origin.x,
            self.origin.y,
            self.origin.theta
        );
        for row in self.cells.chunks(self.width) {
            s.extend(row.iter().map(|c| c.to_char()));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, GeomError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| GeomError::Format {
            line: 1,
            msg: "empty input".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 7 || fields[0] != "grid" {
            return Err(GeomError::Format {
                line: 1,
                msg: format!("bad header {header:?}"),
            });
        }
        let bad = |msg: &str| GeomError::Format {
            line: 1,
            msg: msg.to_string(),
        };
        let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
        let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
        let resolution: f64 = fields[3].parse().map_err(|_| bad("resolution"))?;
        let ox: f64 = fields[4].parse().map_err(|_| bad("origin_x"))?;
        let oy: f64 = fields[5].parse().map_err(|_| bad("origin_y"))?;
        let ot: f64 = fields[6].parse().map_err(|_| bad("origin_theta"))?;
        if !(resolution > 0.0) || width == 0 || height == 0 {
            return Err(bad("resolution must be > 0 and dimensions >= 1"));
        }
        let mut cells = Vec::with_capacity(width * height);
        for row in 0..height {
            let line = lines.next().ok_or_else(|| GeomError::Format {
                line: row + 2,
                msg: "missing row".into(),
            })?;
            if line.chars().count() != width {
                return Err(GeomError::Format {
                    line: row + 2,
                    msg: format!("expected {width} cells"),
                });
            }
            for ch in line.chars() {
                cells.push(Cell::from_char(ch).ok_or_else(|| GeomError::Format {
                    line: row + 2,
                    msg: format!("bad cell {ch:?}"),
                })?);
            }
        }
        // raw field: origin theta is kept as written so re-serialization is exact
        Ok(Self {
            resolution,
            origin: Pose2D {
                x: ox,
                y: oy,
                theta: ot,
            },
            width,
            height,
            cells,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GeomError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeomError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Walks every cell touched by the segment `a → b`, given in continuous
/// cell coordinates (cell `(i, j)` spans `[i−½, i+½) × [j−½, j+½)`).
///
/// When the segment passes exactly through a cell corner both side cells
/// are reported, so the visited set is a superset of the cells the segment
/// intersects. The visitor receives the cell and the segment parameter in
/// [0, 1] at which the segment enters it; returning `false` stops the walk.
pub fn walk_cells(a: Point2, b: Point2, mut visit: impl FnMut(i64, i64, f64) -> bool) {
    const TIE: f64 = 1e-12;
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let mut ix = (a.x + 0.5).floor() as i64;
    let mut iy = (a.y + 0.5).floor() as i64;
    let end_x = (b.x + 0.5).floor() as i64;
    let end_y = (b.y + 0.5).floor() as i64;
    let step_x: i64 = if dx > 0.0 { 1 } else if dx < 0.0 { -1 } else { 0 };
    let step_y: i64 = if dy > 0.0 { 1 } else if dy < 0.0 { -1 } else { 0 };
    let t_delta_x = if step_x != 0 { 1.0 / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if step_y != 0 { 1.0 / dy.abs() } else { f64::INFINITY };
    let mut t_max_x = if step_x > 0 {
        (ix as f64 + 0.5 - a.x) / dx
    } else if step_x < 0 {
        (ix as f64 - 0.5 - a.x) / dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if step_y > 0 {
        (iy as f64 + 0.5 - a.y) / dy
    } else if step_y < 0 {
        (iy as f64 - 0.5 - a.y) / dy
    } else {
        f64::INFINITY
    };
    if !visit(ix, iy, 0.0) {
        return;
    }
    let max_steps = (end_x - ix).abs() + (end_y - iy).abs() + 4;
    for _ in 0..max_steps {
        if ix == end_x && iy == end_y {
            return;
        }
        if (t_max_x - t_max_y).abs() <= TIE {
            let t = t_max_x.min(t_max_y);
            if t > 1.0 {
                return;
            }
            if !visit(ix + step_x, iy, t) || !visit(ix, iy + step_y, t) {
                return;
            }
            ix += step_x;
            iy += step_y;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
            if !visit(ix, iy, t) {
                return;
            }
        } else if t_max_x < t_max_y {
            if t_max_x > 1.0 {
                return;
            }
            ix += step_x;
            let t = t_max_x;
            t_max_x += t_delta_x;
            if !visit(ix, iy, t) {
                return;
            }
        } else {
            if t_max_y > 1.0 {
                return;
            }
            iy += step_y;
            let t = t_max_y;
            t_max_y += t_delta_y;
            if !visit(ix, iy, t) {
                return;
            }
        }
    }
}
