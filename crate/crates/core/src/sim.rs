//! Deterministic gridworld: raycast lidar, point-robot kinematics and
//! odometry with optional Gaussian drift.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geom::{walk_cells, Cell, OccupancyGrid, Point2, Pose2D, Scan2D};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("pose ({x:.3}, {y:.3}) lies in an occupied cell")]
    PoseInObstacle { x: f64, y: f64 },
    #[error("world grid contains unknown cells")]
    UnknownCells,
}

/// Ground-truth scene. Cells are only ever free or occupied.
#[derive(Clone, Debug)]
pub struct World {
    pub name: String,
    pub truth: OccupancyGrid,
}

impl World {
    pub fn new(name: impl Into<String>, truth: OccupancyGrid) -> Result<Self, SimError> {
        if truth.cells.contains(&Cell::Unknown) {
            return Err(SimError::UnknownCells);
        }
        Ok(Self {
            name: name.into(),
            truth,
        })
    }

    /// Out-of-bounds positions count as blocked.
    pub fn is_free(&self, p: Point2) -> bool {
        let (ix, iy) = self.truth.coord_to_index(p);
        self.truth.get(ix, iy) == Some(Cell::Free)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LidarParams {
    pub num_rays: usize,
    pub max_range: f64,
    pub fov: f64,
}

impl Default for LidarParams {
    fn default() -> Self {
        Self {
            num_rays: 360,
            max_range: 15.0,
            fov: 2.0 * PI,
        }
    }
}

impl LidarParams {
    /// Ray bearing in the sensor frame.
    pub fn ray_angle(&self, k: usize) -> f64 {
        if (self.fov - 2.0 * PI).abs() < 1e-12 {
            -PI + self.fov * k as f64 / self.num_rays as f64
        } else if self.num_rays == 1 {
            0.0
        } else {
            -self.fov / 2.0 + self.fov * k as f64 / (self.num_rays - 1) as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseParams {
    /// Standard deviation per meter traveled, applied to x and y.
    pub trans_sigma: f64,
    /// Standard deviation per radian turned.
    pub rot_sigma: f64,
    pub seed: u64,
}

impl NoiseParams {
    pub fn none() -> Self {
        Self {
            trans_sigma: 0.0,
            rot_sigma: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MotionKind {
    Forward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl MotionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MotionKind::Forward => "forward",
            MotionKind::TurnLeft => "turn_left",
            MotionKind::TurnRight => "turn_right",
            MotionKind::Stop => "stop",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionCommand {
    pub kind: MotionKind,
    pub magnitude: f64,
}

impl MotionCommand {
    pub fn forward(m: f64) -> Self {
        Self {
            kind: MotionKind::Forward,
            magnitude: m.max(0.0),
        }
    }
    pub fn turn_left(m: f64) -> Self {
        Self {
            kind: MotionKind::TurnLeft,
            magnitude: m.max(0.0),
        }
    }
    pub fn turn_right(m: f64) -> Self {
        Self {
            kind: MotionKind::TurnRight,
            magnitude: m.max(0.0),
        }
    }
    pub fn stop() -> Self {
        Self {
            kind: MotionKind::Stop,
            magnitude: 0.0,
        }
    }
}

/// Casts `params.num_rays` rays from `pose`; each ray reports the first
/// occupied cell boundary it enters within `max_range`. Points are returned
/// in the robot frame. Cells outside the world are treated as empty space.
pub fn raycast_scan(world: &World, pose: &Pose2D, params: &LidarParams) -> Result<Scan2D, SimError> {
    let grid = &world.truth;
    let (cx, cy) = grid.coord_to_index(pose.translation());
    if grid.get(cx, cy) == Some(Cell::Occupied) {
        return Err(SimError::PoseInObstacle {
            x: pose.x,
            y: pose.y,
        });
    }
    let start = grid.coord_to_cell_space(pose.translation());
    let reach = params.max_range / grid.resolution;
    let mut points = Vec::with_capacity(params.num_rays);
    for k in 0..params.num_rays {
        let bearing = params.ray_angle(k);
        let dir = pose.theta + bearing - grid.origin.theta;
        let end = Point2::new(start.x + reach * dir.cos(), start.y + reach * dir.sin());
        let mut hit = None;
        walk_cells(start, end, |ix, iy, t| {
            if grid.get(ix, iy) == Some(Cell::Occupied) {
                hit = Some(t);
                false
            } else {
                true
            }
        });
        if let Some(t) = hit {
            let d = t * params.max_range;
            if d <= params.max_range {
                points.push(Point2::new(d * bearing.cos(), d * bearing.sin()));
            }
        }
    }
    Ok(Scan2D::new(points, params.max_range))
}

const WALL_MARGIN: f64 = 1e-3;

/// Advances the point robot by one command. Forward motion is clamped just
/// short of the first occupied (or out-of-world) cell on the swept segment.
pub fn step(pose: &Pose2D, cmd: &MotionCommand, world: &World) -> Pose2D {
    match cmd.kind {
        MotionKind::Stop => *pose,
        MotionKind::TurnLeft => Pose2D::new(pose.x, pose.y, pose.theta + cmd.magnitude),
        MotionKind::TurnRight => Pose2D::new(pose.x, pose.y, pose.theta - cmd.magnitude),
        MotionKind::Forward => {
            if cmd.magnitude <= 0.0 {
                return *pose;
            }
            let grid = &world.truth;
            let (c, s) = (pose.theta.cos(), pose.theta.sin());
            let target = Point2::new(pose.x + c * cmd.magnitude, pose.y + s * cmd.magnitude);
            let a = grid.coord_to_cell_space(pose.translation());
            let b = grid.coord_to_cell_space(target);
            let mut blocked_at = None;
            walk_cells(a, b, |ix, iy, t| {
                if grid.get(ix, iy) != Some(Cell::Free) {
                    blocked_at = Some(t);
                    false
                } else {
                    true
                }
            });
            match blocked_at {
                None => Pose2D::new(target.x, target.y, pose.theta),
                Some(t) => {
                    let adv = (t * cmd.magnitude - WALL_MARGIN).max(0.0);
                    let moved = Pose2D::new(pose.x + c * adv, pose.y + s * adv, pose.theta);
                    if world.is_free(moved.translation()) {
                        moved
                    } else {
                        *pose
                    }
                }
            }
        }
    }
}

/// Perturbs a true motion increment with zero-mean Gaussian noise whose
/// standard deviation scales with the increment's magnitude.
pub fn noisy_odometry(true_delta: &Pose2D, noise: &NoiseParams, rng: &mut ChaCha8Rng) -> Pose2D {
    let trans = true_delta.translation_norm();
    let rot = true_delta.theta.abs();
    let st = noise.trans_sigma * trans;
    let sr = noise.rot_sigma * rot;
    if st <= 0.0 && sr <= 0.0 {
        return *true_delta;
    }
    let mut sample = |sigma: f64| {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
        } else {
            0.0
        }
    };
    let nx = sample(st);
    let ny = sample(st);
    let nt = sample(sr);
    Pose2D::new(true_delta.x + nx, true_delta.y + ny, true_delta.theta + nt)
}

/// Seeded odometry source.
#[derive(Clone, Debug)]
pub struct Odometry {
    pub noise: NoiseParams,
    rng: ChaCha8Rng,
}

impl Odometry {
    pub fn new(noise: NoiseParams) -> Self {
        Self {
            noise,
            rng: ChaCha8Rng::seed_from_u64(noise.seed),
        }
    }

    pub fn measure(&mut self, true_delta: &Pose2D) -> Pose2D {
        noisy_odometry(true_delta, &self.noise, &mut self.rng)
    }
}
