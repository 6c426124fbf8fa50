use std::collections::HashSet;

use crate::geom::{walk_cells, Cell, OccupancyGrid, Point2, Pose2D, Scan2D};

/// Endpoints are pushed this far along their ray before cell lookup so that
/// points lying exactly on a cell boundary resolve to the cell behind it.
pub(crate) const ENDPOINT_NUDGE: f64 = 1e-6;

/// One scan ray expressed in a target frame.
struct Ray {
    from: Point2,
    to: Point2,
    /// False when the ray was clipped by the radius: no obstacle at `to`.
    hit: bool,
}

fn rays_in_frame<'a>(scan: &'a Scan2D, sensor_pose: &Pose2D, radius: f64) -> impl Iterator<Item = Ray> + 'a {
    let from = sensor_pose.translation();
    let sensor_pose = *sensor_pose;
    scan.points.iter().filter_map(move |p| {
        let r = p.norm();
        if !(r > 0.0) {
            return None;
        }
        let (local, hit) = if r <= radius {
            let k = (r + ENDPOINT_NUDGE) / r;
            (Point2::new(p.x * k, p.y * k), true)
        } else {
            let k = radius / r;
            (Point2::new(p.x * k, p.y * k), false)
        };
        Some(Ray {
            from,
            to: sensor_pose.transform_point(local),
            hit,
        })
    })
}

/// Cells marked by rasterizing `scan` on the lattice whose cell centers sit
/// at integer multiples of `resolution` in the sensor pose's frame.
fn raster_cells(
    scan: &Scan2D,
    sensor_pose: &Pose2D,
    resolution: f64,
    radius: f64,
) -> Vec<(i64, i64, Cell)> {
    let mut cells = Vec::new();
    let to_cell = |p: Point2| Point2::new(p.x / resolution, p.y / resolution);
    let mut ends = Vec::new();
    for ray in rays_in_frame(scan, sensor_pose, radius) {
        let a = to_cell(ray.from);
        let b = to_cell(ray.to);
        let end = ((b.x + 0.5).floor() as i64, (b.y + 0.5).floor() as i64);
        walk_cells(a, b, |ix, iy, _| {
            if (ix, iy) != end || !ray.hit {
                cells.push((ix, iy, Cell::Free));
            }
            true
        });
        if ray.hit {
            ends.push((end.0, end.1, Cell::Occupied));
        }
    }
    cells.extend(ends);
    cells
}

/// Rasterizes a scan: cells crossed by each sensor→point segment are free,
/// the endpoint cell is occupied, everything else stays unknown.
///
/// The grid lattice is aligned with the target frame (cell centers at
/// integer multiples of `resolution`) and cropped to the cells actually
/// touched, which always include the sensor cell. An empty scan yields a
/// single unknown cell at the sensor.
pub fn scan_to_grid(scan: &Scan2D, sensor_pose_in_grid: &Pose2D, resolution: f64) -> OccupancyGrid {
    scan_to_grid_within(scan, sensor_pose_in_grid, resolution, scan.max_range)
}

/// As [`scan_to_grid`], with rays clipped at `radius` from the sensor.
pub fn scan_to_grid_within(
    scan: &Scan2D,
    sensor_pose_in_grid: &Pose2D,
    resolution: f64,
    radius: f64,
) -> OccupancyGrid {
    assert!(resolution > 0.0);
    let cells = raster_cells(scan, sensor_pose_in_grid, resolution, radius);
    let sx = (sensor_pose_in_grid.x / resolution + 0.5).floor() as i64;
    let sy = (sensor_pose_in_grid.y / resolution + 0.5).floor() as i64;
    let (mut x0, mut y0, mut x1, mut y1) = (sx, sy, sx, sy);
    for &(ix, iy, _) in &cells {
        x0 = x0.min(ix);
        y0 = y0.min(iy);
        x1 = x1.max(ix);
        y1 = y1.max(iy);
    }
    let mut grid = OccupancyGrid::new(
        resolution,
        Pose2D::new(x0 as f64 * resolution, y0 as f64 * resolution, 0.0),
        (x1 - x0 + 1) as usize,
        (y1 - y0 + 1) as usize,
    );
    for (ix, iy, c) in cells {
        grid.set(ix - x0, iy - y0, c);
    }
    grid
}

/// Distinct cells of `location_grid` crossed by the scan's free rays when
/// the sensor sits at `pose_in_location`.
fn free_ray_cells(
    scan: &Scan2D,
    grid: &OccupancyGrid,
    pose_in_location: &Pose2D,
    radius: f64,
) -> HashSet<(i64, i64)> {
    let mut set = HashSet::new();
    for ray in rays_in_frame(scan, pose_in_location, radius) {
        let a = grid.coord_to_cell_space(ray.from);
        let b = grid.coord_to_cell_space(ray.to);
        let end = ((b.x + 0.5).floor() as i64, (b.y + 0.5).floor() as i64);
        walk_cells(a, b, |ix, iy, _| {
            if (ix, iy) != end || !ray.hit {
                set.insert((ix, iy));
            }
            true
        });
    }
    set
}

/// Fraction of the scan's free-ray cells that fall on free cells of
/// `location_grid`. Returns 0 for an empty scan.
pub fn overlap(scan: &Scan2D, location_grid: &OccupancyGrid, pose_in_location: &Pose2D) -> f64 {
    overlap_within(scan, location_grid, pose_in_location, scan.max_range)
}

/// As [`overlap`], with the scan's rays clipped at `radius`.
pub fn overlap_within(
    scan: &Scan2D,
    location_grid: &OccupancyGrid,
    pose_in_location: &Pose2D,
    radius: f64,
) -> f64 {
    let cells = free_ray_cells(scan, location_grid, pose_in_location, radius);
    if cells.is_empty() {
        return 0.0;
    }
    let free = cells
        .iter()
        .filter(|&&(ix, iy)| location_grid.get(ix, iy) == Some(Cell::Free))
        .count();
    free as f64 / cells.len() as f64
}

/// Two-way disagreement between a scan placed at `pose_in_location` and a
/// location grid, ignoring anything within `tolerance` of a wall seen by
/// the other side:
///
/// * the fraction of the scan's free-ray cells that are occupied in the
///   grid (the scan sees through the grid's walls), plus
/// * the fraction of the scan's returns that land on free grid cells (the
///   scan sees walls where the grid saw none).
///
/// Rays are clipped at `radius`. Returns 0 for an empty scan.
pub fn conflict(scan: &Scan2D, grid: &OccupancyGrid, pose_in_location: &Pose2D, radius: f64, tolerance: f64) -> f64 {
    let k = (tolerance / grid.resolution).ceil() as i64;
    let reach2 = (tolerance / grid.resolution).powi(2);
    let disk = move || {
        (-k..=k).flat_map(move |dy| (-k..=k).map(move |dx| (dx, dy)))
            .filter(move |&(dx, dy)| ((dx * dx + dy * dy) as f64) <= reach2 + 1e-9)
    };
    let rays: Vec<Ray> = rays_in_frame(scan, pose_in_location, radius).collect();
    let mut near_returns = HashSet::new();
    let mut returns = 0usize;
    let mut unexplained = 0usize;
    for ray in rays.iter().filter(|r| r.hit) {
        let (cx, cy) = grid.coord_to_index(ray.to);
        for (dx, dy) in disk() {
            near_returns.insert((cx + dx, cy + dy));
        }
        match grid.get(cx, cy) {
            None => {}
            Some(Cell::Free) => {
                returns += 1;
                if !disk().any(|(dx, dy)| grid.get(cx + dx, cy + dy) == Some(Cell::Occupied)) {
                    unexplained += 1;
                }
            }
            Some(_) => returns += 1,
        }
    }
    let mut free = HashSet::new();
    let mut see_through = HashSet::new();
    for ray in &rays {
        let a = grid.coord_to_cell_space(ray.from);
        let b = grid.coord_to_cell_space(ray.to);
        walk_cells(a, b, |ix, iy, _| {
            if !near_returns.contains(&(ix, iy)) {
                free.insert((ix, iy));
                if grid.get(ix, iy) == Some(Cell::Occupied) {
                    see_through.insert((ix, iy));
                }
            }
            true
        });
    }
    let frac = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    frac(see_through.len(), free.len()) + frac(unexplained, returns)
}
