use std::f64::consts::PI;

use crate::geom::Scan2D;

pub const DEFAULT_DESCRIPTOR_DIM: usize = 64;

/// Unit-norm place signature of a scan. Components are held at single
/// precision so that the text form round-trips exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f64>,
}

impl Descriptor {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn distance(&self, other: &Descriptor) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn uniform(dim: usize) -> Self {
        Self::from_values(vec![1.0 / (dim as f64).sqrt(); dim])
    }

    /// Rounds each component to the nearest `f32`.
    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            values: values.into_iter().map(|v| v as f32 as f64).collect(),
        }
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
        true
    } else {
        false
    }
}

/// Soft-assigns `value` at continuous bin coordinate `pos` into two
/// neighbouring bins; wraps when `circular`.
fn splat(bins: &mut [f64], weights: &mut [f64], pos: f64, value: f64, circular: bool) {
    let n = bins.len() as i64;
    let lo = pos.floor();
    let frac = pos - lo;
    for (k, w) in [(lo as i64, 1.0 - frac), (lo as i64 + 1, frac)] {
        let idx = if circular {
            k.rem_euclid(n)
        } else if (0..n).contains(&k) {
            k
        } else {
            continue;
        };
        bins[idx as usize] += w * value;
        weights[idx as usize] += w;
    }
}

/// Rotation-invariant scan signature of dimension `dim` (even, ≥ 2).
///
/// The first half is a soft histogram of point ranges over `dim/2` rings
/// spanning `[0, max_range]`. The second half holds the circular
/// autocorrelation (lags `1..=dim/2`) of the mean-removed angular range
/// profile, which does not change when the profile is shifted. Each half
/// is normalized separately and the whole vector has unit L2 norm; an empty
/// scan maps to the uniform unit vector.
pub fn compute_descriptor_dim(scan: &Scan2D, dim: usize) -> Descriptor {
    assert!(dim >= 2 && dim.is_multiple_of(2), "descriptor dimension must be even");
    if scan.points.is_empty() || !(scan.max_range > 0.0) {
        return Descriptor::uniform(dim);
    }
    let half = dim / 2;
    // canonical point order makes the floating-point sums order-independent
    let mut pts = scan.points.clone();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));

    let mut rings = vec![0.0; half];
    let mut ring_w = vec![0.0; half];
    let ring_width = scan.max_range / half as f64;
    for p in &pts {
        let pos = (p.norm() / ring_width - 0.5).clamp(0.0, (half - 1) as f64);
        splat(&mut rings, &mut ring_w, pos, 1.0, false);
    }

    let sectors = 2 * half;
    let mut profile = vec![0.0; sectors];
    let mut prof_w = vec![0.0; sectors];
    let sector_width = 2.0 * PI / sectors as f64;
    for p in &pts {
        let a = p.y.atan2(p.x).rem_euclid(2.0 * PI);
        splat(&mut profile, &mut prof_w, a / sector_width, p.norm(), true);
    }
    for (v, w) in profile.iter_mut().zip(&prof_w) {
        *v = if *w > 0.0 { *v / *w } else { 0.0 };
    }
    let mean = profile.iter().sum::<f64>() / sectors as f64;
    profile.iter_mut().for_each(|v| *v -= mean);
    let energy: f64 = profile.iter().map(|v| v * v).sum();
    let mut auto = vec![0.0; half];
    if energy > 0.0 {
        for (lag, slot) in auto.iter_mut().enumerate() {
            let l = lag + 1;
            *slot = (0..sectors)
                .map(|s| profile[s] * profile[(s + l) % sectors])
                .sum::<f64>()
                / energy;
        }
    }
    // shift to non-negative so an all-zero autocorrelation still carries weight
    auto.iter_mut().for_each(|v| *v = (*v + 1.0) * 0.5);

    normalize(&mut rings);
    normalize(&mut auto);
    let mut values = rings;
    values.extend(auto);
    if !normalize(&mut values) {
        return Descriptor::uniform(dim);
    }
    Descriptor::from_values(values)
}

pub fn compute_descriptor(scan: &Scan2D) -> Descriptor {
    compute_descriptor_dim(scan, DEFAULT_DESCRIPTOR_DIM)
}
