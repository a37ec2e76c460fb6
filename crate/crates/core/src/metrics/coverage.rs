use serde::{Deserialize, Serialize};

use super::StrokeRaster;
use crate::envs::{Shape, W_MAX};
use crate::error::{Error, Result};

/// Default coverage tolerance: the full-pressure stroke half-width.
pub const DEFAULT_TOLERANCE: f64 = W_MAX;

/// Translations and rotations searched by [`consistency`]. Shifts apply to
/// both `dx` and `dy`; rotations are about the canvas center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentGrid {
    pub shifts: Vec<f64>,
    pub rotations_deg: Vec<f64>,
}

impl AlignmentGrid {
    /// `-half_range..=half_range` in steps of `step` on both axes.
    pub fn symmetric(shift_half_range: f64, shift_step: f64, rot_half_range: f64, rot_step: f64) -> Self {
        let axis = |half: f64, step: f64| -> Vec<f64> {
            if step <= 0.0 || half <= 0.0 {
                return vec![0.0];
            }
            let n = (half / step + 1e-9).floor() as i64;
            (-n..=n).map(|i| i as f64 * step).collect()
        };
        Self {
            shifts: axis(shift_half_range, shift_step),
            rotations_deg: axis(rot_half_range, rot_step),
        }
    }

    /// Zero shift only.
    pub fn identity() -> Self {
        Self {
            shifts: vec![0.0],
            rotations_deg: vec![0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shifts.is_empty() || self.rotations_deg.is_empty() {
            return Err(Error::config("alignment grid must be non-empty"));
        }
        if !self.shifts.contains(&0.0) || !self.rotations_deg.contains(&0.0) {
            return Err(Error::config("alignment grid must include the zero shift"));
        }
        Ok(())
    }
}

impl Default for AlignmentGrid {
    /// +-5% of the canvas in 0.5% steps, +-5 degrees in 0.5 degree steps.
    fn default() -> Self {
        Self::symmetric(0.05, 0.005, 5.0, 0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub coverage: f64,
    pub consistency: f64,
    /// `(dx, dy, dtheta_degrees)` applied to the painting at the optimum.
    pub best_shift: (f64, f64, f64),
}

/// Cells lying within `tol` of a painted cell.
struct NearPaint {
    res: usize,
    near: Vec<bool>,
}

impl NearPaint {
    fn new(raster: &StrokeRaster, tol: f64) -> Self {
        let res = raster.res();
        let d2 = squared_distance_transform(raster);
        let radius = tol * res as f64;
        let r2 = radius * radius;
        Self {
            res,
            near: d2.into_iter().map(|d| d <= r2).collect(),
        }
    }

    #[inline]
    fn covers(&self, x: f64, y: f64) -> bool {
        if !(0.0..1.0).contains(&x) || !(0.0..1.0).contains(&y) {
            return false;
        }
        let r = self.res as f64;
        self.near[(y * r) as usize * self.res + (x * r) as usize]
    }
}

const FAR: f64 = 1e20;

/// Exact squared Euclidean distance (in cells) from each cell center to the
/// nearest painted cell center, by two passes of the 1-D lower-envelope
/// transform.
fn squared_distance_transform(raster: &StrokeRaster) -> Vec<f64> {
    let n = raster.res();
    let mut grid: Vec<f64> = raster
        .cells()
        .iter()
        .map(|&c| if c { 0.0 } else { FAR })
        .collect();
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for iy in 0..n {
        f.copy_from_slice(&grid[iy * n..(iy + 1) * n]);
        dt_1d(&f, &mut d, &mut v, &mut z);
        grid[iy * n..(iy + 1) * n].copy_from_slice(&d);
    }
    for ix in 0..n {
        for iy in 0..n {
            f[iy] = grid[iy * n + ix];
        }
        dt_1d(&f, &mut d, &mut v, &mut z);
        for iy in 0..n {
            grid[iy * n + ix] = d[iy];
        }
    }
    grid
}

fn dt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
            }
            break;
        }
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
}

fn template_samples(raster: &StrokeRaster, template: &Shape) -> Result<Vec<[f64; 2]>> {
    if template.waypoints.len() < 2 {
        return Err(Error::config("coverage template needs at least 2 points"));
    }
    Ok(template.sample_polyline(0.5 * raster.cell_size()))
}

fn covered_fraction(field: &NearPaint, samples: &[[f64; 2]], dx: f64, dy: f64, theta_deg: f64) -> f64 {
    // the painting moves by T(q) = R(q - c) + c + d; look template points up
    // through the inverse transform
    let (s, c) = (-theta_deg.to_radians()).sin_cos();
    let hits = samples
        .iter()
        .filter(|p| {
            let (px, py) = (p[0] - 0.5 - dx, p[1] - 0.5 - dy);
            field.covers(c * px - s * py + 0.5, s * px + c * py + 0.5)
        })
        .count();
    hits as f64 / samples.len() as f64
}

/// Fraction of the template polyline with paint within `tol`.
pub fn coverage(raster: &StrokeRaster, template: &Shape, tol: f64) -> Result<f64> {
    let samples = template_samples(raster, template)?;
    Ok(covered_fraction(&NearPaint::new(raster, tol), &samples, 0.0, 0.0, 0.0))
}

/// Best coverage over every translation and rotation in `grid`.
///
/// Ties keep the transform closest to identity.
pub fn consistency(
    raster: &StrokeRaster,
    template: &Shape,
    grid: &AlignmentGrid,
    tol: f64,
) -> Result<CoverageReport> {
    grid.validate()?;
    let samples = template_samples(raster, template)?;
    let field = NearPaint::new(raster, tol);
    let mut candidates: Vec<(f64, f64, f64)> = grid
        .shifts
        .iter()
        .flat_map(|&dx| {
            grid.shifts
                .iter()
                .flat_map(move |&dy| grid.rotations_deg.iter().map(move |&r| (dx, dy, r)))
        })
        .collect();
    // rotation degrees weighted to be comparable with canvas shifts
    let size = |c: &(f64, f64, f64)| c.0 * c.0 + c.1 * c.1 + (c.2 * 0.01) * (c.2 * 0.01);
    candidates.sort_by(|a, b| size(a).total_cmp(&size(b)));

    let coverage = covered_fraction(&field, &samples, 0.0, 0.0, 0.0);
    let mut best = (coverage, (0.0, 0.0, 0.0));
    for (dx, dy, r) in candidates {
        if best.0 >= 1.0 {
            break;
        }
        let c = covered_fraction(&field, &samples, dx, dy, r);
        if c > best.0 {
            best = (c, (dx, dy, r));
        }
    }
    Ok(CoverageReport {
        coverage,
        consistency: best.0,
        best_shift: best.1,
    })
}
