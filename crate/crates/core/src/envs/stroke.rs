use serde::{Deserialize, Serialize};

use super::painter::stroke_half_width;
use crate::metrics::StrokeRaster;

/// Brush tip pose: canvas position, height above the canvas, pitch (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrushPose {
    pub x: f64,
    pub y: f64,
    pub height: f64,
    pub pitch: f64,
}

impl BrushPose {
    fn lerp(&self, other: &BrushPose, u: f64) -> BrushPose {
        BrushPose {
            x: self.x + (other.x - self.x) * u,
            y: self.y + (other.y - self.y) * u,
            height: self.height + (other.height - self.height) * u,
            pitch: self.pitch + (other.pitch - self.pitch) * u,
        }
    }
}

/// Full stroke width (`2 w(z)`) at each pose.
pub fn stroke_widths(poses: &[BrushPose]) -> Vec<f64> {
    poses
        .iter()
        .map(|p| 2.0 * stroke_half_width(p.height))
        .collect()
}

fn stamp(raster: &mut StrokeRaster, pose: &BrushPose) {
    let w = stroke_half_width(pose.height);
    if w <= 0.0 {
        return;
    }
    let res = raster.res() as f64;
    // the bristles splay along the pitch direction (canvas x)
    let ax = w / pose.pitch.cos().abs().max(1e-3);
    let ay = w;
    let x0 = ((pose.x - ax) * res).floor().max(0.0) as usize;
    let x1 = ((pose.x + ax) * res).ceil().min(res - 1.0).max(0.0) as usize;
    let y0 = ((pose.y - ay) * res).floor().max(0.0) as usize;
    let y1 = ((pose.y + ay) * res).ceil().min(res - 1.0).max(0.0) as usize;
    for iy in y0..=y1 {
        let cy = (iy as f64 + 0.5) / res;
        let ty = (cy - pose.y) / ay;
        let ty2 = ty * ty;
        if ty2 > 1.0 {
            continue;
        }
        for ix in x0..=x1 {
            let cx = (ix as f64 + 0.5) / res;
            let tx = (cx - pose.x) / ax;
            if tx * tx + ty2 <= 1.0 {
                raster.set(ix, iy, true);
            }
        }
    }
}

/// Paints the union of elliptical brush footprints along the trajectory.
///
/// Footprints are stamped at every pose and at interpolated poses between
/// consecutive ones, no more than half a raster cell apart, so a continuous
/// motion leaves a continuous band.
pub fn render_stroke(poses: &[BrushPose], res: usize) -> StrokeRaster {
    let mut raster = StrokeRaster::new(res);
    let Some(first) = poses.first() else {
        return raster;
    };
    let spacing = 0.5 / res as f64;
    stamp(&mut raster, first);
    for w in poses.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let d = (b.x - a.x).hypot(b.y - a.y);
        let pieces = (d / spacing).ceil().max(1.0) as usize;
        for s in 1..=pieces {
            stamp(&mut raster, &a.lerp(b, s as f64 / pieces as f64));
        }
    }
    raster
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{W_MAX, Z_CONTACT};
    use proptest::prelude::*;

    fn pose(x: f64, y: f64, height: f64) -> BrushPose {
        BrushPose {
            x,
            y,
            height,
            pitch: 0.0,
        }
    }

    #[test]
    fn single_stamp_centered() {
        let r = render_stroke(&[pose(0.5, 0.5, 0.0)], 200);
        assert!(r.get(100, 100));
        // disc of radius W_MAX = 4 cells
        let area = r.painted_count() as f64;
        let expect = std::f64::consts::PI * (W_MAX * 200.0).powi(2);
        assert!((area - expect).abs() / expect < 0.15, "{area} vs {expect}");
        // symmetric about the center
        assert_eq!(r.get(97, 100), r.get(102, 100));
    }

    #[test]
    fn lifted_brush_leaves_nothing() {
        let r = render_stroke(&[pose(0.5, 0.5, Z_CONTACT + 0.01), pose(0.6, 0.5, 0.09)], 128);
        assert_eq!(r.painted_count(), 0);
        assert_eq!(render_stroke(&[], 64).painted_count(), 0);
    }

    #[test]
    fn pitch_elongates_along_x() {
        let flat = render_stroke(&[pose(0.5, 0.5, 0.0)], 256);
        let tilted = render_stroke(
            &[BrushPose {
                pitch: 1.0,
                ..pose(0.5, 0.5, 0.0)
            }],
            256,
        );
        assert!(tilted.painted_count() > flat.painted_count());
    }

    /// Brute force: a cell is in the band iff its center lies within `w` of
    /// the segment.
    #[test]
    fn straight_segment_is_a_capsule() {
        let res = 256;
        let z = 0.01;
        let w = crate::envs::stroke_half_width(z);
        let (a, b) = ((0.3, 0.5), (0.7, 0.5));
        let r = render_stroke(&[pose(a.0, a.1, z), pose(b.0, b.1, z)], res);
        let mut mismatches = 0;
        let mut inside = 0;
        for iy in 0..res {
            for ix in 0..res {
                let cx = (ix as f64 + 0.5) / res as f64;
                let cy = (iy as f64 + 0.5) / res as f64;
                let u = ((cx - a.0) / (b.0 - a.0)).clamp(0.0, 1.0);
                let px = a.0 + u * (b.0 - a.0);
                let d = (cx - px).hypot(cy - a.1);
                let expect = d <= w;
                inside += expect as usize;
                if expect != r.get(ix, iy) {
                    // only cells straddling the boundary may disagree
                    assert!((d - w).abs() < 1.0 / res as f64, "cell ({ix},{iy}) d={d}");
                    mismatches += 1;
                }
            }
        }
        assert!((mismatches as f64) < 0.05 * inside as f64);
    }

    proptest! {
        #[test]
        fn adding_states_never_removes_paint(
            pts in prop::collection::vec((0.1f64..0.9, 0.1f64..0.9, 0.0f64..0.06), 1..6),
            extra in (0.1f64..0.9, 0.1f64..0.9, 0.0f64..0.06),
        ) {
            let poses: Vec<_> = pts.iter().map(|&(x, y, z)| pose(x, y, z)).collect();
            let mut more = poses.clone();
            more.push(pose(extra.0, extra.1, extra.2));
            let a = render_stroke(&poses, 64);
            let b = render_stroke(&more, 64);
            for iy in 0..64 {
                for ix in 0..64 {
                    prop_assert!(!a.get(ix, iy) || b.get(ix, iy));
                }
            }
        }
    }
}
