//! Painting-quality scores and behavior-manifold analysis.

mod coverage;
mod manifold;
mod raster;

pub use coverage::{consistency, coverage, AlignmentGrid, CoverageReport, DEFAULT_TOLERANCE};
pub use raster::{StrokeRaster, DEFAULT_RES};
pub use manifold::{manifold_sweep, spearman, ManifoldCell, ManifoldReport};
