//! Planar and toroidal geometry: polygons, quadrilateral labelings, the flat
//! torus metric, and grid-sampled Voronoi partitions.

mod polygon;
mod torus;
mod voronoi;

pub use polygon::{polygon_area, Point, Polygon, Quadrilateral, RectangleDomain};
pub use torus::{torus_delta, torus_distance};
pub use voronoi::{voronoi_in_polygon, voronoi_on_torus, CellPartition, Metric};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices (got {n})")]
    TooFewVertices { n: usize },
    #[error("polygon vertices must be counterclockwise")]
    NotCounterClockwise,
    #[error("polygon boundary self-intersects")]
    SelfIntersecting,
    #[error("degenerate interior angle at vertex {vertex} (fraction {alpha})")]
    DegenerateAngle { vertex: usize, alpha: f64 },
    #[error("exterior turns sum to {sum}, expected 2 (not a simple CCW polygon)")]
    AngleSum { sum: f64 },
    #[error("corner index {corner} out of range for {n} vertices")]
    CornerOutOfRange { corner: usize, n: usize },
    #[error("corner indices {corners:?} are not distinct and cyclically increasing")]
    CornersNotCyclic { corners: [usize; 4] },
    #[error("rectangle sides must be positive and finite (got {w} x {h})")]
    BadRectangle { w: f64, h: f64 },
    #[error("at least one site is required")]
    NoSites,
    #[error("grid resolution {n_grid} too coarse")]
    GridTooCoarse { n_grid: usize },
    #[error("site {site} lies outside the domain")]
    SiteOutsideDomain { site: usize },
}
