//! Network planning on canonical domains.
//!
//! A polygonal service area is conformally mapped onto a rectangle (strip
//! method of Schwarz-Christoffel mapping), base stations are laid out and
//! load-analyzed on the rectangle treated as a flat torus, and the sites are
//! mapped back into the polygon. The crate is organized bottom-up:
//!
//! - [`numerics`]: elliptic functions, Gauss-Jacobi quadrature, Newton.
//! - [`geometry`]: polygons, the flat-torus metric, grid Voronoi partitions.
//! - [`scmap`]: the conformal map pair between polygon and rectangle.
//! - [`demand`]: spatial traffic densities and their transfer by the map.
//! - [`canonical`]: site lattices and received power on the torus.
//! - [`loadcoupling`]: cell-load fixed points, dimensioning, and the
//!   canonical-vs-physical comparison.
//! - [`scenario`] / [`pipeline`]: end-to-end runs and emitted artifacts.

pub mod canonical;
pub mod demand;
pub mod geometry;
pub mod loadcoupling;
pub mod numerics;
pub mod pipeline;
pub mod scenario;
pub mod scmap;
