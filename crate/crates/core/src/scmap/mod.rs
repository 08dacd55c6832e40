//! Conformal map between a polygonal domain and its canonical rectangle.
//!
//! The map is built in two legs through an intermediate infinite strip
//! `0 <= Im z <= 1`:
//!
//! * strip -> polygon: a Schwarz-Christoffel map whose derivative is a
//!   product of sinh powers, one per polygon vertex ([`fprime`]); the
//!   prevertex positions come from a side-length parameter problem
//!   ([`param`]).
//! * rectangle -> strip: `z = log(sn(2K w - K | m)) / pi` with
//!   `m = exp(-2 pi R)`, sending the rectangle `[0,1] x [0, m(Q)]` onto the
//!   truncated strip `[0, R] x [0, 1]` with the four marked corners going
//!   to the four strip corners.
//!
//! The composite and its Newton inverse live in [`eval`].

mod eval;
mod fprime;
mod param;

pub use eval::ConformalMapPair;
pub use param::{conformal_module, solve_strip_parameters};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Polygon, Quadrilateral};
use crate::numerics::NumericsError;

/// Serialization format version of [`StripMap`].
pub const FORMAT_VERSION: u32 = 1;

/// Human-readable record of the conventions the stored parameters assume;
/// embedded in serialized maps so a reader can re-evaluate them without
/// guessing.
pub(crate) const PARAMETER_CONVENTION: &str = "strip [-inf,inf]x[0,1]; corner prevertices c1,c2,c3,c4 = i, 0, R, R+i; \
     canonical rectangle [0,1]x[0,mQ] with corners c1..c4 = 0, 1, 1+i*mQ, i*mQ; \
     elliptic parameter m = exp(-2*pi*R); rectangle-to-strip z = log(sn(2*K(m)*w - K(m) | m))/pi; \
     f'(z) = C * prod_k sinh(pi/2*(z - z_k))^(alpha_k - 1)";

#[derive(Debug, Error)]
pub enum ScMapError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("solved map fails vertex reproduction: worst image error {error:.3e} exceeds {tol:.3e}")]
    Validation { error: f64, tol: f64 },
    #[error("point ({re}, {im}) lies outside the {domain}")]
    OutsideDomain {
        domain: &'static str,
        re: f64,
        im: f64,
    },
    #[error("forward map did not converge at ({re}, {im}): best residual {best:.3e}")]
    ForwardNoConvergence { re: f64, im: f64, best: f64 },
    #[error("conformal module {module:.3e} outside the evaluatable range (~1e-2 .. ~5.5)")]
    ModuleOutOfRange { module: f64 },
    #[error("unsupported map format version {found} (this build reads version {expected})")]
    BadVersion { found: u32, expected: u32 },
    #[error("map serialization: {0}")]
    Serde(String),
}

/// Solver and evaluation options for [`solve_strip_parameters`].
#[derive(Debug, Clone)]
pub struct MapOptions {
    /// Quadrature nodes per integration panel.
    pub nodes_per_panel: usize,
    /// Convergence threshold on the side-length residuals (dimensionless
    /// ratios against the longest side).
    pub solver_tol: f64,
    /// Acceptance threshold for post-solve vertex reproduction, relative to
    /// the polygon diameter.
    pub validate_tol: f64,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            nodes_per_panel: 12,
            solver_tol: 1e-10,
            validate_tol: 1e-6,
        }
    }
}

/// The solved parameters of one polygon-to-rectangle map: everything needed
/// to re-evaluate it, in a stable serializable form.
///
/// Positions on the strip boundary are stored as the real part plus an edge
/// flag so the imaginary part (exactly 0 or 1) survives serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StripMap {
    pub(crate) version: u32,
    pub(crate) quad: Quadrilateral,
    pub(crate) prevertex_x: Vec<f64>,
    pub(crate) prevertex_top: Vec<bool>,
    pub(crate) strip_length: f64,
    pub(crate) elliptic_m: f64,
    pub(crate) module: f64,
    pub(crate) scale_c: Complex64,
    pub(crate) offset_a: Complex64,
    pub(crate) nodes_per_panel: usize,
    pub(crate) convention: String,
}

impl StripMap {
    /// Conformal module m(Q): height of the canonical rectangle.
    pub fn module(&self) -> f64 {
        self.module
    }

    /// Length R of the truncated strip.
    pub fn strip_length(&self) -> f64 {
        self.strip_length
    }

    /// Elliptic parameter m = exp(-2 pi R) of the rectangle leg.
    pub fn elliptic_m(&self) -> f64 {
        self.elliptic_m
    }

    pub fn quad(&self) -> &Quadrilateral {
        &self.quad
    }

    /// Prevertices as complex strip-boundary points, vertex-aligned.
    pub fn prevertices(&self) -> Vec<Complex64> {
        self.prevertex_x
            .iter()
            .zip(&self.prevertex_top)
            .map(|(&x, &t)| Complex64::new(x, if t { 1.0 } else { 0.0 }))
            .collect()
    }

    /// Multiplicative constant C of the strip-to-polygon derivative.
    pub fn scale(&self) -> Complex64 {
        self.scale_c
    }

    /// Affine offset A: the image of the strip origin (corner c2).
    pub fn offset(&self) -> Complex64 {
        self.offset_a
    }

    pub fn to_json(&self) -> Result<String, ScMapError> {
        serde_json::to_string_pretty(self).map_err(|e| ScMapError::Serde(e.to_string()))
    }

    /// Parses and re-validates a serialized map.  The embedded polygon and
    /// corner marking go through full geometric validation again; prevertex
    /// arrays must be vertex-aligned and the strip length positive.
    pub fn from_json(s: &str) -> Result<Self, ScMapError> {
        let raw: StripMap = serde_json::from_str(s).map_err(|e| ScMapError::Serde(e.to_string()))?;
        if raw.version != FORMAT_VERSION {
            return Err(ScMapError::BadVersion {
                found: raw.version,
                expected: FORMAT_VERSION,
            });
        }
        let poly = Polygon::new(raw.quad.polygon.vertices().to_vec())?;
        let quad = Quadrilateral::new(poly, raw.quad.corners())?;
        let n = quad.polygon.len();
        if raw.prevertex_x.len() != n
            || raw.prevertex_top.len() != n
            || !(raw.strip_length.is_finite() && raw.strip_length > 0.0)
            || !(raw.module.is_finite() && raw.module > 0.0)
            || !raw.scale_c.is_finite()
            || raw.nodes_per_panel < 2
        {
            return Err(ScMapError::Serde(
                "inconsistent map parameters".to_string(),
            ));
        }
        Ok(StripMap { quad, ..raw })
    }
}
