//! Spatial service demand: densities on the physical polygon, the density a
//! conformal map pair uniformizes, volume conservation across the map, and
//! demand CDFs.
//!
//! All fields live on a uniform grid over the polygon's bounding box with
//! samples at element centers; grid layout matches `CellPartition` so demand
//! and partition samples align index-for-index.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Point, Polygon, RectangleDomain};
use crate::scmap::{ConformalMapPair, ScMapError};

#[derive(Debug, Error)]
pub enum DemandError {
    #[error(transparent)]
    Map(#[from] ScMapError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{what} (got {value})")]
    Domain { what: &'static str, value: f64 },
    #[error("demand fields live on different grids")]
    GridMismatch,
    #[error("patch leaves the polygon (boundary sample at ({x}, {y}))")]
    PatchOutside { x: f64, y: f64 },
    #[error("demand CSV: {0}")]
    Csv(String),
}

/// Session-level traffic statistics. The service volume (average concurrent
/// users) is their ratio.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Traffic {
    pub mean_session_s: f64,
    pub mean_interarrival_s: f64,
}

impl Traffic {
    pub fn new(mean_session_s: f64, mean_interarrival_s: f64) -> Result<Self, DemandError> {
        if !(mean_session_s > 0.0) {
            return Err(DemandError::Domain {
                what: "traffic: mean session time must be positive",
                value: mean_session_s,
            });
        }
        if !(mean_interarrival_s > 0.0) {
            return Err(DemandError::Domain {
                what: "traffic: mean interarrival time must be positive",
                value: mean_interarrival_s,
            });
        }
        Ok(Self {
            mean_session_s,
            mean_interarrival_s,
        })
    }

    /// V = E{mu} / E{lambda}, the average number of concurrent users.
    pub fn volume(&self) -> f64 {
        self.mean_session_s / self.mean_interarrival_s
    }
}

/// A nonnegative density sampled on the physical grid, normalized so the
/// grid integral is exactly 1. Samples outside the polygon carry density 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemandField {
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    dx: f64,
    dy: f64,
    density: Vec<f64>,
    traffic: Traffic,
}

impl DemandField {
    /// Normalizes raw per-area weights into a density field. Weights must be
    /// nonnegative with a positive total; entries outside the support are 0.
    fn from_weights(
        nx: usize,
        ny: usize,
        x0: f64,
        y0: f64,
        dx: f64,
        dy: f64,
        mut weights: Vec<f64>,
        traffic: Traffic,
    ) -> Result<Self, DemandError> {
        debug_assert_eq!(weights.len(), nx * ny);
        let mut total = 0.0;
        for &w in &weights {
            if !(w >= 0.0) {
                return Err(DemandError::Domain {
                    what: "demand density must be nonnegative and finite",
                    value: w,
                });
            }
            total += w;
        }
        let mass = total * dx * dy;
        if !(mass > 0.0) {
            return Err(DemandError::Domain {
                what: "demand density must have positive total mass",
                value: mass,
            });
        }
        for w in &mut weights {
            *w /= mass;
        }
        Ok(Self {
            nx,
            ny,
            x0,
            y0,
            dx,
            dy,
            density: weights,
            traffic,
        })
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn origin(&self) -> Point {
        Point::new(self.x0, self.y0)
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.dx, self.dy)
    }

    pub fn element_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn sample_point(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.x0 + (i as f64 + 0.5) * self.dx,
            self.y0 + (j as f64 + 0.5) * self.dy,
        )
    }

    /// Row-major (j * nx + i) density samples, probability per unit area.
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn traffic(&self) -> Traffic {
        self.traffic
    }

    pub fn volume(&self) -> f64 {
        self.traffic.volume()
    }

    /// Grid integral of the density; exactly 1 up to float summation.
    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.element_area()
    }

    /// Per-element probabilities (density times element area), row-major.
    pub fn element_probabilities(&self) -> Vec<f64> {
        let a = self.element_area();
        self.density.iter().map(|d| d * a).collect()
    }

    /// Draw `n` points from the field: element by cumulative weight, then
    /// uniform jitter inside the element.
    pub fn sample_points<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<Point> {
        let mut cumulative = Vec::with_capacity(self.density.len());
        let mut acc = 0.0;
        for &d in &self.density {
            acc += d;
            cumulative.push(acc);
        }
        let total = acc;
        (0..n)
            .map(|_| {
                let u = rng.gen::<f64>() * total;
                let idx = cumulative.partition_point(|&c| c < u).min(
                    self.density.len() - 1,
                );
                let (i, j) = (idx % self.nx, idx / self.nx);
                Point::new(
                    self.x0 + (i as f64 + rng.gen::<f64>()) * self.dx,
                    self.y0 + (j as f64 + rng.gen::<f64>()) * self.dy,
                )
            })
            .collect()
    }

    /// CSV rows `x,y,density` for in-support samples, row-major order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,density\n");
        for j in 0..self.ny {
            for i in 0..self.nx {
                let d = self.density[j * self.nx + i];
                if d > 0.0 {
                    let p = self.sample_point(i, j);
                    out.push_str(&format!("{},{},{}\n", p.x, p.y, d));
                }
            }
        }
        out
    }

    /// JSON header describing the grid and traffic statistics.
    pub fn header_json(&self) -> String {
        #[derive(Serialize)]
        struct Header {
            nx: usize,
            ny: usize,
            x0: f64,
            y0: f64,
            dx: f64,
            dy: f64,
            volume: f64,
            mean_session_s: f64,
            mean_interarrival_s: f64,
        }
        serde_json::to_string_pretty(&Header {
            nx: self.nx,
            ny: self.ny,
            x0: self.x0,
            y0: self.y0,
            dx: self.dx,
            dy: self.dy,
            volume: self.volume(),
            mean_session_s: self.traffic.mean_session_s,
            mean_interarrival_s: self.traffic.mean_interarrival_s,
        })
        .expect("header serialization cannot fail")
    }
}

/// The uniform canonical-domain counterpart: density 1/|R| everywhere on the
/// rectangle, same service volume as the physical field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanonicalDemand {
    rect: RectangleDomain,
    traffic: Traffic,
}

impl CanonicalDemand {
    pub fn new(rect: RectangleDomain, traffic: Traffic) -> Self {
        Self { rect, traffic }
    }

    pub fn density(&self) -> f64 {
        1.0 / self.rect.area()
    }

    pub fn rect(&self) -> &RectangleDomain {
        &self.rect
    }

    pub fn volume(&self) -> f64 {
        self.traffic.volume()
    }

    pub fn traffic(&self) -> Traffic {
        self.traffic
    }
}

/// Named demand shapes for scenario files. The Gaussian mixtures are
/// qualitative stand-ins for "demand concentrated where the grid is tighter";
/// their parameters are fractions of the polygon bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandPreset {
    Uniform,
    Gauss1,
    Gauss2,
}

struct Blob {
    cx: f64,
    cy: f64,
    sigma: f64,
    weight: f64,
}

fn preset_blobs(preset: DemandPreset) -> (Vec<Blob>, f64) {
    match preset {
        DemandPreset::Uniform => (Vec::new(), 1.0),
        DemandPreset::Gauss1 => (
            vec![Blob {
                cx: 0.30,
                cy: 0.35,
                sigma: 0.16,
                weight: 0.85,
            }],
            0.15,
        ),
        DemandPreset::Gauss2 => (
            vec![
                Blob {
                    cx: 0.25,
                    cy: 0.30,
                    sigma: 0.12,
                    weight: 0.50,
                },
                Blob {
                    cx: 0.72,
                    cy: 0.66,
                    sigma: 0.10,
                    weight: 0.35,
                },
            ],
            0.15,
        ),
    }
}

/// A preset density restricted to the polygon and grid-normalized.
pub fn preset_density(
    preset: DemandPreset,
    polygon: &Polygon,
    grid: usize,
    traffic: Traffic,
) -> Result<DemandField, DemandError> {
    if grid < 2 {
        return Err(DemandError::Domain {
            what: "demand grid must have at least 2 samples per axis",
            value: grid as f64,
        });
    }
    let (lo, hi) = polygon.bounding_box();
    let (nx, ny) = (grid, grid);
    let dx = (hi.x - lo.x) / nx as f64;
    let dy = (hi.y - lo.y) / ny as f64;
    let scale = (hi.x - lo.x).hypot(hi.y - lo.y);
    let (blobs, floor) = preset_blobs(preset);
    let mut weights = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let p = Point::new(
                lo.x + (i as f64 + 0.5) * dx,
                lo.y + (j as f64 + 0.5) * dy,
            );
            if !polygon.contains(p) {
                continue;
            }
            let mut w = floor;
            for b in &blobs {
                let cx = lo.x + b.cx * (hi.x - lo.x);
                let cy = lo.y + b.cy * (hi.y - lo.y);
                let s = b.sigma * scale;
                let q = ((p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy)) / (2.0 * s * s);
                w += b.weight * (-q).exp();
            }
            weights[j * nx + i] = w;
        }
    }
    DemandField::from_weights(nx, ny, lo.x, lo.y, dx, dy, weights, traffic)
}

/// The density the map pair uniformizes: the pushforward of the uniform
/// canonical density under the inverse map, delta = K / |dF^-1/dw|^2
/// evaluated at w = F(zeta) on the physical grid.
///
/// Rows are swept with warm-started forward solves and processed in
/// parallel; the result is deterministic (no randomness, fixed row order).
pub fn induced_density(
    cm: &ConformalMapPair,
    grid: usize,
    traffic: Traffic,
) -> Result<DemandField, DemandError> {
    if grid < 2 {
        return Err(DemandError::Domain {
            what: "demand grid must have at least 2 samples per axis",
            value: grid as f64,
        });
    }
    let polygon = &cm.quad().polygon;
    let (lo, hi) = polygon.bounding_box();
    let (nx, ny) = (grid, grid);
    let dx = (hi.x - lo.x) / nx as f64;
    let dy = (hi.y - lo.y) / ny as f64;

    let rows: Result<Vec<Vec<f64>>, DemandError> = (0..ny)
        .into_par_iter()
        .map(|j| {
            let mut row = vec![0.0; nx];
            let mut warm: Option<Complex64> = None;
            for (i, slot) in row.iter_mut().enumerate() {
                let p = Point::new(
                    lo.x + (i as f64 + 0.5) * dx,
                    lo.y + (j as f64 + 0.5) * dy,
                );
                if !polygon.contains(p) {
                    warm = None;
                    continue;
                }
                let zeta = Complex64::new(p.x, p.y);
                let w = match warm {
                    Some(w0) => cm.map_forward_from(zeta, w0)?,
                    None => cm.map_forward(zeta)?,
                };
                warm = Some(w);
                *slot = reciprocal_jacobian(cm, w)?;
            }
            Ok(row)
        })
        .collect();

    let mut weights = Vec::with_capacity(nx * ny);
    for row in rows? {
        weights.extend(row);
    }
    DemandField::from_weights(nx, ny, lo.x, lo.y, dx, dy, weights, traffic)
}

/// 1/|dF^-1/dw|^2 at `w`, nudging points on the rectangle edge slightly
/// inward (the derivative is continuous up to the boundary away from
/// corners, but its evaluation needs an interior point).
fn reciprocal_jacobian(cm: &ConformalMapPair, w: Complex64) -> Result<f64, DemandError> {
    let mq = cm.module();
    let eps = 1e-9 * mq.min(1.0);
    let w_in = Complex64::new(w.re.clamp(eps, 1.0 - eps), w.im.clamp(eps, mq - eps));
    let d = cm.map_derivative(w_in)?;
    let j = d.norm_sqr();
    if !(j.is_finite() && j > 0.0) {
        return Err(DemandError::Domain {
            what: "inverse-map Jacobian is not positive here",
            value: j,
        });
    }
    Ok(1.0 / j)
}

/// The literal divergence-form expression 1/(du/dxi + dv/deta) =
/// 1/(2 Re (F^-1)'), kept as a diagnostic: it can change sign and does not
/// conserve measure, which is why the Jacobian form above is the default.
pub fn divergence_form_density(
    cm: &ConformalMapPair,
    w: Complex64,
) -> Result<f64, DemandError> {
    let d = cm.map_derivative(w)?;
    let s = 2.0 * d.re;
    if s == 0.0 {
        return Err(DemandError::Domain {
            what: "divergence-form density pole (2 Re dF^-1/dw = 0)",
            value: s,
        });
    }
    Ok(1.0 / s)
}

/// Sorted per-element-probability CDF, reported at `bins` quantile rows
/// (probability level, cumulative element fraction), ending at fraction 1.
pub fn demand_cdf(field: &DemandField, bins: usize) -> Vec<(f64, f64)> {
    let mut probs: Vec<f64> = field
        .element_probabilities()
        .into_iter()
        .filter(|&p| p > 0.0)
        .collect();
    probs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = probs.len();
    let bins = bins.clamp(1, n.max(1));
    let mut rows = Vec::with_capacity(bins);
    for b in 1..=bins {
        let idx = (b * n).div_ceil(bins).clamp(1, n) - 1;
        rows.push((probs[idx], (idx + 1) as f64 / n as f64));
    }
    rows
}

/// A measurable region of the physical domain for conservation checks.
#[derive(Debug, Clone, Copy)]
pub enum Patch {
    /// The whole polygon.
    Whole,
    /// A disc that must lie inside the polygon.
    Disc { center: Point, radius: f64 },
}

/// Both sides of the conservation identity: the demand inside the patch and
/// the uniform canonical mass of the patch's forward image,
/// (integral_S delta, |F(S)|/|R|). For the induced density these agree.
///
/// The image area comes from mapping `boundary_samples` points of the patch
/// boundary forward and taking the shoelace area.
pub fn patch_conservation_check(
    cm: &ConformalMapPair,
    field: &DemandField,
    patch: Patch,
    boundary_samples: usize,
) -> Result<(f64, f64), DemandError> {
    match patch {
        Patch::Whole => Ok((field.total_mass(), 1.0)),
        Patch::Disc { center, radius } => {
            if radius == 0.0 {
                return Ok((0.0, 0.0));
            }
            if !(radius > 0.0) {
                return Err(DemandError::Domain {
                    what: "patch radius must be nonnegative",
                    value: radius,
                });
            }
            let polygon = &cm.quad().polygon;
            let m = boundary_samples.max(16);
            // Reject patches not strictly inside (their image would be cut
            // by the rectangle boundary and the shoelace area meaningless).
            if polygon.distance_to_boundary(center) < radius || !polygon.contains(center) {
                return Err(DemandError::PatchOutside {
                    x: center.x,
                    y: center.y,
                });
            }
            // Demand side: grid sum over samples inside the disc.
            let mut inside = 0.0;
            for j in 0..field.ny {
                for i in 0..field.nx {
                    let p = field.sample_point(i, j);
                    if p.dist(center) <= radius {
                        inside += field.density[j * field.nx + i];
                    }
                }
            }
            let lhs = inside * field.element_area();
            // Image side: forward-map the circle, shoelace area over |R|.
            let mut w_prev: Option<Complex64> = None;
            let mut images = Vec::with_capacity(m);
            for k in 0..m {
                let t = 2.0 * std::f64::consts::PI * (k as f64) / (m as f64);
                let zeta = Complex64::new(
                    center.x + radius * t.cos(),
                    center.y + radius * t.sin(),
                );
                let w = match w_prev {
                    Some(w0) => cm.map_forward_from(zeta, w0)?,
                    None => cm.map_forward(zeta)?,
                };
                w_prev = Some(w);
                images.push(w);
            }
            let mut area2 = 0.0;
            for k in 0..m {
                let a = images[k];
                let b = images[(k + 1) % m];
                area2 += a.re * b.im - b.re * a.im;
            }
            let rhs = 0.5 * area2.abs() / cm.canonical_rectangle().area();
            Ok((lhs, rhs))
        }
    }
}

/// Total-variation distance between two fields on the same grid:
/// half the summed absolute difference of element probabilities.
pub fn tv_distance(a: &DemandField, b: &DemandField) -> Result<f64, DemandError> {
    if a.grid_shape() != b.grid_shape()
        || (a.x0, a.y0, a.dx, a.dy) != (b.x0, b.y0, b.dx, b.dy)
    {
        return Err(DemandError::GridMismatch);
    }
    let ea = a.element_area();
    Ok(0.5
        * a.density
            .iter()
            .zip(&b.density)
            .map(|(p, q)| ((p - q) * ea).abs())
            .sum::<f64>())
}

/// Reads a demand field from CSV rows `x,y,density` (header optional) laid
/// out on a `grid`-per-axis bounding-box grid of `polygon`. Samples missing
/// from the CSV carry zero density.
pub fn field_from_csv(
    csv: &str,
    polygon: &Polygon,
    grid: usize,
    traffic: Traffic,
) -> Result<DemandField, DemandError> {
    let (lo, hi) = polygon.bounding_box();
    let (nx, ny) = (grid, grid);
    let dx = (hi.x - lo.x) / nx as f64;
    let dy = (hi.y - lo.y) / ny as f64;
    let mut weights = vec![0.0; nx * ny];
    for (line_no, line) in csv.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64, DemandError> {
            s.ok_or_else(|| DemandError::Csv(format!("line {}: missing column", line_no + 1)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| DemandError::Csv(format!("line {}: {e}", line_no + 1)))
        };
        let x = parse(parts.next())?;
        let y = parse(parts.next())?;
        let d = parse(parts.next())?;
        let i = ((x - lo.x) / dx - 0.5).round() as isize;
        let j = ((y - lo.y) / dy - 0.5).round() as isize;
        if i < 0 || j < 0 || i as usize >= nx || j as usize >= ny {
            return Err(DemandError::Csv(format!(
                "line {}: sample ({x}, {y}) is off the grid",
                line_no + 1
            )));
        }
        weights[j as usize * nx + i as usize] = d;
    }
    DemandField::from_weights(nx, ny, lo.x, lo.y, dx, dy, weights, traffic)
}

/// Rebuilds a field from its exported header/CSV pair. The stored densities
/// are taken verbatim (no renormalization) so a rebuilt field reproduces the
/// original bit for bit; the unit total mass is verified instead.
pub fn field_from_export(header_json: &str, csv: &str) -> Result<DemandField, DemandError> {
    #[derive(Deserialize)]
    struct Header {
        nx: usize,
        ny: usize,
        x0: f64,
        y0: f64,
        dx: f64,
        dy: f64,
        #[allow(dead_code)]
        volume: f64,
        mean_session_s: f64,
        mean_interarrival_s: f64,
    }
    let h: Header = serde_json::from_str(header_json)
        .map_err(|e| DemandError::Csv(format!("demand header: {e}")))?;
    let traffic = Traffic::new(h.mean_session_s, h.mean_interarrival_s)?;
    if h.nx == 0 || h.ny == 0 || !(h.dx > 0.0 && h.dy > 0.0) {
        return Err(DemandError::Csv("demand header: degenerate grid".to_string()));
    }
    let mut density = vec![0.0; h.nx * h.ny];
    for (line_no, line) in csv.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64, DemandError> {
            s.ok_or_else(|| DemandError::Csv(format!("line {}: missing column", line_no + 1)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| DemandError::Csv(format!("line {}: {e}", line_no + 1)))
        };
        let x = parse(parts.next())?;
        let y = parse(parts.next())?;
        let d = parse(parts.next())?;
        if !(d >= 0.0 && d.is_finite()) {
            return Err(DemandError::Domain {
                what: "demand density must be nonnegative and finite",
                value: d,
            });
        }
        let i = ((x - h.x0) / h.dx - 0.5).round() as isize;
        let j = ((y - h.y0) / h.dy - 0.5).round() as isize;
        if i < 0 || j < 0 || i as usize >= h.nx || j as usize >= h.ny {
            return Err(DemandError::Csv(format!(
                "line {}: sample ({x}, {y}) is off the grid",
                line_no + 1
            )));
        }
        density[j as usize * h.nx + i as usize] = d;
    }
    let mass: f64 = density.iter().sum::<f64>() * h.dx * h.dy;
    if (mass - 1.0).abs() > 1e-6 {
        return Err(DemandError::Csv(format!(
            "exported field has non-unit mass {mass}"
        )));
    }
    Ok(DemandField {
        nx: h.nx,
        ny: h.ny,
        x0: h.x0,
        y0: h.y0,
        dx: h.dx,
        dy: h.dy,
        density,
        traffic,
    })
}
