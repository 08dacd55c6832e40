//! Periodic base-station lattices on the canonical torus and the
//! received-power / SINR evaluations built on them.
//!
//! A lattice lives on its *native* rectangle — the one its pitches tile
//! exactly — which coincides with the requested rectangle for rectangular
//! tilings and is the area-preserving best fit for hexagonal ones (a perfect
//! hexagonal tiling constrains the aspect ratio to sqrt(3) L_W / (2 L_H)).
//! The residual anisotropic scale between the two rectangles is recorded and
//! applied only when sites are exported toward the physical domain.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{torus_distance, GeometryError, Point, RectangleDomain};

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{what} (got {value})")]
    Domain { what: &'static str, value: f64 },
    #[error("no feasible {tiling:?} lattice for {requested} sites (nearest feasible: {nearest})")]
    NoFeasibleLattice {
        tiling: Tiling,
        requested: usize,
        nearest: usize,
    },
    #[error("evaluation point coincides with site {site}")]
    PointOnSite { site: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tiling {
    Hexagonal,
    Rectangular,
}

/// Distance-power-law link model. Transmit power is normalized to 1 (equal
/// powers cancel in the SIR), `sigma2 = 0` selects the pure-SIR regime.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinkModel {
    pub beta: f64,
    pub sigma2: f64,
    pub b_sys: f64,
    pub r_min: f64,
}

impl LinkModel {
    pub fn new(beta: f64, sigma2: f64, b_sys: f64, r_min: f64) -> Result<Self, CanonicalError> {
        if !(beta >= 2.0) {
            return Err(CanonicalError::Domain {
                what: "link model: propagation exponent must be >= 2",
                value: beta,
            });
        }
        if !(sigma2 >= 0.0) {
            return Err(CanonicalError::Domain {
                what: "link model: noise power must be nonnegative",
                value: sigma2,
            });
        }
        if !(b_sys > 0.0) {
            return Err(CanonicalError::Domain {
                what: "link model: system bandwidth must be positive",
                value: b_sys,
            });
        }
        if !(r_min > 0.0) {
            return Err(CanonicalError::Domain {
                what: "link model: minimum rate must be positive",
                value: r_min,
            });
        }
        Ok(Self {
            beta,
            sigma2,
            b_sys,
            r_min,
        })
    }

    /// Spectral efficiency log2(1 + x) in bits/s/Hz. ln_1p keeps the low-SINR
    /// tail accurate where (1 + x) would round away the signal.
    pub fn link_rate(&self, sinr: f64) -> f64 {
        sinr.ln_1p() * std::f64::consts::LOG2_E
    }

    /// Bandwidth one user needs to reach `r_min` at this SINR, in Hz.
    pub fn user_bandwidth(&self, sinr: f64) -> f64 {
        self.r_min / self.link_rate(sinr)
    }
}

/// A site lattice wrapped on a flat torus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TorusLattice {
    tiling: Tiling,
    requested_l: usize,
    l_w: usize,
    l_h: usize,
    /// Cell radius: hexagon circumradius, or the half-diagonal of the
    /// rectangular cell.
    r: f64,
    shift_w: f64,
    shift_h: f64,
    /// The rectangle the caller asked to cover.
    target: RectangleDomain,
    /// The rectangle the lattice tiles exactly (same area as `target`).
    native: RectangleDomain,
    sites: Vec<Point>,
}

impl TorusLattice {
    pub fn tiling(&self) -> Tiling {
        self.tiling
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn requested_len(&self) -> usize {
        self.requested_l
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.l_w, self.l_h)
    }

    pub fn cell_radius(&self) -> f64 {
        self.r
    }

    pub fn shifts(&self) -> (f64, f64) {
        (self.shift_w, self.shift_h)
    }

    /// Sites on the native torus, column-major in (w, h) index order.
    pub fn sites(&self) -> &[Point] {
        &self.sites
    }

    pub fn native_rectangle(&self) -> &RectangleDomain {
        &self.native
    }

    pub fn target_rectangle(&self) -> &RectangleDomain {
        &self.target
    }

    /// Per-axis scale carrying native coordinates onto the target rectangle.
    /// Unity for rectangular tilings; the product is always 1 (area match).
    pub fn aspect_scale(&self) -> (f64, f64) {
        (
            self.target.w() / self.native.w(),
            self.target.h() / self.native.h(),
        )
    }

    /// Sites carried onto the target rectangle by the anisotropic scale.
    pub fn scaled_sites(&self) -> Vec<Point> {
        let (sx, sy) = self.aspect_scale();
        self.sites
            .iter()
            .map(|p| Point::new(p.x * sx, p.y * sy))
            .collect()
    }

    /// JSON export: the site arrays plus every lattice parameter, so a
    /// consumer can redraw or rebuild the layout without this crate.
    pub fn export_json(&self) -> String {
        #[derive(Serialize)]
        struct Export<'a> {
            tiling: Tiling,
            l: usize,
            l_requested: usize,
            l_w: usize,
            l_h: usize,
            cell_radius: f64,
            shift_w: f64,
            shift_h: f64,
            native_w: f64,
            native_h: f64,
            target_w: f64,
            target_h: f64,
            sites: &'a [Point],
            scaled_sites: Vec<Point>,
        }
        serde_json::to_string_pretty(&Export {
            tiling: self.tiling,
            l: self.len(),
            l_requested: self.requested_l,
            l_w: self.l_w,
            l_h: self.l_h,
            cell_radius: self.r,
            shift_w: self.shift_w,
            shift_h: self.shift_h,
            native_w: self.native.w(),
            native_h: self.native.h(),
            target_w: self.target.w(),
            target_h: self.target.h(),
            sites: &self.sites,
            scaled_sites: self.scaled_sites(),
        })
        .expect("lattice serialization cannot fail")
    }
}

/// Smallest-deviation feasible grid shape for `l` sites.
///
/// Hexagonal wrap needs an even column count (the row parity shift must
/// close around the torus) and at least one row; rectangular accepts any
/// factorization. Primary score: |L_W*L_H - l|; secondary: aspect deviation
/// of the native rectangle from the target.
fn snap_grid(
    rect: &RectangleDomain,
    l: usize,
    tiling: Tiling,
) -> Result<(usize, usize), CanonicalError> {
    let target_aspect = (rect.w() / rect.h()).ln();
    let mut best: Option<(usize, usize, usize, f64)> = None;
    let cap = 2 * l + 2;
    let mut consider = |lw: usize, lh: usize| {
        let miss = (lw * lh).abs_diff(l);
        let native_aspect = match tiling {
            Tiling::Hexagonal => (1.5 * lw as f64) / (3.0_f64.sqrt() * lh as f64),
            Tiling::Rectangular => lw as f64 / lh as f64,
        };
        let skew = (native_aspect.ln() - target_aspect).abs();
        let better = match &best {
            None => true,
            Some((_, _, bmiss, bskew)) => miss < *bmiss || (miss == *bmiss && skew < *bskew),
        };
        if better {
            best = Some((lw, lh, miss, skew));
        }
    };
    match tiling {
        Tiling::Hexagonal => {
            for lw in (2..=cap).step_by(2) {
                for lh in 1..=cap {
                    if lw * lh > l + l / 2 + 2 && lw * lh > l {
                        break;
                    }
                    consider(lw, lh);
                }
            }
        }
        Tiling::Rectangular => {
            for lw in 1..=l {
                for lh in 1..=l {
                    if lw * lh > l + l / 2 + 2 && lw * lh > l {
                        break;
                    }
                    consider(lw, lh);
                }
            }
        }
    }
    let (lw, lh, miss, _) = best.ok_or(CanonicalError::NoFeasibleLattice {
        tiling,
        requested: l,
        nearest: 2,
    })?;
    // A snap that more than halves or doubles the request is a config error,
    // not a rounding concession.
    if 2 * miss > l {
        return Err(CanonicalError::NoFeasibleLattice {
            tiling,
            requested: l,
            nearest: lw * lh,
        });
    }
    Ok((lw, lh))
}

/// Place `l` sites (snapped to the nearest feasible grid) on the torus over
/// `rect`. The native rectangle preserves the area of `rect`, so a uniform
/// density per unit area means the same thing on both.
pub fn place_lattice(
    rect: &RectangleDomain,
    l: usize,
    tiling: Tiling,
) -> Result<TorusLattice, CanonicalError> {
    if l == 0 {
        return Err(CanonicalError::Domain {
            what: "lattice: site count must be positive",
            value: l as f64,
        });
    }
    let (l_w, l_h) = snap_grid(rect, l, tiling)?;
    let n = l_w * l_h;
    let area = rect.area();
    let sqrt3 = 3.0_f64.sqrt();
    let (r, shift_w, shift_h, native) = match tiling {
        Tiling::Hexagonal => {
            // Area preservation fixes the circumradius: n * (3 sqrt(3)/2) R^2 = W H.
            let r = (2.0 * area / (3.0 * sqrt3 * n as f64)).sqrt();
            let native = RectangleDomain::new(1.5 * r * l_w as f64, sqrt3 * r * l_h as f64)?;
            (r, 0.75 * r, sqrt3 * r / 4.0, native)
        }
        Tiling::Rectangular => {
            let native = RectangleDomain::new(rect.w(), rect.h())?;
            let pw = rect.w() / l_w as f64;
            let ph = rect.h() / l_h as f64;
            let r = 0.5 * (pw * pw + ph * ph).sqrt();
            (r, 0.5 * pw, 0.5 * ph, native)
        }
    };
    let mut sites = Vec::with_capacity(n);
    for w in 0..l_w {
        for h in 0..l_h {
            let (x, y) = match tiling {
                Tiling::Hexagonal => (
                    // 0-based translation of the 1-based column parity rule:
                    // the first column is unshifted.
                    w as f64 * 1.5 * r + shift_w,
                    h as f64 * sqrt3 * r + (w % 2) as f64 * sqrt3 * r / 2.0 + shift_h,
                ),
                Tiling::Rectangular => (
                    w as f64 * native.w() / l_w as f64 + shift_w,
                    h as f64 * native.h() / l_h as f64 + shift_h,
                ),
            };
            sites.push(Point::new(
                x.rem_euclid(native.w()),
                y.rem_euclid(native.h()),
            ));
        }
    }
    Ok(TorusLattice {
        tiling,
        requested_l: l,
        l_w,
        l_h,
        r,
        shift_w,
        shift_h,
        target: rect.clone(),
        native,
        sites,
    })
}

/// Total received power sum_l d(r, r_l)^(-beta) with periodic distances on
/// the lattice's native torus.
pub fn total_received_power(
    r: Point,
    lat: &TorusLattice,
    lm: &LinkModel,
) -> Result<f64, CanonicalError> {
    let mut total = 0.0;
    for (k, s) in lat.sites().iter().enumerate() {
        let d = torus_distance(r, *s, &lat.native);
        if d == 0.0 {
            return Err(CanonicalError::PointOnSite { site: k });
        }
        total += d.powf(-lm.beta);
    }
    Ok(total)
}

/// Index and periodic distance of the nearest site (lowest index on ties).
pub fn serving_site(r: Point, lat: &TorusLattice) -> (usize, f64) {
    let mut best = f64::INFINITY;
    let mut arg = 0usize;
    for (k, s) in lat.sites().iter().enumerate() {
        let d = torus_distance(r, *s, &lat.native);
        if d < best {
            best = d;
            arg = k;
        }
    }
    (arg, best)
}

/// SINR at `r` when every cell carries the same load `alpha_c`:
/// d*^(-beta) / (alpha_c (P_T - d*^(-beta)) + sigma^2).
pub fn sinr_at(
    r: Point,
    lat: &TorusLattice,
    lm: &LinkModel,
    alpha_c: f64,
) -> Result<f64, CanonicalError> {
    if !(alpha_c > 0.0 && alpha_c <= 1.0) {
        return Err(CanonicalError::Domain {
            what: "sinr: uniform load must lie in (0, 1]",
            value: alpha_c,
        });
    }
    let (serving, d_star) = serving_site(r, lat);
    if d_star == 0.0 {
        return Err(CanonicalError::PointOnSite { site: serving });
    }
    let p_star = d_star.powf(-lm.beta);
    let p_total = total_received_power(r, lat, lm)?;
    Ok(p_star / (alpha_c * (p_total - p_star) + lm.sigma2))
}
