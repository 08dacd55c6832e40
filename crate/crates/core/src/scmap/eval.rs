//! Evaluation of a solved map: rectangle -> strip -> polygon, the Newton
//! inverse (polygon -> rectangle), and the derivative of the composite.

use num_complex::Complex64;

use crate::geometry::{Quadrilateral, RectangleDomain};
use crate::numerics::{ellipk, jacobi_sn_cn_dn_complex};

use super::fprime::{PrevertexSet, RuleSet};
use super::{ScMapError, StripMap};

/// Forward-map Newton: convergence threshold relative to the polygon
/// diameter, iteration cap, and number of seed candidates tried.
const FORWARD_TOL: f64 = 1e-10;
const FORWARD_MAX_ITER: usize = 100;
const FORWARD_SEEDS: usize = 6;
/// Seed grid resolution per axis for the forward-map starting guesses.
const SEED_GRID: usize = 20;

/// A solved strip map bundled with everything needed to evaluate it:
/// prevertex data, per-vertex quadrature rules, the elliptic constants of
/// the rectangle-to-strip leg, and a seed grid for inverting the map.
///
/// The composite `map_inverse` sends the canonical rectangle
/// `[0,1] x [0, m(Q)]` onto the polygon; `map_forward` is its inverse.
pub struct ConformalMapPair {
    map: StripMap,
    pv: PrevertexSet,
    rules: RuleSet,
    kk: f64,
    /// Clamp bounds on Re z: beyond them the integrand tail is below 1e-16
    /// of the polygon scale, so evaluation treats the point as the strip end.
    x_lo: f64,
    x_hi: f64,
    diam: f64,
    vertex_images: Vec<Complex64>,
    seeds: Vec<(Complex64, Complex64)>,
}

impl ConformalMapPair {
    pub fn new(map: StripMap) -> Result<Self, ScMapError> {
        // The rectangle leg needs K(1-m) resolvable in f64; this bounds the
        // strip length (module up to ~5.5), far beyond realistic service
        // areas but cheap to check here rather than fail obscurely later.
        if map.elliptic_m < 1e-14 {
            return Err(ScMapError::ModuleOutOfRange {
                module: map.module,
            });
        }
        let poly = &map.quad.polygon;
        let alpha = poly.angle_fractions().to_vec();
        let pv = PrevertexSet::new(map.prevertex_x.clone(), map.prevertex_top.clone(), alpha);
        let rules = RuleSet::new(&pv.alpha, map.nodes_per_panel)?;
        let kk = ellipk(map.elliptic_m)?;
        let x_min = map.prevertex_x.iter().cloned().fold(0.0f64, f64::min);
        let x_max = map
            .prevertex_x
            .iter()
            .cloned()
            .fold(map.strip_length, f64::max);
        let diam = poly.diameter();
        let vertex_images = poly.vertices().iter().map(|&p| p.into()).collect();
        let mut pair = Self {
            map,
            pv,
            rules,
            kk,
            x_lo: x_min - 12.0,
            x_hi: x_max + 12.0,
            diam,
            vertex_images,
            seeds: Vec::new(),
        };
        pair.seeds = pair.build_seeds()?;
        Ok(pair)
    }

    fn build_seeds(&self) -> Result<Vec<(Complex64, Complex64)>, ScMapError> {
        let mq = self.map.module;
        let mut seeds = Vec::with_capacity(SEED_GRID * SEED_GRID);
        for i in 0..SEED_GRID {
            for j in 0..SEED_GRID {
                let w = Complex64::new(
                    (i as f64 + 0.5) / SEED_GRID as f64,
                    (j as f64 + 0.5) / SEED_GRID as f64 * mq,
                );
                seeds.push((w, self.map_inverse(w)?));
            }
        }
        Ok(seeds)
    }

    pub fn stripmap(&self) -> &StripMap {
        &self.map
    }

    pub fn quad(&self) -> &Quadrilateral {
        &self.map.quad
    }

    pub fn module(&self) -> f64 {
        self.map.module
    }

    pub fn strip_length(&self) -> f64 {
        self.map.strip_length
    }

    /// The canonical rectangle [0,1] x [0, m(Q)] this map works on.
    pub fn canonical_rectangle(&self) -> RectangleDomain {
        RectangleDomain::new(1.0, self.map.module).expect("module is validated positive")
    }

    /// Rectangle -> strip leg: z = log(sn(2K w - K | m)) / pi.
    ///
    /// `w` must lie in the closed canonical rectangle.  The two edge
    /// midpoints that map to the strip ends come back clamped at the far
    /// evaluation bounds rather than +-infinity.
    pub fn rect_to_strip(&self, w: Complex64) -> Result<Complex64, ScMapError> {
        let mq = self.map.module;
        let tol = 1e-9 * (1.0 + mq);
        if w.re < -tol || w.re > 1.0 + tol || w.im < -tol || w.im > mq + tol {
            return Err(ScMapError::OutsideDomain {
                domain: "canonical rectangle",
                re: w.re,
                im: w.im,
            });
        }
        let wh = Complex64::new(
            2.0 * self.kk * w.re.clamp(0.0, 1.0) - self.kk,
            2.0 * self.kk * w.im.clamp(0.0, mq),
        );
        let sn = match jacobi_sn_cn_dn_complex(wh, self.map.elliptic_m) {
            Ok((sn, _, _)) => sn,
            // The only failure for a valid parameter is the pole at the
            // top-edge midpoint: the +infinity end of the strip.
            Err(_) => return Ok(Complex64::new(self.x_hi, 0.0)),
        };
        if sn.norm() == 0.0 {
            // Bottom-edge midpoint: the -infinity end.
            return Ok(Complex64::new(self.x_lo, 0.0));
        }
        let z = sn.ln() / std::f64::consts::PI;
        // Interior points have arg(sn) in (0, pi).  Rounding noise on the
        // strip's top edge (sn real negative) can flip arg to -pi; fold it
        // back up rather than letting the clamp drop it onto the bottom edge.
        let im = if z.im < -0.5 { z.im + 2.0 } else { z.im };
        Ok(Complex64::new(
            z.re.clamp(self.x_lo, self.x_hi),
            im.clamp(0.0, 1.0),
        ))
    }

    /// Strip -> polygon leg: f(z) anchored at the nearest prevertex and
    /// integrated through the mid-strip line.  `z` must lie in the closed
    /// strip; Re z is clamped to the far evaluation bounds.
    pub fn strip_to_polygon(&self, z: Complex64) -> Result<Complex64, ScMapError> {
        if z.im < -1e-9 || z.im > 1.0 + 1e-9 {
            return Err(ScMapError::OutsideDomain {
                domain: "strip 0 <= Im z <= 1",
                re: z.re,
                im: z.im,
            });
        }
        let z = Complex64::new(z.re.clamp(self.x_lo, self.x_hi), z.im.clamp(0.0, 1.0));

        // At (or numerically at) a prevertex the image is the vertex itself.
        let mut anchor = 0usize;
        let mut best = f64::INFINITY;
        for k in 0..self.pv.len() {
            let d = (z - self.pv.point(k)).norm();
            if d < best {
                best = d;
                anchor = k;
            }
        }
        if best < 1e-13 * self.pv.scale {
            return Ok(self.vertex_images[anchor]);
        }

        let za = self.pv.point(anchor);
        let m1 = Complex64::new(za.re, 0.5);
        let m2 = Complex64::new(z.re, 0.5);
        let integral = self.pv.integrate(za, m1, Some(anchor), None, &self.rules)
            + self.pv.integrate(m1, m2, None, None, &self.rules)
            + self.pv.integrate(m2, z, None, None, &self.rules);
        Ok(self.vertex_images[anchor] + self.map.scale_c * integral)
    }

    /// F^{-1}: canonical rectangle -> polygon.
    pub fn map_inverse(&self, w: Complex64) -> Result<Complex64, ScMapError> {
        self.strip_to_polygon(self.rect_to_strip(w)?)
    }

    /// d F^{-1} / d w at an interior rectangle point: f'(g(w)) g'(w) with
    /// g'(w) = (2K/pi) cn dn / sn.
    pub fn map_derivative(&self, w: Complex64) -> Result<Complex64, ScMapError> {
        let mq = self.map.module;
        if !(w.re > 0.0 && w.re < 1.0 && w.im > 0.0 && w.im < mq) {
            return Err(ScMapError::OutsideDomain {
                domain: "open canonical rectangle",
                re: w.re,
                im: w.im,
            });
        }
        let wh = Complex64::new(2.0 * self.kk * w.re - self.kk, 2.0 * self.kk * w.im);
        let (sn, cn, dn) = jacobi_sn_cn_dn_complex(wh, self.map.elliptic_m)?;
        let z = sn.ln() / std::f64::consts::PI;
        let fp = self.map.scale_c * self.pv.log_fprime(z).exp();
        let gp = (2.0 * self.kk / std::f64::consts::PI) * cn * dn / sn;
        Ok(fp * gp)
    }

    /// F: polygon -> canonical rectangle, by damped Newton on
    /// F^{-1}(w) = zeta seeded from a precomputed image grid.
    pub fn map_forward(&self, zeta: Complex64) -> Result<Complex64, ScMapError> {
        if !self
            .map
            .quad
            .polygon
            .contains(crate::geometry::Point::new(zeta.re, zeta.im))
        {
            return Err(ScMapError::OutsideDomain {
                domain: "polygon",
                re: zeta.re,
                im: zeta.im,
            });
        }
        // Rank the seed grid by image distance and try the closest few.
        let mut order: Vec<usize> = (0..self.seeds.len()).collect();
        order.sort_by(|&a, &b| {
            let da = (self.seeds[a].1 - zeta).norm();
            let db = (self.seeds[b].1 - zeta).norm();
            da.partial_cmp(&db).unwrap()
        });
        let mut best_res = f64::INFINITY;
        for &si in order.iter().take(FORWARD_SEEDS) {
            match self.newton_from(self.seeds[si].0, zeta) {
                Ok(w) => return Ok(w),
                Err(r) => best_res = best_res.min(r),
            }
        }
        Err(ScMapError::ForwardNoConvergence {
            re: zeta.re,
            im: zeta.im,
            best: best_res,
        })
    }

    /// F seeded from a caller-provided starting rectangle point; used for
    /// warm-started sweeps over neighboring targets.  Falls back to the
    /// seed-grid search when the warm start stalls.
    pub fn map_forward_from(&self, zeta: Complex64, w0: Complex64) -> Result<Complex64, ScMapError> {
        match self.newton_from(w0, zeta) {
            Ok(w) => Ok(w),
            Err(_) => self.map_forward(zeta),
        }
    }

    /// Damped, domain-projected Newton iteration on F^{-1}(w) - zeta.
    /// Returns the best residual on failure for diagnostics.
    fn newton_from(&self, w0: Complex64, zeta: Complex64) -> Result<Complex64, f64> {
        let mq = self.map.module;
        let eps = 1e-12;
        let clamp = |w: Complex64| {
            Complex64::new(
                w.re.clamp(eps, 1.0 - eps),
                w.im.clamp(eps * mq, (1.0 - eps) * mq),
            )
        };
        let tol = FORWARD_TOL * self.diam;
        let mut w = clamp(w0);
        let mut r = match self.map_inverse(w) {
            Ok(img) => img - zeta,
            Err(_) => return Err(f64::INFINITY),
        };
        let mut rn = r.norm();
        for _ in 0..FORWARD_MAX_ITER {
            if rn <= tol {
                return Ok(w);
            }
            let d = match self.map_derivative(w) {
                Ok(d) if d.norm() > 0.0 && d.is_finite() => d,
                _ => return Err(rn),
            };
            let step = r / d;
            let mut lambda = 1.0_f64;
            let mut advanced = false;
            for _ in 0..30 {
                let wt = clamp(w - lambda * step);
                if let Ok(img) = self.map_inverse(wt) {
                    let rt = img - zeta;
                    if rt.norm() < rn {
                        w = wt;
                        r = rt;
                        rn = rt.norm();
                        advanced = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !advanced {
                return Err(rn);
            }
        }
        if rn <= tol {
            Ok(w)
        } else {
            Err(rn)
        }
    }
}
