//! The side-length parameter problem: placing prevertices on the strip
//! boundary so that the mapped polygon has the prescribed side lengths.
//!
//! Unknowns (n - 3 for an n-gon): the log of the strip length R plus one
//! log-gap per interior prevertex of each boundary arc.  The four corner
//! prevertices are pinned at 0, R (bottom) and R + i, i (top).  Prevertices
//! on the two end arcs are parameterized through the half-plane coordinate
//! s = e^{pi z} (left end) or its reciprocal (right end), which keeps the
//! parameterization smooth while a prevertex migrates around the strip end
//! from one edge to the other.
//!
//! Residuals: every side-length ratio against the longest side.  That is
//! n - 1 conditions for n - 3 unknowns; two are redundant because the image
//! boundary closes automatically, so the system is solved in the
//! least-squares sense (the solution still zeroes every residual).

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;

use crate::geometry::Quadrilateral;
use crate::numerics::{ellipk, ellipk_complementary, solve_least_squares, NumericsError};

use super::fprime::{PrevertexSet, RuleSet};
use super::{MapOptions, ScMapError, StripMap, FORMAT_VERSION, PARAMETER_CONVENTION};

/// Bounds on log R during the solve; outside them the residual returns a
/// large constant penalty so the line search retreats.
const LOG_R_MIN: f64 = -9.0;
const LOG_R_MAX: f64 = 5.0;

/// Fallback strip position (in units of edge length) for the measure-zero
/// case of an end-arc coordinate landing exactly on the strip end.
const END_DEPTH: f64 = 219.0;

/// Vertex indices of the four boundary arcs between consecutive corners,
/// walked counterclockwise, corners excluded.
pub(crate) struct ArcLayout {
    pub n: usize,
    pub c: [usize; 4],
    pub left: Vec<usize>,
    pub bottom: Vec<usize>,
    pub right: Vec<usize>,
    pub top: Vec<usize>,
}

impl ArcLayout {
    pub fn new(q: &Quadrilateral) -> Self {
        let n = q.polygon.len();
        let c = q.corners();
        let walk = |from: usize, to: usize| {
            let mut v = Vec::new();
            let mut i = (from + 1) % n;
            while i != to {
                v.push(i);
                i = (i + 1) % n;
            }
            v
        };
        Self {
            n,
            c,
            left: walk(c[0], c[1]),
            bottom: walk(c[1], c[2]),
            right: walk(c[2], c[3]),
            top: walk(c[3], c[0]),
        }
    }
}

/// Turn cumulative log-gaps into strictly increasing interior fractions of
/// (0, 1): `k` unknowns yield `k` fractions (the trailing gap is pinned at
/// e^0 so the block has no scale redundancy).
fn fractions(ys: &[f64]) -> Vec<f64> {
    let mut gaps: Vec<f64> = ys.iter().map(|v| v.exp()).collect();
    gaps.push(1.0);
    let total: f64 = gaps.iter().sum();
    let mut acc = 0.0;
    gaps[..gaps.len() - 1]
        .iter()
        .map(|g| {
            acc += g;
            acc / total
        })
        .collect()
}

/// Expand the unknown vector into prevertex positions.  Returns the
/// prevertex set and the strip length R.
pub(crate) fn decode(y: &[f64], arcs: &ArcLayout, alpha: &[f64]) -> (PrevertexSet, f64) {
    let n = arcs.n;
    let r = y[0].exp();
    let mut x = vec![0.0; n];
    let mut top = vec![false; n];
    let [c1, c2, c3, c4] = arcs.c;
    x[c1] = 0.0;
    top[c1] = true;
    x[c2] = 0.0;
    x[c3] = r;
    x[c4] = r;
    top[c4] = true;

    let mut off = 1usize;

    // Left end arc, c1 -> c2: s runs monotonically from -1 (corner c1, top)
    // through 0 (the strip end at Re z = -inf) to +1 (corner c2, bottom).
    let fs = fractions(&y[off..off + arcs.left.len()]);
    off += arcs.left.len();
    for (j, &v) in arcs.left.iter().enumerate() {
        let s = -1.0 + 2.0 * fs[j];
        if s > 0.0 {
            x[v] = s.ln() / PI;
        } else if s < 0.0 {
            top[v] = true;
            x[v] = (-s).ln() / PI;
        } else {
            x[v] = -END_DEPTH;
        }
    }

    // Bottom arc, c2 -> c3: positions increase across (0, R).
    let fs = fractions(&y[off..off + arcs.bottom.len()]);
    off += arcs.bottom.len();
    for (j, &v) in arcs.bottom.iter().enumerate() {
        x[v] = r * fs[j];
    }

    // Right end arc, c3 -> c4: the reciprocal coordinate u = e^{-pi z}
    // runs from e^{-pi R} (corner c3, bottom) through 0 (the end at
    // Re z = +inf) to -e^{-pi R} (corner c4, top).
    let fs = fractions(&y[off..off + arcs.right.len()]);
    off += arcs.right.len();
    let u_corner = (-PI * r).exp();
    for (j, &v) in arcs.right.iter().enumerate() {
        let u = u_corner * (1.0 - 2.0 * fs[j]);
        if u > 0.0 {
            x[v] = -u.ln() / PI;
        } else if u < 0.0 {
            top[v] = true;
            x[v] = -(-u).ln() / PI;
        } else {
            x[v] = r + END_DEPTH;
        }
    }

    // Top arc, c4 -> c1: positions decrease across (R, 0).
    let fs = fractions(&y[off..off + arcs.top.len()]);
    for (j, &v) in arcs.top.iter().enumerate() {
        top[v] = true;
        x[v] = r * (1.0 - fs[j]);
    }

    (PrevertexSet::new(x, top, alpha.to_vec()), r)
}

/// Raw integral of f' along polygon side k (prevertex k to prevertex k+1).
/// Same-edge sides integrate straight along the edge; sides whose endpoints
/// sit on opposite edges are routed through the mid-strip line, which is
/// valid by path independence and keeps every leg away from the boundary
/// singularities.
pub(crate) fn side_integral(pv: &PrevertexSet, rules: &RuleSet, k: usize) -> Complex64 {
    let n = pv.len();
    let k1 = (k + 1) % n;
    let za = pv.point(k);
    let zb = pv.point(k1);
    if pv.top[k] == pv.top[k1] {
        pv.integrate(za, zb, Some(k), Some(k1), rules)
    } else {
        let ma = Complex64::new(za.re, 0.5);
        let mb = Complex64::new(zb.re, 0.5);
        pv.integrate(za, ma, Some(k), None, rules)
            + pv.integrate(ma, mb, None, None, rules)
            + pv.integrate(mb, zb, None, Some(k1), rules)
    }
}

/// Conformal module of the strip of length `r`: with m = e^{-2 pi R},
/// m(Q) = K(1-m) / (2 K(m)).  For tiny m the asymptotic forms of K keep
/// full accuracy where 1 - m would round to 1.
pub(crate) fn module_from_strip_length(r: f64) -> Result<f64, NumericsError> {
    if !(r.is_finite() && r > 0.0) {
        return Err(NumericsError::Domain {
            what: "module_from_strip_length: strip length must be positive",
            value: r,
        });
    }
    let m = (-2.0 * PI * r).exp();
    if m < 1e-14 {
        // K(m) -> pi/2, K(1-m) -> ln(4/sqrt(m)); the dropped terms are O(m ln m)
        Ok((2.0 * LN_2 + PI * r) / PI)
    } else {
        Ok(ellipk_complementary(m)? / (2.0 * ellipk(m)?))
    }
}

/// Inverse of `module_from_strip_length` by bisection (the module is
/// strictly increasing in the strip length).
pub(crate) fn strip_length_for_module(mq: f64) -> Result<f64, NumericsError> {
    if !(mq.is_finite() && mq > 0.0) {
        return Err(NumericsError::Domain {
            what: "strip_length_for_module: module must be positive",
            value: mq,
        });
    }
    let (mut lo, mut hi) = (1e-6, 120.0);
    if module_from_strip_length(lo)? >= mq {
        return Ok(lo);
    }
    if module_from_strip_length(hi)? <= mq {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if module_from_strip_length(mid)? < mq {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Starting point for the solve: strip length from the ratio of opposite
/// boundary-arc lengths, gap logs from the chord lengths along each arc.
fn initial_guess(q: &Quadrilateral, arcs: &ArcLayout) -> Vec<f64> {
    let pts = q.polygon.vertices();
    let n = arcs.n;
    let side_len = |k: usize| pts[k].dist(pts[(k + 1) % n]);
    let arc_chords = |a: usize, b: usize| {
        let mut v = Vec::new();
        let mut k = a;
        loop {
            v.push(side_len(k));
            k = (k + 1) % n;
            if k == b {
                break;
            }
        }
        v
    };
    let plen = |a: usize, b: usize| arc_chords(a, b).iter().sum::<f64>();
    let [c1, c2, c3, c4] = arcs.c;
    let est_m = ((plen(c2, c3) + plen(c4, c1)) / (plen(c1, c2) + plen(c3, c4))).clamp(0.05, 20.0);
    let r0 = strip_length_for_module(est_m).unwrap_or(1.0);

    let mut y = vec![r0.ln()];
    for (a, b) in [(c1, c2), (c2, c3), (c3, c4), (c4, c1)] {
        let ch = arc_chords(a, b);
        let last = ch[ch.len() - 1];
        for c in &ch[..ch.len() - 1] {
            y.push((c / last).ln());
        }
    }
    y
}

pub fn solve_strip_parameters(
    q: &Quadrilateral,
    opts: &MapOptions,
) -> Result<StripMap, ScMapError> {
    let poly = &q.polygon;
    let n = poly.len();
    let alpha = poly.angle_fractions().to_vec();
    let arcs = ArcLayout::new(q);
    let rules = RuleSet::new(&alpha, opts.nodes_per_panel)?;
    let pts: Vec<Complex64> = poly.vertices().iter().map(|&p| p.into()).collect();
    let target: Vec<f64> = (0..n).map(|k| (pts[(k + 1) % n] - pts[k]).norm()).collect();

    let iref = (0..n)
        .max_by(|&a, &b| target[a].partial_cmp(&target[b]).unwrap())
        .unwrap();
    let conds: Vec<usize> = (0..n).filter(|&k| k != iref).collect();

    let y0 = initial_guess(q, &arcs);
    let residual = |y: &[f64]| -> Vec<f64> {
        if !(LOG_R_MIN..=LOG_R_MAX).contains(&y[0]) {
            return vec![1e6; conds.len()];
        }
        let (pv, _) = decode(y, &arcs, &alpha);
        let ref_len = side_integral(&pv, &rules, iref).norm();
        if !ref_len.is_finite() || ref_len == 0.0 {
            return vec![1e6; conds.len()];
        }
        conds
            .iter()
            .map(|&k| {
                let v = side_integral(&pv, &rules, k).norm() / ref_len - target[k] / target[iref];
                if v.is_finite() {
                    v
                } else {
                    1e6
                }
            })
            .collect()
    };

    let y = solve_least_squares(residual, &y0, opts.solver_tol)?;
    let (pv, r) = decode(&y, &arcs, &alpha);

    // Scale and offset: pin the corner images f(0) = zeta_{c2} and
    // f(R) = zeta_{c3} through the integral along the bottom arc.
    let mut bottom = Complex64::new(0.0, 0.0);
    let mut k = arcs.c[1];
    while k != arcs.c[2] {
        bottom += side_integral(&pv, &rules, k);
        k = (k + 1) % n;
    }
    let c = (pts[arcs.c[2]] - pts[arcs.c[1]]) / bottom;
    let a = pts[arcs.c[1]];

    // Walk the whole boundary accumulating side images; every vertex must
    // land on its target or the solve (or a branch) is wrong.
    let diam = poly.diameter();
    let mut worst: f64 = 0.0;
    let mut img = pts[arcs.c[1]];
    let mut k = arcs.c[1];
    loop {
        img += c * side_integral(&pv, &rules, k);
        k = (k + 1) % n;
        worst = worst.max((img - pts[k]).norm());
        if k == arcs.c[1] {
            break;
        }
    }
    if worst > opts.validate_tol * diam {
        return Err(ScMapError::Validation {
            error: worst,
            tol: opts.validate_tol * diam,
        });
    }

    let module = module_from_strip_length(r)?;
    Ok(StripMap {
        version: FORMAT_VERSION,
        quad: q.clone(),
        prevertex_x: pv.x,
        prevertex_top: pv.top,
        strip_length: r,
        elliptic_m: (-2.0 * PI * r).exp(),
        module,
        scale_c: c,
        offset_a: a,
        nodes_per_panel: opts.nodes_per_panel,
        convention: PARAMETER_CONVENTION.to_string(),
    })
}

/// Conformal module of a quadrilateral: solves the full parameter problem
/// and reports the height of the canonical rectangle with unit base.
pub fn conformal_module(q: &Quadrilateral) -> Result<f64, ScMapError> {
    Ok(solve_strip_parameters(q, &MapOptions::default())?.module)
}
