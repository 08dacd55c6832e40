//! Derivative of the strip-to-polygon map and its path integrals.
//!
//! On the strip 0 <= Im z <= 1 the map derivative factors as
//!
//! ```text
//! f'(z) = C * prod_k sinh(pi/2 (z - z_k))^(alpha_k - 1)
//! ```
//!
//! with one factor per polygon vertex, `z_k` the prevertex on the strip
//! boundary and `alpha_k` the interior angle fraction.  The product is
//! accumulated in log form so that deep end regions (|Re z| large) neither
//! overflow nor lose the exponential decay `|f'| ~ e^{-pi |Re z|}`.
//!
//! Each factor must be analytic in the open strip.  For a prevertex on the
//! bottom edge (Im z_k = 0) the value sinh(pi/2 (z - z_k)) stays in the
//! closed upper half plane, so the principal logarithm is the right branch;
//! for a prevertex on the top edge the value stays in the closed lower half
//! plane and the reflected branch conj(Log(conj(w))) is used instead.

use num_complex::Complex64;

use crate::numerics::{gauss_jacobi_rule, NumericsError, QuadratureRule};

/// Maximum bisection depth when subdividing a regular integration segment.
const MAX_SPLIT_DEPTH: u32 = 48;

/// Prevertex data in the form needed by evaluation: strip positions, side
/// flags and angle fractions, all indexed by polygon vertex.
#[derive(Debug, Clone)]
pub(crate) struct PrevertexSet {
    /// Position along the strip edge (real part of the prevertex).
    pub x: Vec<f64>,
    /// True if the prevertex lies on the top edge Im z = 1.
    pub top: Vec<bool>,
    /// Interior angle fractions alpha_k of the target polygon.
    pub alpha: Vec<f64>,
    /// Length scale of the prevertex configuration, used in tolerances.
    pub scale: f64,
}

impl PrevertexSet {
    pub fn new(x: Vec<f64>, top: Vec<bool>, alpha: Vec<f64>) -> Self {
        debug_assert_eq!(x.len(), top.len());
        debug_assert_eq!(x.len(), alpha.len());
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &x {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let scale = (hi - lo).max(1.0);
        Self { x, top, alpha, scale }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn point(&self, k: usize) -> Complex64 {
        Complex64::new(self.x[k], if self.top[k] { 1.0 } else { 0.0 })
    }

    /// Distance from `z` to the nearest prevertex, excluding index `skip`.
    fn min_dist(&self, z: Complex64, skip: Option<usize>) -> f64 {
        let mut best = f64::INFINITY;
        for k in 0..self.len() {
            if Some(k) == skip {
                continue;
            }
            best = best.min((z - self.point(k)).norm());
        }
        best
    }

    /// log f'(z) up to the multiplicative constant: sum over vertices of
    /// (alpha_k - 1) * log sinh(pi/2 (z - z_k)) on the branch dictated by
    /// the prevertex side.
    pub fn log_fprime(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..self.len() {
            let e = self.alpha[k] - 1.0;
            if e == 0.0 {
                continue;
            }
            acc += e * self.log_factor(z, k);
        }
        acc
    }

    /// Branch-correct log sinh(pi/2 (z - z_k)) for vertex k.
    fn log_factor(&self, z: Complex64, k: usize) -> Complex64 {
        let w = log_sinh_half_pi(z - self.point(k));
        if self.top[k] {
            // Value lies in the closed lower half plane; reflect so the
            // branch cut stays on the unused side.
            Complex64::new(w.re, clamp_arg_lower(w.im))
        } else {
            Complex64::new(w.re, clamp_arg_upper(w.im))
        }
    }

    /// Raw path integral of f' (without the constant C) from `a` to `b`
    /// along the straight segment, where `sa`/`sb` mark an endpoint that is
    /// exactly the prevertex of that vertex index.  The integrand is
    /// analytic in the open strip, so the caller may route through any
    /// interior polyline by summing segment integrals.
    pub fn integrate(
        &self,
        a: Complex64,
        b: Complex64,
        sa: Option<usize>,
        sb: Option<usize>,
        rules: &RuleSet,
    ) -> Complex64 {
        if a == b {
            return Complex64::new(0.0, 0.0);
        }
        match (sa, sb) {
            (Some(_), Some(_)) => {
                let mid = 0.5 * (a + b);
                self.integrate(a, mid, sa, None, rules) + self.integrate(mid, b, None, sb, rules)
            }
            (None, Some(k)) => -self.integrate(b, a, Some(k), None, rules),
            (Some(k), None) => {
                let len = (b - a).norm();
                // Cap the singular panel at half the distance to the nearest
                // other prevertex so the far endpoint keeps a safe margin.
                let d = 0.5 * self.min_dist(a, Some(k));
                if len <= d || d == 0.0 {
                    self.singular_panel(a, b, k, rules)
                } else {
                    let b1 = a + (b - a) * (d / len);
                    self.singular_panel(a, b1, k, rules) + self.regular(b1, b, 0, rules)
                }
            }
            (None, None) => self.regular(a, b, 0, rules),
        }
    }

    /// Compound Gauss-Legendre integration of a segment with no singular
    /// endpoint.  A panel is accepted only when both endpoints are at least
    /// one full panel length away from every prevertex; otherwise it is
    /// bisected.  That keeps the Bernstein ellipse parameter of the scaled
    /// panel above 2 + sqrt(3), so a 12-node rule resolves each panel to
    /// ~1e-14 relative error.
    fn regular(&self, p: Complex64, q: Complex64, depth: u32, rules: &RuleSet) -> Complex64 {
        let len = (q - p).norm();
        if len == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if depth >= MAX_SPLIT_DEPTH || len < 1e-14 * self.scale {
            return self.plain_panel(p, q, rules);
        }
        if self.min_dist(p, None) >= len && self.min_dist(q, None) >= len {
            return self.plain_panel(p, q, rules);
        }
        let mid = 0.5 * (p + q);
        self.regular(p, mid, depth + 1, rules) + self.regular(mid, q, depth + 1, rules)
    }

    fn plain_panel(&self, p: Complex64, q: Complex64, rules: &RuleSet) -> Complex64 {
        let rule = &rules.plain;
        let mut acc = Complex64::new(0.0, 0.0);
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let t = 0.5 * (1.0 + x);
            let y = p + (q - p) * t;
            acc += w * self.log_fprime(y).exp();
        }
        0.5 * (q - p) * acc
    }

    /// Gauss-Jacobi panel with the singularity of vertex `k` at endpoint `a`.
    /// The factor |y - z_k|^(alpha_k - 1) is absorbed into the quadrature
    /// weight; what remains of the integrand is smooth.
    fn singular_panel(&self, a: Complex64, b: Complex64, k: usize, rules: &RuleSet) -> Complex64 {
        let e = self.alpha[k] - 1.0;
        let rule = &rules.start[k];
        let mut acc = Complex64::new(0.0, 0.0);
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let t = 0.5 * (1.0 + x);
            let y = a + (b - a) * t;
            // Divide out t^e in log space; the quadrature weight carries it.
            let g = (self.log_fprime(y) - Complex64::new(e * t.ln(), 0.0)).exp();
            acc += w * g;
        }
        (b - a) * 0.5f64.powf(1.0 + e) * acc
    }
}

/// Quadrature rules shared by all panel evaluations for one prevertex set:
/// one plain Gauss-Legendre rule and one Gauss-Jacobi rule per vertex with
/// the singular weight at the panel start.
#[derive(Debug, Clone)]
pub(crate) struct RuleSet {
    plain: QuadratureRule,
    start: Vec<QuadratureRule>,
}

impl RuleSet {
    pub fn new(alpha: &[f64], nodes: usize) -> Result<Self, NumericsError> {
        let plain = gauss_jacobi_rule(nodes, 0.0, 0.0)?;
        let start = alpha
            .iter()
            .map(|&a| gauss_jacobi_rule(nodes, 0.0, a - 1.0))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { plain, start })
    }
}

/// log sinh(pi/2 w) computed without overflow for large |Re w|, with the
/// imaginary part normalized to the principal range (-pi, pi].
///
/// For |Re(pi/2 w)| > 20 the exponential form sinh(u) = ±e^{∓u}(1 - e^{±2u})/2
/// is used directly in log space.
fn log_sinh_half_pi(w: Complex64) -> Complex64 {
    let u = w * (std::f64::consts::PI / 2.0);
    if u.re.abs() <= 20.0 {
        let s = u.sinh();
        // sinh(u) can underflow to zero only at u = 0 where the caller
        // guarantees a declared singular endpoint.
        Complex64::new(s.norm().ln(), s.arg())
    } else if u.re > 0.0 {
        // sinh(u) = e^u (1 - e^{-2u}) / 2
        let corr = 1.0 - (-2.0 * u).exp();
        Complex64::new(
            u.re - std::f64::consts::LN_2 + corr.norm().ln(),
            normalize_arg(u.im + corr.arg()),
        )
    } else {
        // sinh(u) = -e^{-u} (1 - e^{2u}) / 2, and -1 contributes pi to the arg.
        let corr = 1.0 - (2.0 * u).exp();
        Complex64::new(
            -u.re - std::f64::consts::LN_2 + corr.norm().ln(),
            normalize_arg(std::f64::consts::PI - u.im + corr.arg()),
        )
    }
}

/// Wrap an angle into (-pi, pi].
fn normalize_arg(mut a: f64) -> f64 {
    while a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    while a <= -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

/// Snap the argument of a value that should lie in the closed upper half
/// plane: an argument slightly below 0 or below -pi + eps from rounding is
/// folded back onto the correct branch.
fn clamp_arg_upper(arg: f64) -> f64 {
    if arg < -std::f64::consts::FRAC_PI_2 {
        // A value meant for the upper half plane rounded just below the
        // negative real axis: fold -pi onto +pi.
        arg + 2.0 * std::f64::consts::PI
    } else {
        arg
    }
}

/// Mirror image of `clamp_arg_upper` for values in the closed lower half
/// plane (top-edge prevertices).
fn clamp_arg_lower(arg: f64) -> f64 {
    if arg > std::f64::consts::FRAC_PI_2 {
        arg - 2.0 * std::f64::consts::PI
    } else {
        arg
    }
}
