//! The flat-torus metric on a W x H rectangle with opposite edges identified.

use super::{Point, RectangleDomain};

/// Shortest wrapped absolute difference along one period. Algebraically this
/// is `(period / 2 pi) * acos(cos(2 pi d / period))`, but the min-wrap form is
/// exact in floating point where the acos form loses ~9 digits near d = 0.
fn wrap_abs(d: f64, period: f64) -> f64 {
    let r = d.rem_euclid(period);
    r.min(period - r)
}

/// Geodesic distance between two points of the flat torus.
pub fn torus_distance(a: Point, b: Point, rect: &RectangleDomain) -> f64 {
    let dw = wrap_abs(a.x - b.x, rect.w());
    let dh = wrap_abs(a.y - b.y, rect.h());
    (dw * dw + dh * dh).sqrt()
}

/// The signed wrapped displacement from `a` to `b`, each component in
/// (-period/2, period/2]. Useful for neighbor classification.
pub fn torus_delta(a: Point, b: Point, rect: &RectangleDomain) -> (f64, f64) {
    let wrap_signed = |d: f64, period: f64| {
        let r = d.rem_euclid(period);
        if r > 0.5 * period {
            r - period
        } else {
            r
        }
    };
    (
        wrap_signed(b.x - a.x, rect.w()),
        wrap_signed(b.y - a.y, rect.h()),
    )
}
