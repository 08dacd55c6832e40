//! Elliptic integrals and Jacobi elliptic functions.
//!
//! Everything here uses the *parameter* convention `m = k^2` (so
//! `sn(kappa | m) = sin(phi)` where `kappa = F(phi | m)`). Real arguments are
//! computed by AGM / Landen transformations; the complex extension needed by
//! the rectangle-to-strip map uses the real/imaginary addition identities.

use num_complex::Complex64;

use super::NumericsError;

// Stop once c/a is below ~1 ulp; a tighter threshold can stall on the final
// half-ulp oscillation of the mean pair.
const AGM_EPS: f64 = 1e-15;
const MAX_AGM_ITER: usize = 40;

/// Complete elliptic integral of the first kind, K(m), via the
/// arithmetic-geometric mean. Requires `m < 1`.
pub fn ellipk(m: f64) -> Result<f64, NumericsError> {
    if !(0.0..1.0).contains(&m) {
        return Err(NumericsError::Domain {
            what: "ellipk: m must lie in [0, 1)",
            value: m,
        });
    }
    let mut a = 1.0_f64;
    let mut b = (1.0 - m).sqrt();
    for _ in 0..MAX_AGM_ITER {
        if (a - b).abs() <= AGM_EPS * a {
            break;
        }
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
    }
    Ok(std::f64::consts::PI / (2.0 * a))
}

/// The complementary integral K(1 - m) evaluated from `m` itself, so callers
/// never form `1 - m` in floating point (which would throw away the relative
/// precision of a tiny `m` that K(1 - m) ~ ln(4/sqrt(m)) depends on).
/// Requires `m > 0`.
pub fn ellipk_complementary(m: f64) -> Result<f64, NumericsError> {
    if !(m > 0.0 && m <= 1.0) {
        return Err(NumericsError::Domain {
            what: "ellipk_complementary: m must lie in (0, 1]",
            value: m,
        });
    }
    // AGM for parameter 1 - m starts from b0 = sqrt(1 - (1 - m)) = sqrt(m).
    let mut a = 1.0_f64;
    let mut b = m.sqrt();
    for _ in 0..MAX_AGM_ITER {
        if (a - b).abs() <= AGM_EPS * a {
            break;
        }
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
    }
    Ok(std::f64::consts::PI / (2.0 * a))
}

/// Incomplete elliptic integral of the first kind,
/// `F(phi | m) = integral_0^phi dt / sqrt(1 - m sin^2 t)`,
/// for `phi` in `[0, pi/2]` and `m` in `[0, 1)`.
///
/// Ascending Landen transformation on the tangent of the amplitude; the
/// amplitude roughly doubles per step while the AGM scale converges
/// quadratically, so ~8 iterations reach full precision.
pub fn incomplete_elliptic_f(phi: f64, m: f64) -> Result<f64, NumericsError> {
    use std::f64::consts::{FRAC_PI_2, PI};
    if !(0.0..1.0).contains(&m) {
        return Err(NumericsError::Domain {
            what: "incomplete_elliptic_f: m must lie in [0, 1)",
            value: m,
        });
    }
    if !(0.0..=FRAC_PI_2).contains(&phi) {
        return Err(NumericsError::Domain {
            what: "incomplete_elliptic_f: phi must lie in [0, pi/2]",
            value: phi,
        });
    }
    if m == 0.0 {
        return Ok(phi);
    }
    if phi == 0.0 {
        return Ok(0.0);
    }
    if (phi - FRAC_PI_2).abs() < 1e-14 {
        return ellipk(m);
    }

    let mut a = 1.0_f64;
    let mut b = (1.0 - m).sqrt();
    let mut c = m.sqrt();
    let mut scale = 1.0_f64; // 2^n
    let mut t = phi.tan();
    let mut amp = phi; // running (un-renormalized) amplitude
    let mut whole: f64 = 0.0; // multiple of pi contained in `amp`

    for _ in 0..MAX_AGM_ITER {
        if (c / a).abs() <= AGM_EPS {
            break;
        }
        let ratio = b / a;
        amp += (t * ratio).atan() + whole * PI;
        let denom = 1.0 - ratio * t * t;
        if denom.abs() > 1e-12 {
            t = t * (1.0 + ratio) / denom;
            whole = ((amp + FRAC_PI_2) / PI).floor();
        } else {
            t = amp.tan();
            whole = ((amp - t.atan()) / PI).floor();
        }
        c = 0.5 * (a - b);
        let ab = (a * b).sqrt();
        a = 0.5 * (a + b);
        b = ab;
        scale += scale;
    }
    Ok((t.atan() + whole * PI) / (scale * a))
}

/// Jacobi elliptic functions sn, cn, dn of a real argument.
///
/// Descending Gauss/Landen recursion for the amplitude (A&S 16.4): valid for
/// any real `kappa` (oddness and the 4K(m) period come out of the recursion
/// rather than from explicit reduction).
pub fn jacobi_sn_cn_dn(kappa: f64, m: f64) -> Result<(f64, f64, f64), NumericsError> {
    jacobi_sn_cn_dn_mc(kappa, m, 1.0 - m)
}

/// Same, with the complement `mc = 1 - m` supplied exactly by the caller.
///
/// The complex extension runs its imaginary leg at parameter `1 - m`, whose
/// complement is the original tiny `m`; re-deriving it as `1 - (1 - m)` would
/// truncate it and with it dn near the quarter period, where
/// dn = sqrt(cn^2 + mc sn^2) is of order sqrt(mc).
fn jacobi_sn_cn_dn_mc(kappa: f64, m: f64, mc: f64) -> Result<(f64, f64, f64), NumericsError> {
    if !(0.0..1.0).contains(&m) || mc <= 0.0 {
        return Err(NumericsError::Domain {
            what: "jacobi_sn_cn_dn: m must lie in [0, 1)",
            value: m,
        });
    }
    if m == 0.0 {
        return Ok((kappa.sin(), kappa.cos(), 1.0));
    }
    let mut a = vec![1.0_f64];
    let mut c = vec![m.sqrt()];
    let mut b = mc.sqrt();
    while c.last().unwrap().abs() > AGM_EPS * a.last().unwrap() {
        let an = a.last().unwrap();
        let cn = 0.5 * (an - b);
        let bn = (an * b).sqrt();
        a.push(0.5 * (an + b));
        c.push(cn);
        b = bn;
        if a.len() > MAX_AGM_ITER {
            break;
        }
    }
    let n = a.len() - 1;
    let mut phi = (n as f64).exp2() * a[n] * kappa;
    for k in (1..=n).rev() {
        let s = (c[k] / a[k] * phi.sin()).clamp(-1.0, 1.0);
        phi = 0.5 * (phi + s.asin());
    }
    let sn = phi.sin();
    let cn = phi.cos();
    // dn^2 = 1 - m sn^2 = cn^2 + mc sn^2; the second form stays fully
    // accurate when m is near 1 and kappa near the quarter period (where
    // the first cancels to O(mc) with only absolute precision).
    let dn = (cn * cn + mc * sn * sn).sqrt();
    Ok((sn, cn, dn))
}

/// Jacobi sn of a real argument.
pub fn jacobi_sn(kappa: f64, m: f64) -> Result<f64, NumericsError> {
    jacobi_sn_cn_dn(kappa, m).map(|(sn, _, _)| sn)
}

/// Jacobi sn, cn, dn of a complex argument via the addition identities
/// (A&S 16.21), splitting into real-argument evaluations at parameters
/// `m` and `1 - m`. Undefined on the pole lattice `z = i K'(m) (mod periods)`;
/// near a pole the denominator vanishes and an error is returned.
pub(crate) fn jacobi_sn_cn_dn_complex(
    z: Complex64,
    m: f64,
) -> Result<(Complex64, Complex64, Complex64), NumericsError> {
    let (s, c, d) = jacobi_sn_cn_dn_mc(z.re, m, 1.0 - m)?;
    let (s1, c1, d1) = jacobi_sn_cn_dn_mc(z.im, 1.0 - m, m)?;
    let denom = c1 * c1 + m * s * s * s1 * s1;
    if denom.abs() < 1e-300 {
        return Err(NumericsError::Domain {
            what: "jacobi sn: argument at a pole of sn",
            value: denom,
        });
    }
    let i = Complex64::new(0.0, 1.0);
    let sn = (Complex64::from(s * d1) + i * (c * d * s1 * c1)) / denom;
    let cn = (Complex64::from(c * c1) - i * (s * d * s1 * d1)) / denom;
    let dn = (Complex64::from(d * c1 * d1) - i * (m * s * c * s1)) / denom;
    Ok((sn, cn, dn))
}
