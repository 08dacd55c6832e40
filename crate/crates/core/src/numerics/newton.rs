//! Damped Newton iteration for small dense nonlinear systems.

use nalgebra::{DMatrix, DVector};

use super::NumericsError;

const MAX_ITER: usize = 200;
const MAX_HALVINGS: usize = 30;
const FD_STEP: f64 = 1e-7;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Solves `residual(x) = 0` from `x0` by Newton's method with a
/// forward-difference Jacobian (step `1e-7 * max(1, |x_i|)` per column) and
/// step halving (up to 30 halvings per iteration) until the residual norm
/// decreases. Succeeds when `max_i |residual_i|  <= tol`; gives up after 200
/// iterations or when no damped step makes progress.
pub fn solve_nonlinear_system<F>(
    mut residual: F,
    x0: &[f64],
    tol: f64,
) -> Result<Vec<f64>, NumericsError>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = residual(&x);
    if r.len() != n {
        return Err(NumericsError::Domain {
            what: "solve_nonlinear_system: residual dimension != unknown dimension",
            value: r.len() as f64,
        });
    }
    let mut rnorm = inf_norm(&r);

    for _ in 0..MAX_ITER {
        if rnorm <= tol {
            return Ok(x);
        }
        if !rnorm.is_finite() {
            return Err(NumericsError::NoConvergence {
                what: "solve_nonlinear_system: residual became non-finite",
                residual: rnorm,
            });
        }

        let mut jac = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let h = FD_STEP * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let rp = residual(&xp);
            for i in 0..n {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }

        let rhs = DVector::from_iterator(n, r.iter().map(|v| -v));
        let step = jac.lu().solve(&rhs).ok_or(NumericsError::Singular {
            what: "solve_nonlinear_system: singular Jacobian",
        })?;

        let mut lambda = 1.0_f64;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let xt: Vec<f64> = (0..n).map(|i| x[i] + lambda * step[i]).collect();
            let rt = residual(&xt);
            let rtnorm = inf_norm(&rt);
            if rtnorm.is_finite() && rtnorm < rnorm {
                x = xt;
                r = rt;
                rnorm = rtnorm;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(NumericsError::NoConvergence {
                what: "solve_nonlinear_system: damping failed to reduce the residual",
                residual: rnorm,
            });
        }
    }
    if rnorm <= tol {
        Ok(x)
    } else {
        Err(NumericsError::NoConvergence {
            what: "solve_nonlinear_system: iteration cap reached",
            residual: rnorm,
        })
    }
}

/// Solves the nonlinear least-squares problem `residual(x) = 0` with
/// `residual` allowed to have more components than `x` (consistent
/// overdetermined systems whose exact solution zeroes every component).
/// Damped Gauss-Newton: forward-difference Jacobian, normal-equation step
/// with a small Levenberg regularization retried at increasing strength if
/// the plain step stalls, and step halving on the residual 2-norm. Succeeds
/// when `max_i |residual_i| <= tol`.
pub fn solve_least_squares<F>(
    mut residual: F,
    x0: &[f64],
    tol: f64,
) -> Result<Vec<f64>, NumericsError>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = residual(&x);
    let m = r.len();
    if m < n {
        return Err(NumericsError::Domain {
            what: "solve_least_squares: fewer residuals than unknowns",
            value: m as f64,
        });
    }
    let norm2 = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut rnorm = norm2(&r);

    for _ in 0..MAX_ITER {
        if inf_norm(&r) <= tol {
            return Ok(x);
        }
        if !rnorm.is_finite() {
            return Err(NumericsError::NoConvergence {
                what: "solve_least_squares: residual became non-finite",
                residual: rnorm,
            });
        }

        let mut jac = DMatrix::<f64>::zeros(m, n);
        for j in 0..n {
            let h = FD_STEP * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let rp = residual(&xp);
            for i in 0..m {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }

        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * DVector::from_column_slice(&r);
        let trace_scale = (jtj.trace() / n as f64).max(f64::MIN_POSITIVE);

        // Try a nearly-plain Gauss-Newton step first; if the damped line
        // search cannot make progress, retry with stronger regularization
        // (pulling the step toward steepest descent).
        let mut accepted = false;
        'reg: for &mu in &[1e-14, 1e-8, 1e-4, 1e-1, 1e2] {
            let mut a = jtj.clone();
            for d in 0..n {
                a[(d, d)] += mu * trace_scale;
            }
            let step = match a.lu().solve(&(-&jtr)) {
                Some(s) => s,
                None => continue 'reg,
            };
            let mut lambda = 1.0_f64;
            for _ in 0..=MAX_HALVINGS {
                let xt: Vec<f64> = (0..n).map(|i| x[i] + lambda * step[i]).collect();
                let rt = residual(&xt);
                let rtnorm = norm2(&rt);
                if rtnorm.is_finite() && rtnorm < rnorm {
                    x = xt;
                    r = rt;
                    rnorm = rtnorm;
                    accepted = true;
                    break 'reg;
                }
                lambda *= 0.5;
            }
        }
        if !accepted {
            return Err(NumericsError::NoConvergence {
                what: "solve_least_squares: no regularized step reduced the residual",
                residual: rnorm,
            });
        }
    }
    if inf_norm(&r) <= tol {
        Ok(x)
    } else {
        Err(NumericsError::NoConvergence {
            what: "solve_least_squares: iteration cap reached",
            residual: rnorm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solves_rosenbrock_stationarity() {
        // gradient of the Rosenbrock function; root (1, 1)
        let grad = |x: &[f64]| {
            vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ]
        };
        let x = solve_nonlinear_system(grad, &[-1.2, 1.0], 1e-12).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn solves_coupled_transcendental() {
        let f = |x: &[f64]| {
            vec![
                x[0].exp() - 2.0 * x[1],
                x[0] * x[0] + x[1] * x[1] - 1.0,
            ]
        };
        let x = solve_nonlinear_system(f, &[0.5, 0.5], 1e-13).unwrap();
        let r = f(&x);
        assert!(r[0].abs() < 1e-13 && r[1].abs() < 1e-13);
    }

    #[test]
    fn reports_nonconvergence_for_rootless_residual() {
        // x^2 + 1 has no real root: must fail rather than loop forever
        let f = |x: &[f64]| vec![x[0] * x[0] + 1.0];
        assert!(solve_nonlinear_system(f, &[3.0], 1e-12).is_err());
    }

    #[test]
    fn damping_rescues_overshooting_start() {
        // steep residual where a full Newton step from far away overshoots
        let f = |x: &[f64]| vec![x[0].atan()];
        let x = solve_nonlinear_system(f, &[20.0], 1e-13).unwrap();
        assert!(x[0].abs() < 1e-12);
    }

    #[test]
    fn least_squares_handles_consistent_overdetermined_system() {
        // three conditions, two unknowns, exact solution (2, -1)
        let f = |x: &[f64]| {
            vec![
                x[0] + x[1] - 1.0,
                x[0] - x[1] - 3.0,
                2.0 * x[0] + x[1] - 3.0,
            ]
        };
        let x = solve_least_squares(f, &[0.0, 0.0], 1e-12).unwrap();
        assert_relative_eq!(x[0], 2.0, epsilon = 1e-10);
        assert_relative_eq!(x[1], -1.0, epsilon = 1e-10);
    }

    #[test]
    fn least_squares_survives_redundant_rows() {
        // duplicated nonlinear condition: J is rank-deficient by row
        // repetition but full column rank
        let f = |x: &[f64]| {
            vec![
                x[0] * x[0] + x[1] - 2.0,
                x[0] * x[0] + x[1] - 2.0,
                x[0] - x[1],
            ]
        };
        let x = solve_least_squares(f, &[2.0, 0.5], 1e-12).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-9);
    }
}
