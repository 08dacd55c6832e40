//! Special functions, quadrature, and nonlinear solving shared by the
//! mapping and load-analysis layers.

mod elliptic;
mod newton;
mod quadrature;

pub use elliptic::{ellipk, ellipk_complementary, incomplete_elliptic_f, jacobi_sn, jacobi_sn_cn_dn};
pub(crate) use elliptic::jacobi_sn_cn_dn_complex;
pub use newton::{solve_least_squares, solve_nonlinear_system};
pub use quadrature::{gauss_jacobi_rule, QuadratureRule};

use thiserror::Error;

/// Neumaier-compensated accumulator. Summation order still decides the exact
/// bits, so callers that need run-to-run determinism must also fix the order.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    s: f64,
    c: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    pub fn value(self) -> f64 {
        self.s + self.c
    }
}

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{what} (got {value})")]
    Domain { what: &'static str, value: f64 },
    #[error("{what} (residual norm {residual:.3e})")]
    NoConvergence { what: &'static str, residual: f64 },
    #[error("{what}")]
    Singular { what: &'static str },
}
