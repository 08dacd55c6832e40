//! Gauss-Jacobi quadrature on [-1, 1] with weight (1-x)^alpha (1+x)^beta.
//!
//! Nodes and weights come from the Golub-Welsch eigenvalue method: the
//! three-term recurrence of the monic Jacobi polynomials defines a symmetric
//! tridiagonal matrix whose eigenvalues are the nodes and whose first
//! eigenvector components give the weights.

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use super::NumericsError;

/// An n-point rule: `integral f(x) (1-x)^alpha (1+x)^beta dx ~= sum w_i f(x_i)`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl QuadratureRule {
    pub fn degree(&self) -> usize {
        self.nodes.len()
    }

    /// Applies the rule to `f`; the endpoint weight is part of the rule.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Builds the n-point Gauss-Jacobi rule. Requires `n >= 1` and
/// `alpha, beta > -1`.
pub fn gauss_jacobi_rule(n: usize, alpha: f64, beta: f64) -> Result<QuadratureRule, NumericsError> {
    if n == 0 {
        return Err(NumericsError::Domain {
            what: "gauss_jacobi_rule: n must be >= 1",
            value: 0.0,
        });
    }
    if alpha <= -1.0 || !alpha.is_finite() {
        return Err(NumericsError::Domain {
            what: "gauss_jacobi_rule: alpha must be > -1",
            value: alpha,
        });
    }
    if beta <= -1.0 || !beta.is_finite() {
        return Err(NumericsError::Domain {
            what: "gauss_jacobi_rule: beta must be > -1",
            value: beta,
        });
    }

    // Zeroth moment: 2^(a+b+1) * Gamma(a+1) Gamma(b+1) / Gamma(a+b+2).
    let mu0 = ((alpha + beta + 1.0) * 2f64.ln() + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0)
        - ln_gamma(alpha + beta + 2.0))
    .exp();
    if n == 1 {
        return Ok(QuadratureRule {
            nodes: vec![(beta - alpha) / (alpha + beta + 2.0)],
            weights: vec![mu0],
            alpha,
            beta,
        });
    }

    // Monic Jacobi recurrence coefficients (Gautschi's r_jacobi): the k=1
    // off-diagonal has its own formula to dodge the 0/0 at alpha+beta = -1.
    let mut diag = vec![0.0_f64; n];
    let mut off = vec![0.0_f64; n - 1];
    diag[0] = (beta - alpha) / (alpha + beta + 2.0);
    for (k, d) in diag.iter_mut().enumerate().skip(1) {
        let k = k as f64;
        let s = 2.0 * k + alpha + beta;
        *d = (beta * beta - alpha * alpha) / (s * (s + 2.0));
    }
    off[0] = (4.0 * (alpha + 1.0) * (beta + 1.0)
        / ((alpha + beta + 2.0).powi(2) * (alpha + beta + 3.0)))
        .sqrt();
    for (k, o) in off.iter_mut().enumerate().skip(1) {
        let k = (k + 1) as f64;
        let s = 2.0 * k + alpha + beta;
        *o = (4.0 * k * (k + alpha) * (k + beta) * (k + alpha + beta) / (s * s * (s * s - 1.0)))
            .sqrt();
    }

    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jac[(i, i)] = diag[i];
        if i + 1 < n {
            jac[(i, i + 1)] = off[i];
            jac[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let node = eig.eigenvalues[j];
            let v0 = eig.eigenvectors[(0, j)];
            (node, mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(QuadratureRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
        alpha,
        beta,
    })
}
