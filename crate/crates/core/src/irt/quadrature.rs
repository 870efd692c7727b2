//! Gauss-Hermite quadrature.
//!
//! Nodes are the roots of the orthonormal Hermite polynomial of degree n,
//! found by Newton iteration from asymptotic initial guesses; the weights
//! follow from the derivative at each root.

use super::IrtError;

/// Rule for `∫ e^{-x²} f(x) dx` over the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self, IrtError> {
        if n == 0 {
            return Err(IrtError::Config(
                "quadrature needs at least one node".into(),
            ));
        }
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let nf = n as f64;
        let m = n.div_ceil(2);
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            let mut converged = false;
            for _ in 0..100 {
                // Orthonormal Hermite recurrence.
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged || !z.is_finite() {
                return Err(IrtError::Config(format!(
                    "Gauss-Hermite root {i} of {n} did not converge"
                )));
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        // Ascending order.
        x.reverse();
        w.reverse();
        Ok(Self {
            nodes: x,
            weights: w,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss-Hermite rule rescaled to the standard normal density: points
/// `√2·x_k`, weights `w_k/√π` (summing to one).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalQuadrature {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl NormalQuadrature {
    pub fn new(n: usize) -> Result<Self, IrtError> {
        let gh = GaussHermite::new(n)?;
        let points = gh
            .nodes
            .iter()
            .map(|x| x * std::f64::consts::SQRT_2)
            .collect();
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let weights: Vec<f64> = gh.weights.iter().map(|w| w * inv_sqrt_pi).collect();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            points,
            weights,
            log_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `E[f(θ)]` for `θ ~ N(0, 1)`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }
}
