//! Small unconstrained quasi-Newton minimizer.
//!
//! Used by the Student-t and ARMA-GARCH likelihood fits, which map their
//! constrained parameters onto unconstrained coordinates first.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop when the gradient's Euclidean norm drops below this.
    pub gradient_tolerance: f64,
    /// Stop when an accepted step improves the objective by less than this.
    pub improvement_tolerance: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            improvement_tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Gradient,
    Improvement,
    /// No step along the search direction or steepest descent decreased the
    /// objective, so the point is stationary to working precision.
    LineSearch,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub reason: StopReason,
}

/// Central-difference gradient with step `1e-6·max(1, |x_i|)`.
pub fn numerical_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Minimizes `f` from `x0` with BFGS and an Armijo backtracking line search.
/// Non-finite objective values are treated as +∞ and shrink the step.
pub fn minimize<F, G>(f: F, grad: G, x0: &[f64], opts: BfgsOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    let mut g = DVector::from_vec(grad(x.as_slice()));
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    let mut reason = StopReason::MaxIterations;

    while iterations < opts.max_iterations {
        if g.norm() < opts.gradient_tolerance {
            reason = StopReason::Gradient;
            break;
        }
        iterations += 1;

        let mut direction = -(&h_inv * &g);
        if direction.dot(&g) >= 0.0 {
            h_inv = DMatrix::identity(n, n);
            direction = -g.clone();
        }

        let step = match line_search(&f, &x, fx, &g, &direction) {
            Some(s) => s,
            None => {
                // Retry once along steepest descent with a fresh metric.
                let steepest = -g.clone();
                match line_search(&f, &x, fx, &g, &steepest) {
                    Some(s) => {
                        h_inv = DMatrix::identity(n, n);
                        s
                    }
                    None => {
                        reason = StopReason::LineSearch;
                        break;
                    }
                }
            }
        };
        let (x_new, f_new) = step;
        let g_new = DVector::from_vec(grad(x_new.as_slice()));
        let s = &x_new - &x;
        let y = &g_new - &g;
        let improvement = fx - f_new;

        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - rho * &s * y.transpose();
            let right = &eye - rho * &y * s.transpose();
            h_inv = &left * &h_inv * &right + rho * &s * s.transpose();
        }

        x = x_new;
        fx = f_new;
        g = g_new;

        if improvement < opts.improvement_tolerance {
            reason = StopReason::Improvement;
            break;
        }
    }

    let gradient_norm = g.norm();
    if reason == StopReason::MaxIterations && gradient_norm < opts.gradient_tolerance {
        reason = StopReason::Gradient;
    }
    Minimum {
        x: x.as_slice().to_vec(),
        value: fx,
        gradient_norm,
        iterations,
        reason,
    }
}

fn line_search<F: Fn(&[f64]) -> f64>(
    f: &F,
    x: &DVector<f64>,
    fx: f64,
    g: &DVector<f64>,
    direction: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let slope = g.dot(direction);
    if !(slope < 0.0) {
        return None;
    }
    let mut t = 1.0;
    for _ in 0..60 {
        let candidate = x + t * direction;
        let value = f(candidate.as_slice());
        if value.is_finite() && value <= fx + 1e-4 * t * slope {
            return Some((candidate, value));
        }
        t *= 0.5;
    }
    None
}
