//! Dense quasi-Newton minimization with the standard inverse-Hessian update
//! and a backtracking line search. Small fixed dimension, no boxing — the
//! fitting grids call this tens of thousands of times.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    /// Stop when the gradient's Euclidean norm falls below this.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Sufficient-decrease constant for the backtracking search.
    pub c1: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { grad_tol: 1e-8, max_iters: 1000, c1: 1e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `f`, which returns the value and gradient at a point.
///
/// The inverse-Hessian estimate is rebuilt to the identity whenever the
/// computed direction fails to descend, and the curvature update is skipped
/// on non-positive (or numerically tiny) sᵀy, so the estimate stays positive
/// definite. Non-finite trial values are treated as rejected steps.
pub fn minimize<F>(f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, g0) = f(x.as_slice());
    let mut g = DVector::from_vec(g0);
    let mut h = DMatrix::<f64>::identity(n, n);

    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return BfgsResult {
            x: x0.to_vec(),
            value: fx,
            grad_norm: f64::NAN,
            iterations: 0,
            converged: false,
        };
    }

    let mut iterations = 0;
    let mut converged = g.norm() <= opts.grad_tol;
    while !converged && iterations < opts.max_iters {
        iterations += 1;

        let mut p = -(&h * &g);
        let mut slope = p.dot(&g);
        if !(slope < 0.0) {
            // Stale curvature; restart from steepest descent.
            h = DMatrix::identity(n, n);
            p = -g.clone();
            slope = -g.norm_squared();
            if slope == 0.0 {
                break;
            }
        }

        // Backtracking until sufficient decrease. Non-finite trials shrink
        // the step like any other rejection.
        let mut t = 1.0f64;
        let mut accepted = None;
        for _ in 0..60 {
            let xt = &x + t * &p;
            let (ft, gt) = f(xt.as_slice());
            if ft.is_finite() && ft <= fx + opts.c1 * t * slope {
                accepted = Some((xt, ft, DVector::from_vec(gt)));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break; // step underflow: no progress possible from here
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-10 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            // H ← (I − ρ·s·yᵀ) H (I − ρ·y·sᵀ) + ρ·s·sᵀ
            let i = DMatrix::<f64>::identity(n, n);
            let left = &i - rho * (&s * y.transpose());
            let right = &i - rho * (&y * s.transpose());
            h = &left * h * &right + rho * (&s * s.transpose());
        }

        x = x_new;
        fx = f_new;
        g = g_new;
        if g.iter().any(|v| !v.is_finite()) {
            break;
        }
        converged = g.norm() <= opts.grad_tol;
    }

    BfgsResult {
        grad_norm: g.norm(),
        x: x.as_slice().to_vec(),
        value: fx,
        iterations,
        converged,
    }
}
