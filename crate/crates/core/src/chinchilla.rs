//! Saturating scaling curves L = A·N^(−α) + B·D^(−β) + E, fitted with a
//! Huber penalty on log-loss through a stabilized log-sum-exp
//! parameterization (a = ln A, b = ln B, e = ln E, so the coefficients stay
//! positive), minimized quasi-Newton from a deterministic grid of starts.
//!
//! Units: N is a raw non-embedding parameter count and D a raw token count —
//! no rescaling to billions happens anywhere in this module.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bfgs::{minimize, BfgsOptions};
use crate::error::PlannerError;

/// One point on a training curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub n_total: f64,
    pub tokens_d: f64,
    pub loss: f64,
}

impl CurvePoint {
    pub fn new(n_total: f64, tokens_d: f64, loss: f64) -> Result<Self, PlannerError> {
        for (name, v) in [("n_total", n_total), ("tokens_D", tokens_d), ("loss_L", loss)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PlannerError::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(CurvePoint { n_total, tokens_d, loss })
    }
}

/// A fitted curve. `a`, `b`, `e` are the positive coefficients A, B, E of
/// L = A·N^(−alpha) + B·D^(−beta) + E; E is the irreducible term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChinchillaFit {
    pub a: f64,
    pub b: f64,
    pub e: f64,
    pub alpha: f64,
    pub beta: f64,
    pub objective_value: f64,
    pub converged: bool,
    /// Winning initialization in log space: (a₀, b₀, e₀, α₀, β₀).
    pub start_point: [f64; 5],
    /// Position of that start in the grid's iteration order.
    pub start_index: usize,
}

/// Predicted loss at (N, D).
pub fn chinchilla_eval(
    fit: &ChinchillaFit,
    n_total: f64,
    tokens_d: f64,
) -> Result<f64, PlannerError> {
    if !(n_total > 0.0) || !(tokens_d > 0.0) {
        return Err(PlannerError::InvalidInput(format!(
            "curve evaluation needs positive N and D, got ({n_total}, {tokens_d})"
        )));
    }
    Ok(fit.a * n_total.powf(-fit.alpha) + fit.b * tokens_d.powf(-fit.beta) + fit.e)
}

/// Robust penalty: quadratic within `delta` of zero, linear beyond, with
/// matching value and slope at the boundary.
pub fn huber(residual: f64, delta: f64) -> f64 {
    let r = residual.abs();
    if r <= delta {
        r * r / 2.0
    } else {
        delta * (r - delta / 2.0)
    }
}

fn huber_prime(residual: f64, delta: f64) -> f64 {
    if residual.abs() <= delta {
        residual
    } else {
        delta * residual.signum()
    }
}

/// Huber objective over log-loss residuals, with its analytic gradient.
///
/// Parameters are log-space: (a, b, e, alpha, beta). For each point,
/// ln L̂ = LSE(a − α·ln N, b − β·ln D, e), computed with the max-shift so the
/// value stays finite for coefficient magnitudes up to about 700.
pub fn objective(params: &[f64; 5], data: &[CurvePoint], delta: f64) -> (f64, [f64; 5]) {
    let [a, b, e, alpha, beta] = *params;
    let mut val = 0.0;
    let mut grad = [0.0f64; 5];
    for pt in data {
        let ln_n = pt.n_total.ln();
        let ln_d = pt.tokens_d.ln();
        let t1 = a - alpha * ln_n;
        let t2 = b - beta * ln_d;
        let t3 = e;
        let m = t1.max(t2).max(t3);
        let (x1, x2, x3) = ((t1 - m).exp(), (t2 - m).exp(), (t3 - m).exp());
        let sum = x1 + x2 + x3;
        let lse = m + sum.ln();
        let r = lse - pt.loss.ln();
        val += huber(r, delta);
        let dv = huber_prime(r, delta);
        let (w1, w2, w3) = (x1 / sum, x2 / sum, x3 / sum);
        grad[0] += dv * w1;
        grad[1] += dv * w2;
        grad[2] += dv * w3;
        grad[3] -= dv * w1 * ln_n;
        grad[4] -= dv * w2 * ln_d;
    }
    (val, grad)
}

/// Deterministic grid of log-space starting points, iterated in field order
/// (a, b, e, alpha, beta) with the last field varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct InitGrid {
    pub a_values: Vec<f64>,
    pub b_values: Vec<f64>,
    pub e_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
    pub beta_values: Vec<f64>,
}

impl Default for InitGrid {
    fn default() -> Self {
        let tenths: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        InitGrid {
            a_values: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            b_values: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            e_values: vec![-1.0, 0.0, 1.0],
            alpha_values: tenths.clone(),
            beta_values: tenths,
        }
    }
}

impl InitGrid {
    pub fn points(&self) -> Vec<[f64; 5]> {
        let mut pts = Vec::with_capacity(self.len());
        for &a in &self.a_values {
            for &b in &self.b_values {
                for &e in &self.e_values {
                    for &alpha in &self.alpha_values {
                        for &beta in &self.beta_values {
                            pts.push([a, b, e, alpha, beta]);
                        }
                    }
                }
            }
        }
        pts
    }

    pub fn len(&self) -> usize {
        self.a_values.len()
            * self.b_values.len()
            * self.e_values.len()
            * self.alpha_values.len()
            * self.beta_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Huber transition width on the log-loss residual.
    pub delta: f64,
    pub grid: InitGrid,
    pub bfgs: BfgsOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { delta: 1e-3, grid: InitGrid::default(), bfgs: BfgsOptions::default() }
    }
}

/// Fit the five-parameter curve by minimizing from every grid start and
/// keeping the lowest objective (ties to the earlier start). Starts run in
/// parallel; the reduction is by (value, grid index), so the result is
/// deterministic regardless of scheduling.
pub fn fit_chinchilla(data: &[CurvePoint], opts: &FitOptions) -> Result<ChinchillaFit, PlannerError> {
    if data.len() < 5 {
        return Err(PlannerError::Identifiability(format!(
            "need at least 5 curve points to identify 5 parameters, got {}",
            data.len()
        )));
    }
    let distinct = |f: fn(&CurvePoint) -> f64| {
        let mut vals: Vec<f64> = data.iter().map(f).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        vals.len()
    };
    if distinct(|p| p.n_total) < 2 {
        return Err(PlannerError::Identifiability(
            "all points share one N value; alpha is unidentifiable".into(),
        ));
    }
    if distinct(|p| p.tokens_d) < 2 {
        return Err(PlannerError::Identifiability(
            "all points share one D value; beta is unidentifiable".into(),
        ));
    }
    if opts.grid.is_empty() {
        return Err(PlannerError::InvalidInput("initialization grid is empty".into()));
    }

    let starts = opts.grid.points();
    let runs: Vec<(usize, [f64; 5], crate::bfgs::BfgsResult)> = starts
        .par_iter()
        .enumerate()
        .map(|(idx, start)| {
            let f = |x: &[f64]| {
                let p = [x[0], x[1], x[2], x[3], x[4]];
                let (v, g) = objective(&p, data, opts.delta);
                (v, g.to_vec())
            };
            (idx, *start, minimize(f, start, &opts.bfgs))
        })
        .collect();

    // Argmin by (objective, grid index); non-finite objectives sort last.
    let best = runs
        .iter()
        .filter(|(_, _, r)| r.value.is_finite())
        .min_by(|(i, _, r1), (j, _, r2)| {
            r1.value.partial_cmp(&r2.value).unwrap().then(i.cmp(j))
        });
    let Some((idx, start, result)) = best else {
        return Err(PlannerError::NonConvergence(
            "every start produced a non-finite objective".into(),
        ));
    };

    let fitted = ChinchillaFit {
        a: result.x[0].exp(),
        b: result.x[1].exp(),
        e: result.x[2].exp(),
        alpha: result.x[3],
        beta: result.x[4],
        objective_value: result.value,
        converged: result.converged,
        start_point: *start,
        start_index: *idx,
    };
    if !runs.iter().any(|(_, _, r)| r.converged) {
        return Err(PlannerError::NonConvergence(format!(
            "no start met the gradient tolerance; best partial: A={:.6e} B={:.6e} E={:.6e} \
             alpha={:.6} beta={:.6} objective={:.6e}",
            fitted.a, fitted.b, fitted.e, fitted.alpha, fitted.beta, fitted.objective_value
        )));
    }
    Ok(fitted)
}

/// Predicted losses for two fitted curves on one (N, D) grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominancePoint {
    pub n_total: f64,
    pub tokens_d: f64,
    pub loss_a: f64,
    pub loss_b: f64,
    /// loss_a − loss_b; negative where curve A wins.
    pub diff: f64,
    pub a_below: bool,
}

/// Plot-ready loss-vs-N series at one token count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DSeries {
    pub tokens_d: f64,
    /// (N, loss_a, loss_b) in ascending N order.
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub points: Vec<DominancePoint>,
    /// Fraction of grid points with loss_a strictly below loss_b.
    pub fraction_a_below: f64,
    pub series: Vec<DSeries>,
}

/// Evaluate both fits over the cartesian grid `ns` × `ds` and report where
/// curve A sits strictly below curve B, with per-D series for plotting.
pub fn compare_configs(
    fit_a: &ChinchillaFit,
    fit_b: &ChinchillaFit,
    ns: &[f64],
    ds: &[f64],
) -> Result<DominanceReport, PlannerError> {
    if ns.is_empty() || ds.is_empty() {
        return Err(PlannerError::InvalidInput("comparison grid is empty".into()));
    }
    let mut points = Vec::with_capacity(ns.len() * ds.len());
    let mut series = Vec::with_capacity(ds.len());
    let mut below = 0usize;
    for &d in ds {
        let mut slice = Vec::with_capacity(ns.len());
        for &n in ns {
            let loss_a = chinchilla_eval(fit_a, n, d)?;
            let loss_b = chinchilla_eval(fit_b, n, d)?;
            let diff = loss_a - loss_b;
            let a_below = diff < 0.0;
            below += a_below as usize;
            points.push(DominancePoint { n_total: n, tokens_d: d, loss_a, loss_b, diff, a_below });
            slice.push((n, loss_a, loss_b));
        }
        slice.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        series.push(DSeries { tokens_d: d, points: slice });
    }
    Ok(DominanceReport {
        fraction_a_below: below as f64 / points.len() as f64,
        points,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_size_matches_defaults() {
        assert_eq!(InitGrid::default().len(), 7500);
        assert_eq!(InitGrid::default().points().len(), 7500);
    }

    #[test]
    fn grid_iteration_order_is_last_field_fastest() {
        let g = InitGrid {
            a_values: vec![0.0, 1.0],
            b_values: vec![0.0],
            e_values: vec![0.0],
            alpha_values: vec![0.1],
            beta_values: vec![0.2, 0.3],
        };
        let pts = g.points();
        assert_eq!(pts[0], [0.0, 0.0, 0.0, 0.1, 0.2]);
        assert_eq!(pts[1], [0.0, 0.0, 0.0, 0.1, 0.3]);
        assert_eq!(pts[2], [1.0, 0.0, 0.0, 0.1, 0.2]);
    }

    #[test]
    fn huber_is_continuous_at_the_boundary() {
        let d = 0.37;
        let inside = huber(d * (1.0 - 1e-12), d);
        let outside = huber(d * (1.0 + 1e-12), d);
        assert!((inside - outside).abs() < 1e-12);
    }
}
