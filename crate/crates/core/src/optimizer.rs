//! Constrained search for (l, d, n_exp, n_topk) under a total-parameter and
//! an active-parameter budget: a greedy per-cell construction (cube-root
//! depth, aligned width, clamped top-k) swept over an expert-count ×
//! width-ratio grid, plus an exhaustive per-cell oracle for cross-checking.
//!
//! Budget comparisons are exact integer arithmetic throughout; only the loss
//! proxy used for ranking is floating point.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_integer::Roots;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accounting::{active_params, total_params, Gran, ModelDims};
use crate::error::PlannerError;

/// Loss-proxy exponents (e1 on N_total, e2 on n_exp, e3 on n_topk).
pub const DEFAULT_EXPONENTS: [f64; 3] = [-0.052, 0.023, -0.018];

pub fn default_n_exp_grid() -> Vec<u64> {
    (1..=9).map(|k| 1u64 << k).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraints {
    /// Memory proxy: maximum total non-embedding parameters.
    pub c_total: BigRational,
    /// Inference proxy: maximum active non-embedding parameters.
    pub c_active: BigRational,
    /// Width must be a multiple of this.
    pub k_align: u64,
    pub gamma_min: u64,
    pub gamma_max: u64,
    pub n_exp_grid: Vec<u64>,
    pub g: Gran,
    pub exponents: [f64; 3],
    /// Guard for the exhaustive oracle: error out instead of enumerating
    /// more candidates than this.
    pub max_brute_candidates: u64,
}

impl Constraints {
    /// Budgets are required; everything else gets the standard defaults
    /// (k_align 1, γ ∈ [32, 64], n_exp ∈ {2, 4, …, 512}, g = 4).
    pub fn new(c_total: BigRational, c_active: BigRational) -> Self {
        Constraints {
            c_total,
            c_active,
            k_align: 1,
            gamma_min: 32,
            gamma_max: 64,
            n_exp_grid: default_n_exp_grid(),
            g: Gran::new(4, 1),
            exponents: DEFAULT_EXPONENTS,
            max_brute_candidates: 5_000_000,
        }
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        if !self.c_total.is_positive() {
            return Err(PlannerError::InvalidInput("c_total must be positive".into()));
        }
        if !self.c_active.is_positive() {
            return Err(PlannerError::InvalidInput("c_active must be positive".into()));
        }
        if self.c_active > self.c_total {
            return Err(PlannerError::InvalidInput(
                "c_active exceeds c_total; the active budget cannot be larger than the total budget"
                    .into(),
            ));
        }
        if self.k_align == 0 {
            return Err(PlannerError::InvalidInput("k_align must be at least 1".into()));
        }
        if self.gamma_min == 0 || self.gamma_min > self.gamma_max {
            return Err(PlannerError::InvalidInput(format!(
                "gamma range [{}, {}] is empty or starts at zero",
                self.gamma_min, self.gamma_max
            )));
        }
        if self.n_exp_grid.is_empty() {
            return Err(PlannerError::InvalidInput("n_exp grid is empty".into()));
        }
        if self.n_exp_grid.iter().any(|&n| n == 0) {
            return Err(PlannerError::InvalidInput("n_exp grid contains zero".into()));
        }
        if self.exponents.iter().any(|e| !e.is_finite()) {
            return Err(PlannerError::InvalidInput("loss-proxy exponents must be finite".into()));
        }
        Ok(())
    }

    fn cells(&self) -> Vec<(u64, u64)> {
        let mut cells = Vec::new();
        for &n_exp in &self.n_exp_grid {
            for gamma in self.gamma_min..=self.gamma_max {
                cells.push((n_exp, gamma));
            }
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigCandidate {
    pub dims: ModelDims,
    /// Width-ratio cell that produced the candidate (d/l itself lands off
    /// this value after alignment).
    pub gamma: u64,
    pub n_total: BigRational,
    pub n_active: BigRational,
    pub loss_proxy: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkipReason {
    /// Budget supports no layer at this width ratio.
    NoLayers,
    /// Width aligned down to zero.
    NoWidth,
    /// Active budget leaves no room for even one routed expert.
    NoTopk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub n_exp: u64,
    pub gamma: u64,
    pub candidate: Option<ConfigCandidate>,
    pub skip: Option<SkipReason>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizeDiagnostics {
    pub cells_total: usize,
    pub cells_with_candidate: usize,
    pub cells_no_layers: usize,
    pub cells_no_width: usize,
    pub cells_no_topk: usize,
    pub table: Vec<CellOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    /// None when every cell is infeasible — an outcome, not an error.
    pub best: Option<ConfigCandidate>,
    pub diagnostics: OptimizeDiagnostics,
}

fn gran_parts(g: Gran) -> (u64, u64) {
    (*g.numer(), *g.denom())
}

/// 4p + 3·n_exp·q, the numerator of the per-position parameter multiplier
/// (4 + 3·n_exp/g) over denominator p.
fn mult_num(n_exp: u64, g: Gran) -> BigInt {
    let (p, q) = gran_parts(g);
    BigInt::from(4u64) * p + BigInt::from(3u64) * BigInt::from(n_exp) * BigInt::from(q)
}

/// floor(c_total · p / (4p + 3·n_exp·q)): the exact bound on l·d² under the
/// total budget.
fn ld2_bound(c_total: &BigRational, n_exp: u64, g: Gran) -> BigInt {
    let (p, _) = gran_parts(g);
    (c_total.numer() * BigInt::from(p)) / (c_total.denom() * mult_num(n_exp, g))
}

/// Depth from the cube-root rule: floor((c_total/(γ²·(4 + 3·n_exp/g)))^(1/3)),
/// computed exactly (integer cube root of the floored radicand — the floors
/// commute). Zero means the budget supports no layer at this ratio.
pub fn solve_layers(c_total: &BigRational, gamma: u64, n_exp: u64, g: Gran) -> u64 {
    if gamma == 0 || n_exp == 0 || !c_total.is_positive() {
        return 0;
    }
    let x = ld2_bound(c_total, n_exp, g) / (BigInt::from(gamma) * BigInt::from(gamma));
    if x.is_negative() {
        return 0;
    }
    x.cbrt().to_u64().unwrap_or(u64::MAX)
}

/// Width: round γ·l to the nearest multiple of k_align (half away from
/// zero), then step down by k_align while the total budget is exceeded.
/// None when the width reaches zero. The step-down is evaluated in closed
/// form — the largest aligned width within budget — which visits exactly the
/// value the literal decrement loop would stop at.
pub fn align_width(
    gamma: u64,
    l: u64,
    k_align: u64,
    c_total: &BigRational,
    n_exp: u64,
    g: Gran,
) -> Option<u64> {
    if l == 0 || k_align == 0 {
        return None;
    }
    let gl = gamma as u128 * l as u128;
    let k = k_align as u128;
    let d0 = ((2 * gl + k) / (2 * k)) * k; // round(γl/k)·k, halves away from zero
    if d0 == 0 {
        return None;
    }
    // Largest aligned d with l·d² within the total budget.
    let ml = ld2_bound(c_total, n_exp, g) / BigInt::from(l);
    if ml.is_negative() {
        return None;
    }
    let d_cap = (ml.sqrt() / BigInt::from(k_align)) * BigInt::from(k_align);
    let d = d_cap.to_u128().map_or(d0, |cap| d0.min(cap));
    if d == 0 {
        None
    } else {
        d.to_u64()
    }
}

/// Routed experts per token: min(n_exp, floor((g/3)·(c_active/(l·d²) − 4))),
/// exact rational arithmetic. None when the result would fall below one —
/// the dense attention term alone saturates the active budget.
pub fn solve_topk(
    c_active: &BigRational,
    l: u64,
    d: u64,
    n_exp: u64,
    g: Gran,
) -> Option<u64> {
    if l == 0 || d == 0 || n_exp == 0 {
        return None;
    }
    let (p, q) = gran_parts(g);
    let x = BigInt::from(l) * BigInt::from(d) * BigInt::from(d);
    let num = c_active.numer() * BigInt::from(p)
        - BigInt::from(4u64) * BigInt::from(p) * c_active.denom() * &x;
    if !num.is_positive() {
        return None;
    }
    let den = BigInt::from(3u64) * BigInt::from(q) * c_active.denom() * &x;
    let raw = (num / den).min(BigInt::from(n_exp));
    let k = raw.to_u64().unwrap_or(0);
    (k >= 1).then_some(k)
}

/// Shared proxy kernel so the greedy and exhaustive paths produce
/// bit-identical values for identical candidates: N_total is formed as
/// (l·d²)·mult/p in one fixed f64 expression.
fn proxy_from_parts(x_f: f64, mult_f: f64, p_f: f64, n_exp: u64, n_topk: u64, e: [f64; 3]) -> f64 {
    let nt = x_f * mult_f / p_f;
    nt.powf(e[0]) * (n_exp as f64).powf(e[1]) * (n_topk as f64).powf(e[2])
}

fn mult_f64(n_exp: u64, g: Gran) -> (f64, f64) {
    let (p, q) = gran_parts(g);
    (4.0 * p as f64 + 3.0 * n_exp as f64 * q as f64, p as f64)
}

/// Ranking heuristic: N_total^e1 · n_exp^e2 · n_topk^e3. A float — budget
/// feasibility never depends on it.
pub fn loss_proxy(dims: &ModelDims, exponents: [f64; 3]) -> f64 {
    let x_f = (dims.d as u128)
        .checked_mul(dims.d as u128)
        .and_then(|d2| d2.checked_mul(dims.l as u128))
        .map_or((dims.l as f64) * (dims.d as f64) * (dims.d as f64), |x| x as f64);
    let (mult_f, p_f) = mult_f64(dims.n_exp, dims.g);
    proxy_from_parts(x_f, mult_f, p_f, dims.n_exp, dims.n_topk, exponents)
}

/// Preference order: lower proxy, then smaller n_exp, larger n_topk, larger
/// n_total, smaller γ. Less means preferred.
fn candidate_cmp(a: &ConfigCandidate, b: &ConfigCandidate) -> Ordering {
    a.loss_proxy
        .partial_cmp(&b.loss_proxy)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.dims.n_exp.cmp(&b.dims.n_exp))
        .then_with(|| b.dims.n_topk.cmp(&a.dims.n_topk))
        .then_with(|| b.n_total.cmp(&a.n_total))
        .then_with(|| a.gamma.cmp(&b.gamma))
}

fn make_candidate(dims: ModelDims, gamma: u64, c: &Constraints) -> ConfigCandidate {
    let n_total = total_params(&dims);
    let n_active = active_params(&dims);
    debug_assert!(n_total <= c.c_total, "total budget violated by construction");
    debug_assert!(n_active <= c.c_active, "active budget violated by construction");
    debug_assert_eq!(dims.d % c.k_align, 0);
    ConfigCandidate {
        loss_proxy: loss_proxy(&dims, c.exponents),
        dims,
        gamma,
        n_total,
        n_active,
        feasible: true,
    }
}

fn skip(n_exp: u64, gamma: u64, why: SkipReason) -> CellOutcome {
    CellOutcome { n_exp, gamma, candidate: None, skip: Some(why) }
}

fn greedy_cell(c: &Constraints, n_exp: u64, gamma: u64) -> CellOutcome {
    let l = solve_layers(&c.c_total, gamma, n_exp, c.g);
    if l == 0 {
        return skip(n_exp, gamma, SkipReason::NoLayers);
    }
    let Some(d) = align_width(gamma, l, c.k_align, &c.c_total, n_exp, c.g) else {
        return skip(n_exp, gamma, SkipReason::NoWidth);
    };
    let Some(n_topk) = solve_topk(&c.c_active, l, d, n_exp, c.g) else {
        return skip(n_exp, gamma, SkipReason::NoTopk);
    };
    let dims = ModelDims::new(l, d, c.g, n_exp, n_topk)
        .expect("greedy construction yields valid dims");
    CellOutcome { n_exp, gamma, candidate: Some(make_candidate(dims, gamma, c)), skip: None }
}

fn build_outcome(table: Vec<CellOutcome>) -> OptimizeOutcome {
    let mut diag = OptimizeDiagnostics { cells_total: table.len(), ..Default::default() };
    for cell in &table {
        match (&cell.candidate, cell.skip) {
            (Some(_), _) => diag.cells_with_candidate += 1,
            (None, Some(SkipReason::NoLayers)) => diag.cells_no_layers += 1,
            (None, Some(SkipReason::NoWidth)) => diag.cells_no_width += 1,
            (None, Some(SkipReason::NoTopk)) => diag.cells_no_topk += 1,
            (None, None) => {}
        }
    }
    let best = table
        .iter()
        .filter_map(|c| c.candidate.as_ref())
        .min_by(|a, b| candidate_cmp(a, b))
        .cloned();
    diag.table = table;
    OptimizeOutcome { best, diagnostics: diag }
}

/// Greedy sweep: one candidate per (n_exp, γ) cell via
/// solve_layers → align_width → solve_topk, ranked by the loss proxy.
pub fn optimize(c: &Constraints) -> Result<OptimizeOutcome, PlannerError> {
    c.validate()?;
    let table: Vec<CellOutcome> =
        c.cells().into_iter().map(|(n, gamma)| greedy_cell(c, n, gamma)).collect();
    Ok(build_outcome(table))
}

/// Exact top-k evaluator with a u128 fast path; the fallback reproduces the
/// same integer formula in arbitrary precision.
struct ActiveSolver {
    p1: BigInt,
    p2: BigInt,
    p3: BigInt,
    fast: Option<(u128, u128, u128)>,
}

impl ActiveSolver {
    fn new(c_active: &BigRational, g: Gran) -> Self {
        let (p, q) = gran_parts(g);
        let p1 = c_active.numer() * BigInt::from(p);
        let p2 = BigInt::from(4u64) * BigInt::from(p) * c_active.denom();
        let p3 = BigInt::from(3u64) * BigInt::from(q) * c_active.denom();
        let fast = match (p1.to_u128(), p2.to_u128(), p3.to_u128()) {
            (Some(a), Some(b), Some(c)) => Some((a, b, c)),
            _ => None,
        };
        ActiveSolver { p1, p2, p3, fast }
    }

    fn solve(&self, x: u128, n_exp: u64) -> Option<u64> {
        if let Some((p1, p2, p3)) = self.fast {
            if let (Some(p2x), Some(p3x)) = (p2.checked_mul(x), p3.checked_mul(x)) {
                if p1 <= p2x {
                    return None;
                }
                let k = ((p1 - p2x) / p3x).min(n_exp as u128) as u64;
                return (k >= 1).then_some(k);
            }
        }
        let xb = BigInt::from(x);
        let num = &self.p1 - &self.p2 * &xb;
        if !num.is_positive() {
            return None;
        }
        let k = (num / (&self.p3 * xb)).min(BigInt::from(n_exp)).to_u64().unwrap_or(0);
        (k >= 1).then_some(k)
    }
}

/// Number of aligned (l, d) pairs a cell would enumerate, stopping early at
/// the cap. Returns None when the running total passes `cap`. The per-l
/// counts only shrink as l grows, so the first zero ends the cell.
fn count_cell(m: u128, l_bound: u64, k_align: u64, acc: u128, cap: u128) -> Option<u128> {
    let mut acc = acc;
    for l in 1..=l_bound as u128 {
        let c = (m / l).sqrt() / k_align as u128;
        if c == 0 {
            break;
        }
        acc += c;
        if acc > cap {
            return None;
        }
    }
    Some(acc)
}

struct CellBest {
    proxy: f64,
    n_topk: u64,
    x: u128,
    l: u64,
    d: u64,
}

fn brute_cell(c: &Constraints, n_exp: u64, gamma: u64, m: &BigInt) -> CellOutcome {
    let l_bound = solve_layers(&c.c_total, gamma, n_exp, c.g);
    if l_bound == 0 {
        return skip(n_exp, gamma, SkipReason::NoLayers);
    }
    let m128 = m.to_u128().expect("guarded by the enumeration pre-pass");
    let (mult_f, p_f) = mult_f64(n_exp, c.g);
    let active = ActiveSolver::new(&c.c_active, c.g);

    let mut best: Option<CellBest> = None;
    let mut any_width = false;
    for l in 1..=l_bound {
        let d_top = ((m128 / l as u128).sqrt() / c.k_align as u128) * c.k_align as u128;
        let mut d = c.k_align as u128;
        while d <= d_top {
            any_width = true;
            let x = l as u128 * d * d;
            if let Some(n_topk) = active.solve(x, n_exp) {
                let proxy = proxy_from_parts(x as f64, mult_f, p_f, n_exp, n_topk, c.exponents);
                let better = match &best {
                    None => true,
                    Some(cur) => {
                        proxy < cur.proxy
                            || (proxy == cur.proxy
                                && (n_topk > cur.n_topk
                                    || (n_topk == cur.n_topk && x > cur.x)))
                    }
                };
                if better {
                    best = Some(CellBest { proxy, n_topk, x, l, d: d as u64 });
                }
            }
            d += c.k_align as u128;
        }
    }
    match best {
        Some(b) => {
            let dims = ModelDims::new(b.l, b.d, c.g, n_exp, b.n_topk)
                .expect("enumerated dims are valid");
            let cand = make_candidate(dims, gamma, c);
            debug_assert_eq!(cand.loss_proxy.to_bits(), b.proxy.to_bits());
            CellOutcome { n_exp, gamma, candidate: Some(cand), skip: None }
        }
        None if any_width => skip(n_exp, gamma, SkipReason::NoTopk),
        None => skip(n_exp, gamma, SkipReason::NoWidth),
    }
}

/// Exhaustive oracle: for every cell, every depth up to the cube-root bound
/// and every aligned width within the total budget, with the same ranking
/// and tie chain as [`optimize`]. Guarded by `max_brute_candidates`.
pub fn brute_force_optimize(c: &Constraints) -> Result<OptimizeOutcome, PlannerError> {
    c.validate()?;
    let cells = c.cells();
    // Per-n_exp l·d² bounds, shared across γ.
    let bounds: Vec<(u64, BigInt)> = c
        .n_exp_grid
        .iter()
        .map(|&n| (n, ld2_bound(&c.c_total, n, c.g)))
        .collect();
    let bound_of = |n_exp: u64| -> &BigInt {
        &bounds.iter().find(|(n, _)| *n == n_exp).expect("grid entry").1
    };

    let cap = c.max_brute_candidates as u128;
    let mut projected: u128 = 0;
    for &(n_exp, gamma) in &cells {
        let l_bound = solve_layers(&c.c_total, gamma, n_exp, c.g);
        if l_bound == 0 {
            continue;
        }
        // A bound past u128 means ~10^38 parameters; refuse rather than
        // enumerate (and it keeps the hot loop in machine words).
        let counted = bound_of(n_exp)
            .to_u128()
            .and_then(|m| count_cell(m, l_bound, c.k_align, projected, cap));
        match counted {
            Some(acc) => projected = acc,
            None => {
                return Err(PlannerError::SearchSpaceTooLarge(format!(
                    "exhaustive search would enumerate more than {} candidates; \
                     raise max_brute_candidates or shrink the budgets",
                    c.max_brute_candidates
                )));
            }
        }
    }

    let table: Vec<CellOutcome> = cells
        .par_iter()
        .map(|&(n_exp, gamma)| brute_cell(c, n_exp, gamma, bound_of(n_exp)))
        .collect();
    Ok(build_outcome(table))
}

/// A cell where exhaustive enumeration found a strictly lower proxy than the
/// greedy construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MissedCell {
    pub n_exp: u64,
    pub gamma: u64,
    /// None when the greedy step produced no candidate at all for the cell.
    pub greedy_proxy: Option<f64>,
    pub exhaustive_proxy: f64,
    pub exhaustive_dims: ModelDims,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub greedy: OptimizeOutcome,
    pub exhaustive: OptimizeOutcome,
    pub missed_cells: Vec<MissedCell>,
}

/// Run both searches and surface every cell where the greedy (l, d) choice
/// was beaten by an interior point.
pub fn compare_with_brute_force(c: &Constraints) -> Result<OracleComparison, PlannerError> {
    let greedy = optimize(c)?;
    let exhaustive = brute_force_optimize(c)?;
    let mut missed_cells = Vec::new();
    for (gc, bc) in greedy.diagnostics.table.iter().zip(&exhaustive.diagnostics.table) {
        debug_assert_eq!((gc.n_exp, gc.gamma), (bc.n_exp, bc.gamma));
        match (&gc.candidate, &bc.candidate) {
            (Some(g), Some(b)) if b.loss_proxy < g.loss_proxy => {
                missed_cells.push(MissedCell {
                    n_exp: gc.n_exp,
                    gamma: gc.gamma,
                    greedy_proxy: Some(g.loss_proxy),
                    exhaustive_proxy: b.loss_proxy,
                    exhaustive_dims: b.dims,
                });
            }
            (None, Some(b)) => {
                missed_cells.push(MissedCell {
                    n_exp: gc.n_exp,
                    gamma: gc.gamma,
                    greedy_proxy: None,
                    exhaustive_proxy: b.loss_proxy,
                    exhaustive_dims: b.dims,
                });
            }
            (Some(_), None) => {
                unreachable!("the exhaustive set contains every greedy candidate")
            }
            _ => {}
        }
    }
    Ok(OracleComparison { greedy, exhaustive, missed_cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(v: u64) -> BigRational {
        BigRational::from_integer(BigInt::from(v))
    }

    #[test]
    fn ld2_bound_floors() {
        // c_total = 100, g = 4, n_exp = 2: bound = floor(100·4/22) = 18.
        let b = ld2_bound(&rat(100), 2, Gran::new(4, 1));
        assert_eq!(b, BigInt::from(18));
    }

    #[test]
    fn rounding_in_align_width_is_half_away() {
        // γ·l/k = 36.5 rounds to 37 with a generous budget.
        let d = align_width(73, 1, 2, &rat(1_000_000_000), 2, Gran::new(4, 1)).unwrap();
        assert_eq!(d, 74);
    }

    #[test]
    fn active_solver_agrees_with_solve_topk() {
        let g = Gran::new(27, 10);
        let c_active = BigRational::new(BigInt::from(123_456_789), BigInt::from(7));
        let solver = ActiveSolver::new(&c_active, g);
        for l in [1u64, 2, 7, 30] {
            for d in [2u64, 10, 96, 512] {
                let x = l as u128 * d as u128 * d as u128;
                assert_eq!(
                    solver.solve(x, 64),
                    solve_topk(&c_active, l, d, 64, g),
                    "l={l} d={d}"
                );
            }
        }
    }

    #[test]
    fn default_grid_is_powers_of_two() {
        assert_eq!(default_n_exp_grid(), vec![2, 4, 8, 16, 32, 64, 128, 256, 512]);
    }
}
