//! Power-law fitting on the log-log scale with OLS and the diagnostics used
//! for model selection: R², per-coefficient t-tests, and an SVD condition
//! number on the standardized design. Natural logarithms throughout.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::accounting::{active_params, total_params, ModelDims};
use crate::error::PlannerError;
use crate::stats::student_t_sf;
use num_traits::ToPrimitive;

/// One trained-model observation: configuration, token count, measured loss.
/// Derived budgets are recomputed from `dims` on construction; external
/// sources claiming their own values go through [`ExperimentRecord::with_provided`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub dims: ModelDims,
    pub n_total: f64,
    pub n_active: f64,
    pub s: f64,
    pub tokens_d: u64,
    pub loss_l: f64,
}

impl ExperimentRecord {
    pub fn new(dims: ModelDims, tokens_d: u64, loss_l: f64) -> Result<Self, PlannerError> {
        if tokens_d == 0 {
            return Err(PlannerError::InvalidInput("tokens_D must be positive".into()));
        }
        if !(loss_l > 0.0) || !loss_l.is_finite() {
            return Err(PlannerError::InvalidInput(format!(
                "loss_L must be positive and finite, got {loss_l}"
            )));
        }
        let n_total = total_params(&dims).to_f64().unwrap_or(f64::NAN);
        let n_active = active_params(&dims).to_f64().unwrap_or(f64::NAN);
        Ok(ExperimentRecord {
            dims,
            n_total,
            n_active,
            s: dims.n_exp as f64 / dims.n_topk as f64,
            tokens_d,
            loss_l,
        })
    }

    /// Build a record whose derived columns were supplied externally,
    /// rejecting values that disagree with the counting formulas by more
    /// than 1e-9 relative.
    pub fn with_provided(
        dims: ModelDims,
        tokens_d: u64,
        loss_l: f64,
        n_total: f64,
        n_active: f64,
        s: f64,
    ) -> Result<Self, PlannerError> {
        let rec = Self::new(dims, tokens_d, loss_l)?;
        let check = |name: &str, provided: f64, derived: f64| -> Result<(), PlannerError> {
            let tol = 1e-9 * derived.abs().max(1.0);
            if !(provided - derived).abs().le(&tol) {
                return Err(PlannerError::Parse(format!(
                    "derived column {name} mismatch: file says {provided}, dims give {derived}"
                )));
            }
            Ok(())
        };
        check("n_total", n_total, rec.n_total)?;
        check("n_active", n_active, rec.n_active)?;
        check("s", s, rec.s)?;
        Ok(rec)
    }

    pub fn var(&self, v: Var) -> f64 {
        match v {
            Var::NTotal => self.n_total,
            Var::NActive => self.n_active,
            Var::S => self.s,
            Var::NExp => self.dims.n_exp as f64,
            Var::NTopk => self.dims.n_topk as f64,
            Var::D => self.tokens_d as f64,
        }
    }
}

/// Variables a feature term may reference. Ordering fixes the canonical
/// form of product terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    NTotal,
    NActive,
    S,
    NExp,
    NTopk,
    D,
}

impl Var {
    pub fn token(self) -> &'static str {
        match self {
            Var::NTotal => "Ntotal",
            Var::NActive => "Nactive",
            Var::S => "s",
            Var::NExp => "nexp",
            Var::NTopk => "ntopk",
            Var::D => "D",
        }
    }

    fn parse(tok: &str) -> Result<Self, PlannerError> {
        match tok.to_ascii_lowercase().as_str() {
            "ntotal" | "n_total" => Ok(Var::NTotal),
            "nactive" | "n_active" => Ok(Var::NActive),
            "s" => Ok(Var::S),
            "nexp" | "n_exp" => Ok(Var::NExp),
            "ntopk" | "n_topk" => Ok(Var::NTopk),
            "d" | "tokens_d" | "tokens" => Ok(Var::D),
            other => Err(PlannerError::Parse(format!(
                "unknown variable {other:?} (expected Ntotal, Nactive, s, nexp, ntopk, or D)"
            ))),
        }
    }
}

/// A design-matrix column: the log of a variable or a product of two logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Log(Var),
    LogProduct(Var, Var),
}

impl Term {
    /// Human-readable column label, e.g. "ln(Ntotal)" or "ln(Ntotal)·ln(s)".
    pub fn label(&self) -> String {
        match self {
            Term::Log(v) => format!("ln({})", v.token()),
            Term::LogProduct(a, b) => format!("ln({})·ln({})", a.token(), b.token()),
        }
    }

    /// Token form used in spec strings, e.g. "Ntotal" or "Ntotal*s".
    pub fn token(&self) -> String {
        match self {
            Term::Log(v) => v.token().to_string(),
            Term::LogProduct(a, b) => format!("{}*{}", a.token(), b.token()),
        }
    }

    pub fn value(&self, rec: &ExperimentRecord) -> Result<f64, PlannerError> {
        let ln = |v: Var| -> Result<f64, PlannerError> {
            let x = rec.var(v);
            if !(x > 0.0) || !x.is_finite() {
                return Err(PlannerError::InvalidInput(format!(
                    "variable {} must be positive to take its log, got {x}",
                    v.token()
                )));
            }
            Ok(x.ln())
        };
        match self {
            Term::Log(v) => ln(*v),
            Term::LogProduct(a, b) => Ok(ln(*a)? * ln(*b)?),
        }
    }
}

/// An ordered set of feature terms; the intercept is always implied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpec {
    pub terms: Vec<Term>,
}

impl FeatureSpec {
    pub fn new(terms: Vec<Term>) -> Result<Self, PlannerError> {
        if terms.is_empty() {
            return Err(PlannerError::Parse("feature spec has no terms".into()));
        }
        let mut seen = HashSet::new();
        for t in &terms {
            if !seen.insert(*t) {
                return Err(PlannerError::Parse(format!("duplicate term {}", t.token())));
            }
        }
        Ok(FeatureSpec { terms })
    }

    /// Parse strings like "Ntotal+nexp+ntopk" or "Ntotal+s+Ntotal*s".
    /// Product factors are reordered into a canonical form, so "s*Ntotal"
    /// and "Ntotal*s" denote the same term.
    pub fn parse(s: &str) -> Result<Self, PlannerError> {
        let mut terms = Vec::new();
        for raw in s.split('+') {
            let tok = raw.trim();
            if tok.is_empty() {
                return Err(PlannerError::Parse(format!("empty term in spec {s:?}")));
            }
            let term = match tok.split_once('*') {
                None => Term::Log(Var::parse(tok)?),
                Some((a, b)) => {
                    if b.contains('*') {
                        return Err(PlannerError::Parse(format!(
                            "only two-way products are supported, got {tok:?}"
                        )));
                    }
                    let (a, b) = (Var::parse(a.trim())?, Var::parse(b.trim())?);
                    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                    Term::LogProduct(lo, hi)
                }
            };
            terms.push(term);
        }
        Self::new(terms)
    }

    pub fn canonical(&self) -> String {
        self.terms.iter().map(Term::token).collect::<Vec<_>>().join("+")
    }
}

/// X has an intercept column of ones followed by one column per term;
/// y is the natural log of the measured loss.
pub fn build_design_matrix(
    records: &[ExperimentRecord],
    spec: &FeatureSpec,
) -> Result<(DMatrix<f64>, DVector<f64>), PlannerError> {
    let n = records.len();
    let p = spec.terms.len() + 1;
    if n < p {
        return Err(PlannerError::DegreesOfFreedom { n_obs: n, n_params: p });
    }
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (i, rec) in records.iter().enumerate() {
        x[(i, 0)] = 1.0;
        for (j, term) in spec.terms.iter().enumerate() {
            x[(i, j + 1)] = term.value(rec)?;
        }
        y[i] = rec.loss_l.ln();
    }
    Ok((x, y))
}

#[derive(Debug, Clone, Copy)]
pub struct OlsOptions {
    /// Significance level for the two-sided t-tests.
    pub alpha: f64,
    /// Condition-number threshold for the multicollinearity flag.
    pub cond_threshold: f64,
}

impl Default for OlsOptions {
    fn default() -> Self {
        OlsOptions { alpha: 0.05, cond_threshold: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub name: String,
    #[serde(with = "crate::report::float")]
    pub coefficient: f64,
    #[serde(with = "crate::report::float")]
    pub std_error: f64,
    #[serde(with = "crate::report::float")]
    pub t_stat: f64,
    #[serde(with = "crate::report::float")]
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Canonical spec string when fitted from records; empty for raw
    /// matrix-level fits.
    pub spec: String,
    /// Index 0 is the intercept, then one entry per term in spec order.
    pub coefficients: Vec<CoefficientReport>,
    #[serde(with = "crate::report::float")]
    pub r_squared: f64,
    #[serde(with = "crate::report::float")]
    pub condition_number: f64,
    pub n_obs: usize,
    pub dof: usize,
    pub multicollinearity_flag: bool,
}

/// Ordinary least squares via SVD (never the normal equations).
///
/// `names` labels each design column, intercept included. Rank deficiency is
/// reported as an error naming every column with weight in the null space.
/// With zero residual degrees of freedom, or an exactly-zero residual
/// variance, the significance fields are NaN and nothing is marked
/// significant: such fits carry no noise information.
pub fn ols_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    names: &[String],
    opts: &OlsOptions,
) -> Result<FitReport, PlannerError> {
    let (n, p) = (x.nrows(), x.ncols());
    if names.len() != p {
        return Err(PlannerError::InvalidInput(format!(
            "{} column names for {p} columns",
            names.len()
        )));
    }
    if y.len() != n {
        return Err(PlannerError::InvalidInput(format!(
            "{n} design rows but {} responses",
            y.len()
        )));
    }
    if n < p {
        return Err(PlannerError::DegreesOfFreedom { n_obs: n, n_params: p });
    }

    let svd = x.clone().svd(true, true);
    let sigma = &svd.singular_values;
    let smax = sigma.max();
    let tol = smax * f64::EPSILON * n.max(p) as f64;
    let rank = sigma.iter().filter(|&&s| s > tol).count();
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    if rank < p {
        // Right singular vectors past the rank span the null space; any
        // column with weight there participates in a linear dependency.
        let mut dependent = Vec::new();
        for (j, name) in names.iter().enumerate() {
            let involved = (rank..p).any(|k| v_t[(k, j)].abs() > 1e-8);
            if involved {
                dependent.push(name.clone());
            }
        }
        if dependent.is_empty() {
            dependent = names.to_vec();
        }
        return Err(PlannerError::SingularDesign(dependent));
    }

    let beta = svd.solve(y, tol).expect("u/v_t computed");
    let fitted = x * &beta;
    let resid = y - &fitted;
    let ssr = resid.norm_squared();
    let mean_y = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ssr / ss_tot
    } else if ssr <= 1e-20 {
        1.0
    } else {
        f64::NAN
    };

    // diag((XᵀX)⁻¹)_j = Σ_k V[j,k]²/σ_k²
    let xtx_inv_diag: Vec<f64> = (0..p)
        .map(|j| (0..p).map(|k| (v_t[(k, j)] / sigma[k]).powi(2)).sum())
        .collect();

    let dof = n - p;
    let sigma2 = if dof > 0 { ssr / dof as f64 } else { f64::NAN };
    let coefficients: Vec<CoefficientReport> = (0..p)
        .map(|j| {
            let coefficient = beta[j];
            let (std_error, t_stat, p_value, significant) = if dof > 0 && sigma2 > 0.0 {
                let se = (sigma2 * xtx_inv_diag[j]).sqrt();
                let t = coefficient / se;
                let pv = 2.0 * student_t_sf(t.abs(), dof as u64);
                (se, t, pv, pv < opts.alpha)
            } else {
                (f64::NAN, f64::NAN, f64::NAN, false)
            };
            CoefficientReport {
                name: names[j].clone(),
                coefficient,
                std_error,
                t_stat,
                p_value,
                significant,
            }
        })
        .collect();

    let condition_number = standardized_condition_number(x);

    Ok(FitReport {
        spec: String::new(),
        coefficients,
        r_squared,
        condition_number,
        n_obs: n,
        dof,
        multicollinearity_flag: condition_number > opts.cond_threshold,
    })
}

/// Condition number of the column-standardized design, intercept excluded.
/// Raw log columns sit at wildly different scales, so the singular-value
/// ratio is only meaningful after centering to zero mean and unit variance.
fn standardized_condition_number(x: &DMatrix<f64>) -> f64 {
    let (n, p) = (x.nrows(), x.ncols());
    if p <= 1 {
        return 1.0;
    }
    let mut z = DMatrix::zeros(n, p - 1);
    for j in 1..p {
        let col = x.column(j);
        let mean = col.mean();
        let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if sd == 0.0 {
            // A constant column duplicates the intercept outright.
            return f64::INFINITY;
        }
        for i in 0..n {
            z[(i, j - 1)] = (x[(i, j)] - mean) / sd;
        }
    }
    let sv = z.svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Fit a feature spec over experiment records (design built on the fly).
pub fn fit_power_law(
    records: &[ExperimentRecord],
    spec: &FeatureSpec,
    opts: &OlsOptions,
) -> Result<FitReport, PlannerError> {
    let (x, y) = build_design_matrix(records, spec)?;
    let mut names = vec!["intercept".to_string()];
    names.extend(spec.terms.iter().map(Term::label));
    let mut report = ols_fit(&x, &y, &names, opts)?;
    report.spec = spec.canonical();
    Ok(report)
}

/// Table-style verdicts attached to ranked fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Multicollinearity,
    RedundantInteraction,
    LowSignificance,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Multicollinearity => write!(f, "strong multicollinearity"),
            Verdict::RedundantInteraction => write!(f, "redundant interaction term"),
            Verdict::LowSignificance => write!(f, "low-significance main term"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFit {
    pub report: FitReport,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SelectionOutcome {
    /// Successful fits, best R² first (ties keep input order).
    pub ranked: Vec<RankedFit>,
    /// (spec, error message) for fits that failed; failures never abort
    /// the batch.
    pub failed: Vec<(String, String)>,
}

/// Fit every spec and rank the survivors by R², annotating each with the
/// survey-style verdicts.
pub fn model_selection(
    records: &[ExperimentRecord],
    specs: &[FeatureSpec],
    opts: &OlsOptions,
) -> SelectionOutcome {
    let mut out = SelectionOutcome::default();
    for spec in specs {
        match fit_power_law(records, spec, opts) {
            Ok(report) => {
                let mut verdicts = Vec::new();
                if report.multicollinearity_flag {
                    verdicts.push(Verdict::Multicollinearity);
                }
                let interaction_weak = spec
                    .terms
                    .iter()
                    .zip(&report.coefficients[1..])
                    .any(|(t, c)| matches!(t, Term::LogProduct(..)) && !c.significant);
                if interaction_weak {
                    verdicts.push(Verdict::RedundantInteraction);
                }
                let main_weak = spec
                    .terms
                    .iter()
                    .zip(&report.coefficients[1..])
                    .any(|(t, c)| matches!(t, Term::Log(_)) && !c.significant);
                if main_weak {
                    verdicts.push(Verdict::LowSignificance);
                }
                out.ranked.push(RankedFit { report, verdicts });
            }
            Err(e) => out.failed.push((spec.canonical(), e.to_string())),
        }
    }
    // NaN R² sorts last; stable sort preserves input order on ties.
    out.ranked.sort_by(|a, b| {
        let ra = if a.report.r_squared.is_nan() { f64::NEG_INFINITY } else { a.report.r_squared };
        let rb = if b.report.r_squared.is_nan() { f64::NEG_INFINITY } else { b.report.r_squared };
        rb.partial_cmp(&ra).unwrap()
    });
    out
}

/// intercept + Σ coeff_i · term_i(record), in log-loss space.
pub fn predict_log_loss(report: &FitReport, record: &ExperimentRecord) -> Result<f64, PlannerError> {
    if report.spec.is_empty() {
        return Err(PlannerError::InvalidInput(
            "report carries no feature spec; fit through fit_power_law".into(),
        ));
    }
    let spec = FeatureSpec::parse(&report.spec)?;
    if spec.terms.len() + 1 != report.coefficients.len() {
        return Err(PlannerError::InvalidInput("coefficient count does not match spec".into()));
    }
    let mut acc = report.coefficients[0].coefficient;
    for (term, c) in spec.terms.iter().zip(&report.coefficients[1..]) {
        acc += c.coefficient * term.value(record)?;
    }
    Ok(acc)
}

/// Exponents of the equivalent N_total–s–n_exp form of a fitted law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityForm {
    pub ntotal_exponent: Option<f64>,
    pub s_exponent: f64,
    pub nexp_exponent: f64,
}

/// Rewrite a fit containing plain ln(nexp) and ln(ntopk) terms in terms of
/// sparsity: with s = nexp/ntopk,
/// c2·ln(nexp) + c3·ln(ntopk) = (−c3)·ln(s) + (c2+c3)·ln(nexp).
pub fn sparsity_reparameterization(report: &FitReport) -> Option<SparsityForm> {
    let spec = FeatureSpec::parse(&report.spec).ok()?;
    let coeff_of = |v: Var| -> Option<f64> {
        spec.terms
            .iter()
            .position(|t| *t == Term::Log(v))
            .map(|i| report.coefficients[i + 1].coefficient)
    };
    let c_exp = coeff_of(Var::NExp)?;
    let c_topk = coeff_of(Var::NTopk)?;
    Some(SparsityForm {
        ntotal_exponent: coeff_of(Var::NTotal),
        s_exponent: -c_topk,
        nexp_exponent: c_exp + c_topk,
    })
}
