//! Report types and serialization helpers. Every report here renders to
//! deterministic text (a pure function of the data — no timestamps) and
//! serializes to JSON that the same types re-read losslessly: exact counts
//! travel as decimal strings, possibly non-finite floats as
//! `null`/`"inf"`/`"-inf"`.

use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::accounting::{
    format_gran, param_budget, parse_rational_str, sparsity_stats, ExpertSolution,
    Gran, ModelDims,
};
use crate::chinchilla::{ChinchillaFit, CurvePoint, DSeries, DominanceReport};
use crate::optimizer::{
    loss_proxy, CellOutcome, Constraints, OptimizeOutcome, SkipReason,
};
use crate::records::format_real;
use crate::regression::FitReport;

/// Serde adapter for possibly non-finite f64 fields.
pub mod float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_unit()
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
            Null(()),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad float literal {other:?}"))),
            },
            Raw::Null(()) => Ok(f64::NAN),
        }
    }
}

/// An exact parameter count, serialized as a decimal string ("49766400",
/// "7/2") so JSON round trips never lose precision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactCount(pub BigRational);

impl fmt::Display for ExactCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for ExactCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ExactCount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_rational_str(&text).map(ExactCount).map_err(serde::de::Error::custom)
    }
}

fn pct(part: &BigRational, whole: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    ((part / whole) * BigRational::from_integer(100.into()))
        .to_f64()
        .unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------------------
// Counting reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub l: u64,
    pub d: u64,
    pub g: String,
    pub n_exp: u64,
    pub n_topk: u64,
    pub n_total: ExactCount,
    pub n_active: ExactCount,
    #[serde(with = "float")]
    pub s: f64,
    #[serde(with = "float")]
    pub gamma: f64,
    #[serde(with = "float")]
    pub active_ratio: f64,
}

impl CountReport {
    pub fn new(dims: &ModelDims) -> Self {
        let budget = param_budget(dims);
        let stats = sparsity_stats(dims);
        CountReport {
            l: dims.l,
            d: dims.d,
            g: format_gran(dims.g),
            n_exp: dims.n_exp,
            n_topk: dims.n_topk,
            n_total: ExactCount(budget.n_total),
            n_active: ExactCount(budget.n_active),
            s: stats.s,
            gamma: stats.gamma,
            active_ratio: stats.active_ratio,
        }
    }

    pub fn render_text(&self) -> String {
        let mut t = String::new();
        t.push_str("configuration\n");
        t.push_str(&format!("  l            {}\n", self.l));
        t.push_str(&format!("  d            {}\n", self.d));
        t.push_str(&format!("  g            {}\n", self.g));
        t.push_str(&format!("  n_exp        {}\n", self.n_exp));
        t.push_str(&format!("  n_topk       {}\n", self.n_topk));
        t.push_str("budgets\n");
        t.push_str(&format!("  n_total      {}\n", self.n_total));
        t.push_str(&format!("  n_active     {}\n", self.n_active));
        t.push_str("ratios\n");
        t.push_str(&format!("  s            {}\n", format_real(self.s)));
        t.push_str(&format!("  gamma        {}\n", format_real(self.gamma)));
        t.push_str(&format!("  active_ratio {}\n", format_real(self.active_ratio)));
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub g: String,
    pub n_exp: u64,
    pub n_topk: u64,
    pub n_total: ExactCount,
    pub n_active: ExactCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantsReport {
    pub l: u64,
    pub d: u64,
    pub rows: Vec<VariantRow>,
}

impl VariantsReport {
    pub fn new(l: u64, d: u64, variants: &[ModelDims]) -> Self {
        let rows = variants
            .iter()
            .map(|v| {
                let budget = param_budget(v);
                VariantRow {
                    g: format_gran(v.g),
                    n_exp: v.n_exp,
                    n_topk: v.n_topk,
                    n_total: ExactCount(budget.n_total),
                    n_active: ExactCount(budget.n_active),
                }
            })
            .collect();
        VariantsReport { l, d, rows }
    }

    pub fn render_text(&self) -> String {
        let mut t = format!("iso-budget variants at l = {}, d = {}\n", self.l, self.d);
        t.push_str(&format!(
            "  {:<8} {:>8} {:>8} {:>16} {:>16}\n",
            "g", "n_exp", "n_topk", "n_total", "n_active"
        ));
        for r in &self.rows {
            t.push_str(&format!(
                "  {:<8} {:>8} {:>8} {:>16} {:>16}\n",
                r.g,
                r.n_exp,
                r.n_topk,
                r.n_total.to_string(),
                r.n_active.to_string()
            ));
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveExpertsReport {
    pub l: u64,
    pub d: u64,
    pub g: String,
    pub target_total: ExactCount,
    pub target_active: ExactCount,
    pub n_exp: u64,
    pub n_topk: u64,
    pub achieved_total: ExactCount,
    pub achieved_active: ExactCount,
    #[serde(with = "float")]
    pub total_deviation_pct: f64,
    #[serde(with = "float")]
    pub active_deviation_pct: f64,
}

impl SolveExpertsReport {
    pub fn new(
        l: u64,
        d: u64,
        g: Gran,
        target_total: &BigRational,
        target_active: &BigRational,
        sol: &ExpertSolution,
    ) -> Self {
        SolveExpertsReport {
            l,
            d,
            g: format_gran(g),
            target_total: ExactCount(target_total.clone()),
            target_active: ExactCount(target_active.clone()),
            n_exp: sol.n_exp,
            n_topk: sol.n_topk,
            achieved_total: ExactCount(sol.achieved_total.clone()),
            achieved_active: ExactCount(sol.achieved_active.clone()),
            total_deviation_pct: sol.total_deviation_pct,
            active_deviation_pct: sol.active_deviation_pct,
        }
    }

    pub fn render_text(&self) -> String {
        let mut t = String::new();
        t.push_str(&format!(
            "expert counts for l = {}, d = {}, g = {}\n",
            self.l, self.d, self.g
        ));
        t.push_str(&format!("  n_exp            {}\n", self.n_exp));
        t.push_str(&format!("  n_topk           {}\n", self.n_topk));
        t.push_str(&format!(
            "  total   target {} achieved {} deviation {}%\n",
            self.target_total,
            self.achieved_total,
            format_real(self.total_deviation_pct)
        ));
        t.push_str(&format!(
            "  active  target {} achieved {} deviation {}%\n",
            self.target_active,
            self.achieved_active,
            format_real(self.active_deviation_pct)
        ));
        t
    }
}

// ---------------------------------------------------------------------------
// Regression and curve-fit renderings

pub fn render_fit_text(report: &FitReport) -> String {
    let mut t = String::new();
    if report.spec.is_empty() {
        t.push_str("fit: ln L ~ intercept (raw design matrix)\n");
    } else {
        t.push_str(&format!("fit: ln L ~ intercept + {}\n", report.spec));
    }
    t.push_str(&format!(
        "  {:<20} {:>24} {:>24} {:>14} {:>14}  {}\n",
        "term", "coefficient", "std_error", "t_stat", "p_value", "significant"
    ));
    for c in &report.coefficients {
        t.push_str(&format!(
            "  {:<20} {:>24} {:>24} {:>14} {:>14}  {}\n",
            c.name,
            format_real(c.coefficient),
            format_real(c.std_error),
            format_real(c.t_stat),
            format_real(c.p_value),
            if c.significant { "yes" } else { "no" }
        ));
    }
    t.push_str(&format!("  r_squared         {}\n", format_real(report.r_squared)));
    t.push_str(&format!(
        "  condition_number  {}\n",
        format_real(report.condition_number)
    ));
    t.push_str(&format!("  n_obs {}  dof {}\n", report.n_obs, report.dof));
    t.push_str(&format!(
        "  multicollinearity {}\n",
        if report.multicollinearity_flag { "yes" } else { "no" }
    ));
    t
}

pub fn render_chinchilla_text(fit: &ChinchillaFit) -> String {
    let mut t = String::new();
    t.push_str("loss model L = A*N^(-alpha) + B*D^(-beta) + E\n");
    t.push_str(&format!("  A          {}\n", format_real(fit.a)));
    t.push_str(&format!("  B          {}\n", format_real(fit.b)));
    t.push_str(&format!("  E          {}\n", format_real(fit.e)));
    t.push_str(&format!("  alpha      {}\n", format_real(fit.alpha)));
    t.push_str(&format!("  beta       {}\n", format_real(fit.beta)));
    t.push_str(&format!("  objective  {}\n", format_real(fit.objective_value)));
    t.push_str(&format!("  converged  {}\n", if fit.converged { "yes" } else { "no" }));
    t.push_str(&format!(
        "  start      index {} at [{}]\n",
        fit.start_index,
        fit.start_point.map(format_real).join(", ")
    ));
    t
}

pub fn render_comparison_text(report: &DominanceReport) -> String {
    let mut t = String::new();
    t.push_str(&format!(
        "dominance: fraction of grid points with loss_a < loss_b = {}\n",
        format_real(report.fraction_a_below)
    ));
    t.push_str(&format!(
        "  {:>18} {:>18} {:>22} {:>22} {:>24}  {}\n",
        "n_total", "tokens_D", "loss_a", "loss_b", "diff", "a_below"
    ));
    for p in &report.points {
        t.push_str(&format!(
            "  {:>18} {:>18} {:>22} {:>22} {:>24}  {}\n",
            format_real(p.n_total),
            format_real(p.tokens_d),
            format_real(p.loss_a),
            format_real(p.loss_b),
            format_real(p.diff),
            if p.a_below { "yes" } else { "no" }
        ));
    }
    t
}

// ---------------------------------------------------------------------------
// Plot series

/// Group curve points by token count: slices ascending in D, points
/// ascending in N within each slice.
pub fn slice_by_tokens(points: &[CurvePoint]) -> Vec<(f64, Vec<CurvePoint>)> {
    let mut slices: Vec<(f64, Vec<CurvePoint>)> = Vec::new();
    for p in points {
        match slices.iter_mut().find(|(d, _)| *d == p.tokens_d) {
            Some((_, v)) => v.push(*p),
            None => slices.push((p.tokens_d, vec![*p])),
        }
    }
    slices.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("token counts are finite"));
    for (_, v) in &mut slices {
        v.sort_by(|a, b| a.n_total.partial_cmp(&b.n_total).expect("sizes are finite"));
    }
    slices
}

/// One observed loss-vs-N series as tab-separated text.
pub fn series_tsv(points: &[CurvePoint]) -> String {
    let mut t = String::from("n_total\tloss_L\n");
    for p in points {
        t.push_str(&format!("{}\t{}\n", format_real(p.n_total), format_real(p.loss)));
    }
    t
}

/// One predicted-comparison series (N, loss_a, loss_b) as tab-separated text.
pub fn comparison_tsv(series: &DSeries) -> String {
    let mut t = String::from("n_total\tloss_a\tloss_b\n");
    for (n, a, b) in &series.points {
        t.push_str(&format!(
            "{}\t{}\t{}\n",
            format_real(*n),
            format_real(*a),
            format_real(*b)
        ));
    }
    t
}

// ---------------------------------------------------------------------------
// Plan report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanChoice {
    pub l: u64,
    pub d: u64,
    pub g: String,
    pub n_exp: u64,
    pub n_topk: u64,
    /// Width-ratio cell the candidate came from.
    pub gamma: u64,
    pub n_total: ExactCount,
    pub n_active: ExactCount,
    #[serde(with = "float")]
    pub loss_proxy: f64,
    #[serde(with = "float")]
    pub total_utilization_pct: f64,
    #[serde(with = "float")]
    pub active_utilization_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub l: u64,
    pub d: u64,
    pub n_exp: u64,
    pub n_topk: u64,
    pub n_total: ExactCount,
    pub n_active: ExactCount,
    #[serde(with = "float")]
    pub loss_proxy: f64,
    #[serde(with = "float")]
    pub total_utilization_pct: f64,
    #[serde(with = "float")]
    pub active_utilization_pct: f64,
    pub within_budgets: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCandidate {
    pub l: u64,
    pub d: u64,
    pub n_topk: u64,
    pub n_total: ExactCount,
    #[serde(with = "float")]
    pub loss_proxy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub n_exp: u64,
    pub gamma: u64,
    /// "ok", "no-layers", "no-width", or "no-topk".
    pub status: String,
    pub candidate: Option<CellCandidate>,
}

/// Result of the optional greedy-vs-exhaustive cross-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub ran: bool,
    /// Why the check was skipped, or what it concluded.
    pub note: String,
    pub missed_cells: usize,
    pub agreed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub c_total: ExactCount,
    pub c_active: ExactCount,
    pub best: Option<PlanChoice>,
    pub cells_total: usize,
    pub cells_with_candidate: usize,
    pub cells_no_layers: usize,
    pub cells_no_width: usize,
    pub cells_no_topk: usize,
    pub reference: Option<ReferenceComparison>,
    pub oracle: Option<OracleSummary>,
    pub table: Option<Vec<CellRow>>,
}

fn cell_row(cell: &CellOutcome) -> CellRow {
    match (&cell.candidate, cell.skip) {
        (Some(c), _) => CellRow {
            n_exp: cell.n_exp,
            gamma: cell.gamma,
            status: "ok".into(),
            candidate: Some(CellCandidate {
                l: c.dims.l,
                d: c.dims.d,
                n_topk: c.dims.n_topk,
                n_total: ExactCount(c.n_total.clone()),
                loss_proxy: c.loss_proxy,
            }),
        },
        (None, skip) => CellRow {
            n_exp: cell.n_exp,
            gamma: cell.gamma,
            status: match skip {
                Some(SkipReason::NoLayers) => "no-layers".into(),
                Some(SkipReason::NoWidth) => "no-width".into(),
                Some(SkipReason::NoTopk) => "no-topk".into(),
                None => "empty".into(),
            },
            candidate: None,
        },
    }
}

impl PlanReport {
    pub fn new(
        c: &Constraints,
        out: &OptimizeOutcome,
        reference: Option<&ModelDims>,
        include_table: bool,
    ) -> Self {
        let best = out.best.as_ref().map(|b| PlanChoice {
            l: b.dims.l,
            d: b.dims.d,
            g: format_gran(b.dims.g),
            n_exp: b.dims.n_exp,
            n_topk: b.dims.n_topk,
            gamma: b.gamma,
            n_total: ExactCount(b.n_total.clone()),
            n_active: ExactCount(b.n_active.clone()),
            loss_proxy: b.loss_proxy,
            total_utilization_pct: pct(&b.n_total, &c.c_total),
            active_utilization_pct: pct(&b.n_active, &c.c_active),
        });
        let reference = reference.map(|dims| {
            let budget = param_budget(dims);
            let within = budget.n_total <= c.c_total && budget.n_active <= c.c_active;
            ReferenceComparison {
                l: dims.l,
                d: dims.d,
                n_exp: dims.n_exp,
                n_topk: dims.n_topk,
                total_utilization_pct: pct(&budget.n_total, &c.c_total),
                active_utilization_pct: pct(&budget.n_active, &c.c_active),
                n_total: ExactCount(budget.n_total),
                n_active: ExactCount(budget.n_active),
                loss_proxy: loss_proxy(dims, c.exponents),
                within_budgets: within,
            }
        });
        let diag = &out.diagnostics;
        PlanReport {
            c_total: ExactCount(c.c_total.clone()),
            c_active: ExactCount(c.c_active.clone()),
            best,
            cells_total: diag.cells_total,
            cells_with_candidate: diag.cells_with_candidate,
            cells_no_layers: diag.cells_no_layers,
            cells_no_width: diag.cells_no_width,
            cells_no_topk: diag.cells_no_topk,
            reference,
            oracle: None,
            table: include_table.then(|| diag.table.iter().map(cell_row).collect()),
        }
    }

    pub fn render_text(&self) -> String {
        let mut t = String::new();
        t.push_str("plan budgets\n");
        t.push_str(&format!("  c_total      {}\n", self.c_total));
        t.push_str(&format!("  c_active     {}\n", self.c_active));
        match &self.best {
            Some(b) => {
                t.push_str("chosen configuration\n");
                t.push_str(&format!("  l            {}\n", b.l));
                t.push_str(&format!("  d            {}\n", b.d));
                t.push_str(&format!("  g            {}\n", b.g));
                t.push_str(&format!("  n_exp        {}\n", b.n_exp));
                t.push_str(&format!("  n_topk       {}\n", b.n_topk));
                t.push_str(&format!("  gamma cell   {}\n", b.gamma));
                t.push_str(&format!(
                    "  n_total      {} ({:.2}% of budget)\n",
                    b.n_total, b.total_utilization_pct
                ));
                t.push_str(&format!(
                    "  n_active     {} ({:.2}% of budget)\n",
                    b.n_active, b.active_utilization_pct
                ));
                t.push_str(&format!("  loss_proxy   {}\n", format_real(b.loss_proxy)));
            }
            None => {
                t.push_str("no feasible configuration\n");
            }
        }
        if let Some(r) = &self.reference {
            t.push_str("reference configuration (side-by-side)\n");
            t.push_str(&format!("  l            {}\n", r.l));
            t.push_str(&format!("  d            {}\n", r.d));
            t.push_str(&format!("  n_exp        {}\n", r.n_exp));
            t.push_str(&format!("  n_topk       {}\n", r.n_topk));
            t.push_str(&format!(
                "  n_total      {} ({:.2}% of budget)\n",
                r.n_total, r.total_utilization_pct
            ));
            t.push_str(&format!(
                "  n_active     {} ({:.2}% of budget)\n",
                r.n_active, r.active_utilization_pct
            ));
            t.push_str(&format!("  loss_proxy   {}\n", format_real(r.loss_proxy)));
            t.push_str(&format!(
                "  within budgets: {}\n",
                if r.within_budgets { "yes" } else { "no" }
            ));
        }
        t.push_str("diagnostics\n");
        t.push_str(&format!(
            "  cells total {}, with candidate {}, no layers {}, no width {}, no topk {}\n",
            self.cells_total,
            self.cells_with_candidate,
            self.cells_no_layers,
            self.cells_no_width,
            self.cells_no_topk
        ));
        if let Some(o) = &self.oracle {
            t.push_str("exhaustive cross-check\n");
            if o.ran {
                t.push_str(&format!(
                    "  {} ({} greedy cell(s) beaten by interior points)\n",
                    if o.agreed {
                        "agreed: greedy winner matches the exhaustive minimum"
                    } else {
                        "DISAGREED: exhaustive search found a better candidate"
                    },
                    o.missed_cells
                ));
            } else {
                t.push_str(&format!("  skipped: {}\n", o.note));
            }
        }
        if let Some(rows) = &self.table {
            t.push_str("per-cell table\n");
            t.push_str(&format!(
                "  {:>8} {:>6} {:<10} {:>6} {:>8} {:>8} {:>18} {:>24}\n",
                "n_exp", "gamma", "status", "l", "d", "n_topk", "n_total", "loss_proxy"
            ));
            for row in rows {
                match &row.candidate {
                    Some(c) => t.push_str(&format!(
                        "  {:>8} {:>6} {:<10} {:>6} {:>8} {:>8} {:>18} {:>24}\n",
                        row.n_exp,
                        row.gamma,
                        row.status,
                        c.l,
                        c.d,
                        c.n_topk,
                        c.n_total.to_string(),
                        format_real(c.loss_proxy)
                    )),
                    None => t.push_str(&format!(
                        "  {:>8} {:>6} {:<10} {:>6} {:>8} {:>8} {:>18} {:>24}\n",
                        row.n_exp, row.gamma, row.status, "-", "-", "-", "-", "-"
                    )),
                }
            }
        }
        t
    }
}
