//! Plan files: TOML descriptions of a constraint set, with optional
//! reference configuration for side-by-side reporting. Unknown keys are
//! rejected so a typo cannot silently fall back to a default.

use std::fs;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::Deserialize;

use crate::accounting::{parse_rational_str, Gran, ModelDims};
use crate::error::PlannerError;
use crate::optimizer::Constraints;
use crate::records::format_real;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawNumber {
    Int(i64),
    Float(f64),
    Text(String),
}

impl RawNumber {
    /// Exact rational value. Floats are read with decimal semantics — the
    /// shortest decimal that reproduces the float — so `2.2e10` means
    /// exactly 22·10⁹ and `g = 2.7` means exactly 27/10, not the nearest
    /// binary fraction.
    fn to_rational(&self, key: &str) -> Result<BigRational, PlannerError> {
        match self {
            RawNumber::Int(i) => Ok(BigRational::from_integer(BigInt::from(*i))),
            RawNumber::Float(f) => {
                if !f.is_finite() {
                    return Err(PlannerError::Parse(format!("{key} must be finite, got {f}")));
                }
                parse_rational_str(&format_real(*f))
            }
            RawNumber::Text(s) => parse_rational_str(s)
                .map_err(|e| PlannerError::Parse(format!("{key}: {e}"))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReference {
    l: u64,
    d: u64,
    n_exp: u64,
    n_topk: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    c_total: RawNumber,
    c_active: RawNumber,
    k_align: Option<u64>,
    gamma_min: Option<u64>,
    gamma_max: Option<u64>,
    n_exp: Option<Vec<u64>>,
    n_exp_max_power: Option<u32>,
    g: Option<RawNumber>,
    exponents: Option<[f64; 3]>,
    max_brute_candidates: Option<u64>,
    reference: Option<RawReference>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanSpec {
    pub constraints: Constraints,
    /// Known configuration to print alongside the chosen one; shares the
    /// plan's granularity.
    pub reference: Option<ModelDims>,
}

fn rational_to_gran(r: &BigRational, key: &str) -> Result<Gran, PlannerError> {
    match (r.numer().to_u64(), r.denom().to_u64()) {
        (Some(n), Some(d)) if n > 0 => Ok(Gran::new(n, d)),
        _ => Err(PlannerError::Parse(format!("{key} must be a positive ratio, got {r}"))),
    }
}

pub fn parse_plan_str(text: &str) -> Result<PlanSpec, PlannerError> {
    let raw: RawPlan =
        toml::from_str(text).map_err(|e| PlannerError::Parse(format!("plan file: {e}")))?;

    let c_total = raw.c_total.to_rational("c_total")?;
    let c_active = raw.c_active.to_rational("c_active")?;
    let mut constraints = Constraints::new(c_total, c_active);

    if let Some(k) = raw.k_align {
        constraints.k_align = k;
    }
    if let Some(g) = raw.gamma_min {
        constraints.gamma_min = g;
    }
    if let Some(g) = raw.gamma_max {
        constraints.gamma_max = g;
    }
    match (raw.n_exp, raw.n_exp_max_power) {
        (Some(_), Some(_)) => {
            return Err(PlannerError::Parse(
                "specify n_exp or n_exp_max_power, not both".into(),
            ));
        }
        (Some(list), None) => constraints.n_exp_grid = list,
        (None, Some(power)) => {
            if power == 0 || power > 62 {
                return Err(PlannerError::Parse(format!(
                    "n_exp_max_power must be in 1..=62, got {power}"
                )));
            }
            constraints.n_exp_grid = (1..=power).map(|k| 1u64 << k).collect();
        }
        (None, None) => {}
    }
    if let Some(g) = raw.g {
        constraints.g = rational_to_gran(&g.to_rational("g")?, "g")?;
    }
    if let Some(e) = raw.exponents {
        constraints.exponents = e;
    }
    if let Some(cap) = raw.max_brute_candidates {
        constraints.max_brute_candidates = cap;
    }
    constraints.validate()?;

    let reference = match raw.reference {
        Some(r) => Some(ModelDims::new(r.l, r.d, constraints.g, r.n_exp, r.n_topk)?),
        None => None,
    };
    Ok(PlanSpec { constraints, reference })
}

pub fn read_plan(path: &Path) -> Result<PlanSpec, PlannerError> {
    parse_plan_str(&fs::read_to_string(path)?)
}
