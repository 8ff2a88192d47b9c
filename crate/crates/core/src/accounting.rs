//! Exact parameter accounting for mixture-of-experts transformers.
//!
//! A configuration has five degrees of freedom: layer count `l`, hidden
//! dimension `d`, granularity `g = d/d_exp`, expert count `n_exp`, and the
//! number of experts activated per token `n_topk`. Non-embedding parameter
//! counts follow
//!
//! ```text
//! N_total  = l·d²·(4 + 3·n_exp/g)
//! N_active = l·d²·(4 + 3·n_topk/g)
//! ```
//!
//! Counts are evaluated in exact rational arithmetic so that integral inputs
//! give integral outputs with zero rounding error; floating point is used
//! only for the derived ratios (sparsity, width-to-depth, active fraction).

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::PlannerError;

/// Granularity as an exact non-negative rational (stored reduced).
pub type Gran = Ratio<u64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelDims {
    pub l: u64,
    pub d: u64,
    pub g: Gran,
    pub n_exp: u64,
    pub n_topk: u64,
}

impl ModelDims {
    pub fn new(l: u64, d: u64, g: Gran, n_exp: u64, n_topk: u64) -> Result<Self, PlannerError> {
        if l == 0 {
            return Err(PlannerError::InvalidInput("l must be positive".into()));
        }
        if d == 0 {
            return Err(PlannerError::InvalidInput("d must be positive".into()));
        }
        if g.numer() == &0 {
            return Err(PlannerError::InvalidInput("g must be positive".into()));
        }
        if n_exp == 0 {
            return Err(PlannerError::InvalidInput("n_exp must be positive".into()));
        }
        if n_topk == 0 {
            return Err(PlannerError::InvalidInput("n_topk must be positive".into()));
        }
        if n_topk > n_exp {
            return Err(PlannerError::InvalidInput(format!(
                "n_topk exceeds n_exp ({n_topk} > {n_exp})"
            )));
        }
        Ok(ModelDims { l, d, g, n_exp, n_topk })
    }

    /// Like [`ModelDims::new`] but additionally requires the expert hidden
    /// dimension d_exp = d/g to be a whole number.
    pub fn new_strict(
        l: u64,
        d: u64,
        g: Gran,
        n_exp: u64,
        n_topk: u64,
    ) -> Result<Self, PlannerError> {
        let dims = Self::new(l, d, g, n_exp, n_topk)?;
        let num = d as u128 * *g.denom() as u128;
        if num % *g.numer() as u128 != 0 {
            return Err(PlannerError::InvalidInput(format!(
                "d/g = {d}/({}) is not an integer expert width",
                format_gran(g)
            )));
        }
        Ok(dims)
    }

    /// Expert hidden dimension d/g as a rational.
    pub fn d_exp(&self) -> BigRational {
        BigRational::new(
            BigInt::from(self.d) * BigInt::from(*self.g.denom()),
            BigInt::from(*self.g.numer()),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBudget {
    pub n_total: BigRational,
    pub n_active: BigRational,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityStats {
    /// Expert sparsity n_exp/n_topk.
    pub s: f64,
    /// Width-to-depth ratio d/l.
    pub gamma: f64,
    /// N_active / N_total, in (0, 1].
    pub active_ratio: f64,
}

fn params_with_experts(l: u64, d: u64, g: Gran, n: u64) -> BigRational {
    let p = BigInt::from(*g.numer());
    let q = BigInt::from(*g.denom());
    let ld2 = BigInt::from(l) * BigInt::from(d) * BigInt::from(d);
    // l·d²·(4 + 3n/g) = l·d²·(4p + 3nq)/p
    BigRational::new(ld2 * (BigInt::from(4u8) * &p + BigInt::from(3u8) * BigInt::from(n) * &q), p)
}

/// N_total = l·d²·(4 + 3·n_exp/g), exact.
pub fn total_params(dims: &ModelDims) -> BigRational {
    params_with_experts(dims.l, dims.d, dims.g, dims.n_exp)
}

/// N_active = l·d²·(4 + 3·n_topk/g), exact.
pub fn active_params(dims: &ModelDims) -> BigRational {
    params_with_experts(dims.l, dims.d, dims.g, dims.n_topk)
}

pub fn param_budget(dims: &ModelDims) -> ParamBudget {
    ParamBudget { n_total: total_params(dims), n_active: active_params(dims) }
}

pub fn sparsity_stats(dims: &ModelDims) -> SparsityStats {
    let ratio = active_params(dims) / total_params(dims);
    SparsityStats {
        s: dims.n_exp as f64 / dims.n_topk as f64,
        gamma: dims.d as f64 / dims.l as f64,
        active_ratio: ratio.to_f64().unwrap_or(f64::NAN),
    }
}

/// Closed-form active/total ratio (4 + 3·n_exp/(g·s)) / (4 + 3·n_exp/g).
///
/// Agrees with [`sparsity_stats`] whenever n_topk = n_exp/s exactly; for
/// fixed g and s > 1 it is strictly decreasing in n_exp, which is the
/// penalty that makes large expert counts costly at constant sparsity.
pub fn active_ratio_formula(n_exp: f64, g: f64, s: f64) -> Result<f64, PlannerError> {
    if !(n_exp > 0.0) || !n_exp.is_finite() {
        return Err(PlannerError::InvalidInput("n_exp must be positive".into()));
    }
    if !(g > 0.0) || !g.is_finite() {
        return Err(PlannerError::InvalidInput("g must be positive".into()));
    }
    if !(s >= 1.0) || !s.is_finite() {
        return Err(PlannerError::InvalidInput(format!("sparsity s must be ≥ 1, got {s}")));
    }
    Ok((4.0 + 3.0 * n_exp / (g * s)) / (4.0 + 3.0 * n_exp / g))
}

/// Scale granularity and expert counts together, preserving both budgets.
///
/// Each factor f maps (l, d, g, n_exp, n_topk) to (l, d, g·f, n_exp·f,
/// n_topk·f). Because n/g is invariant under the joint scaling, total and
/// active counts are exactly unchanged. Factors must keep both expert counts
/// integral and ≥ 1.
pub fn granularity_variants(
    base: &ModelDims,
    factors: &[Gran],
) -> Result<Vec<ModelDims>, PlannerError> {
    let mut out = Vec::with_capacity(factors.len());
    for &f in factors {
        if f.numer() == &0 {
            return Err(PlannerError::InvalidInput("variant factor must be positive".into()));
        }
        let scale = |n: u64, what: &str| -> Result<u64, PlannerError> {
            let prod = n as u128 * *f.numer() as u128;
            if prod % *f.denom() as u128 != 0 {
                return Err(PlannerError::InvalidInput(format!(
                    "factor {} makes {what} = {n}·{} non-integral",
                    format_gran(f),
                    format_gran(f)
                )));
            }
            u64::try_from(prod / *f.denom() as u128).map_err(|_| {
                PlannerError::InvalidInput(format!("factor {} overflows {what}", format_gran(f)))
            })
        };
        let n_exp = scale(base.n_exp, "n_exp")?;
        let n_topk = scale(base.n_topk, "n_topk")?;
        let g = Ratio::<u128>::new(
            *base.g.numer() as u128 * *f.numer() as u128,
            *base.g.denom() as u128 * *f.denom() as u128,
        );
        let (gn, gd) = (u64::try_from(*g.numer()), u64::try_from(*g.denom()));
        let g = match (gn, gd) {
            (Ok(n), Ok(d)) => Gran::new(n, d),
            _ => {
                return Err(PlannerError::InvalidInput(format!(
                    "factor {} overflows granularity",
                    format_gran(f)
                )))
            }
        };
        out.push(ModelDims::new(base.l, base.d, g, n_exp, n_topk)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoundingMode {
    /// Banker's rounding: ties go to the even neighbour.
    #[default]
    HalfEven,
    /// Ties move away from zero (schoolbook rounding).
    HalfAwayFromZero,
}

/// Round an exact rational to the nearest integer under the given tie rule.
pub fn round_rational(x: &BigRational, mode: RoundingMode) -> BigInt {
    let fl = x.floor().to_integer();
    let frac = x - BigRational::from_integer(fl.clone());
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    match frac.cmp(&half) {
        std::cmp::Ordering::Less => fl,
        std::cmp::Ordering::Greater => fl + 1,
        std::cmp::Ordering::Equal => match mode {
            RoundingMode::HalfEven => {
                if fl.is_even() {
                    fl
                } else {
                    fl + 1
                }
            }
            // x = fl + 1/2: for x > 0 away is fl+1, for x < 0 away is fl.
            RoundingMode::HalfAwayFromZero => {
                if x.is_negative() {
                    fl
                } else {
                    fl + 1
                }
            }
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertSolution {
    pub n_exp: u64,
    pub n_topk: u64,
    pub achieved_total: BigRational,
    pub achieved_active: BigRational,
    /// Signed percentage deviation of the achieved total from the target.
    pub total_deviation_pct: f64,
    pub active_deviation_pct: f64,
}

/// Solve for integer (n_exp, n_topk) hitting given budgets at fixed (l, d, g).
///
/// Inverts the counting formulas: n = round((target/(l·d²) − 4)·g/3), with
/// n_exp from the total budget and n_topk from the active one, clamped to
/// 1 ≤ n_topk ≤ n_exp. The returned deviations report how far the achieved
/// budgets land from the requested ones.
pub fn solve_experts_for_budget(
    l: u64,
    d: u64,
    g: Gran,
    target_total: &BigRational,
    target_active: &BigRational,
    rounding: RoundingMode,
) -> Result<ExpertSolution, PlannerError> {
    if l == 0 || d == 0 {
        return Err(PlannerError::InvalidInput("l and d must be positive".into()));
    }
    if g.numer() == &0 {
        return Err(PlannerError::InvalidInput("g must be positive".into()));
    }
    if target_total < target_active {
        return Err(PlannerError::InvalidInput(format!(
            "target_total ({target_total}) is below target_active ({target_active})"
        )));
    }
    let ld2 = BigRational::from_integer(BigInt::from(l) * BigInt::from(d) * BigInt::from(d));
    let dense = BigRational::from_integer(BigInt::from(4u8)) * &ld2;
    if *target_active <= dense {
        return Err(PlannerError::Infeasible(format!(
            "dense term 4·l·d² = {dense} already meets or exceeds target_active = {target_active}"
        )));
    }

    let g_over_3 = BigRational::new(
        BigInt::from(*g.numer()),
        BigInt::from(3u8) * BigInt::from(*g.denom()),
    );
    let four = BigRational::from_integer(BigInt::from(4u8));
    let solve = |target: &BigRational| -> BigInt {
        let raw = (target / &ld2 - &four) * &g_over_3;
        round_rational(&raw, rounding).max(BigInt::from(1))
    };
    let n_exp_big = solve(target_total);
    let n_topk_big = solve(target_active).min(n_exp_big.clone());

    let to_u64 = |v: &BigInt, what: &str| -> Result<u64, PlannerError> {
        v.to_u64().ok_or_else(|| {
            PlannerError::InvalidInput(format!("solved {what} = {v} does not fit in u64"))
        })
    };
    let n_exp = to_u64(&n_exp_big, "n_exp")?;
    let n_topk = to_u64(&n_topk_big, "n_topk")?;

    let dims = ModelDims::new(l, d, g, n_exp, n_topk)?;
    let achieved_total = total_params(&dims);
    let achieved_active = active_params(&dims);
    let (total_deviation_pct, active_deviation_pct) =
        budget_deviation(&dims, target_total, target_active);
    Ok(ExpertSolution {
        n_exp,
        n_topk,
        achieved_total,
        achieved_active,
        total_deviation_pct,
        active_deviation_pct,
    })
}

/// Signed percentage deviation of a configuration's budgets from targets.
pub fn budget_deviation(
    dims: &ModelDims,
    target_total: &BigRational,
    target_active: &BigRational,
) -> (f64, f64) {
    let pct = |achieved: BigRational, target: &BigRational| -> f64 {
        ((achieved - target) / target).to_f64().unwrap_or(f64::NAN) * 100.0
    };
    (pct(total_params(dims), target_total), pct(active_params(dims), target_active))
}

/// Parse an exact rational from decimal ("2.35e11", "0.1"), integer, or
/// fraction ("27/10") notation.
pub fn parse_rational_str(s: &str) -> Result<BigRational, PlannerError> {
    let t = s.trim();
    if t.is_empty() {
        return Err(PlannerError::Parse("empty number".into()));
    }
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n
            .trim()
            .parse()
            .map_err(|_| PlannerError::Parse(format!("bad numerator in {t:?}")))?;
        let d: BigInt = d
            .trim()
            .parse()
            .map_err(|_| PlannerError::Parse(format!("bad denominator in {t:?}")))?;
        if d.is_zero() {
            return Err(PlannerError::Parse(format!("zero denominator in {t:?}")));
        }
        return Ok(BigRational::new(n, d));
    }

    let (negative, rest) = match t.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (mant, exp) = match rest.split_once(['e', 'E']) {
        Some((m, e)) => (
            m,
            e.parse::<i64>()
                .map_err(|_| PlannerError::Parse(format!("bad exponent in {t:?}")))?,
        ),
        None => (rest, 0),
    };
    let (int_part, frac_part) = match mant.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mant, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(PlannerError::Parse(format!("no digits in {t:?}")));
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(PlannerError::Parse(format!("invalid digits in {t:?}")));
    }
    let digits = format!("{int_part}{frac_part}");
    let mantissa: BigInt =
        digits.parse().map_err(|_| PlannerError::Parse(format!("invalid digits in {t:?}")))?;
    let shift = exp - frac_part.len() as i64;
    if shift.unsigned_abs() > 100_000 {
        return Err(PlannerError::Parse(format!("exponent out of range in {t:?}")));
    }
    let ten = BigInt::from(10u8);
    let val = if shift >= 0 {
        BigRational::from_integer(mantissa * ten.pow(shift as u32))
    } else {
        BigRational::new(mantissa, ten.pow((-shift) as u32))
    };
    Ok(if negative { -val } else { val })
}

/// Parse a positive granularity value ("4", "2.7", "27/10").
pub fn parse_gran(s: &str) -> Result<Gran, PlannerError> {
    let r = parse_rational_str(s)?;
    if !r.is_positive() {
        return Err(PlannerError::Parse(format!("granularity must be positive, got {s:?}")));
    }
    let n = r.numer().to_u64();
    let d = r.denom().to_u64();
    match (n, d) {
        (Some(n), Some(d)) => Ok(Gran::new(n, d)),
        _ => Err(PlannerError::Parse(format!("granularity {s:?} out of range"))),
    }
}

/// Render a granularity compactly: integers plain, exact decimals as
/// decimals ("2.7"), everything else as a fraction ("1/3").
pub fn format_gran(g: Gran) -> String {
    let (n, d) = (*g.numer(), *g.denom());
    if d == 1 {
        return n.to_string();
    }
    // A reduced denominator of the form 2^a·5^b has a finite decimal form.
    let (mut rem, mut digits) = (d, 0u32);
    while rem % 2 == 0 {
        rem /= 2;
        digits += 1;
    }
    let mut fives = 0u32;
    while rem % 5 == 0 {
        rem /= 5;
        fives += 1;
    }
    if rem == 1 {
        let digits = digits.max(fives);
        let scaled = n as u128 * 10u128.pow(digits) / d as u128;
        let s = format!("{scaled:0>width$}", width = digits as usize + 1);
        let (int_part, frac_part) = s.split_at(s.len() - digits as usize);
        return format!("{int_part}.{frac_part}");
    }
    format!("{n}/{d}")
}
