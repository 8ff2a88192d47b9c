//! Accounting-layer checks: frozen counts for the published configuration
//! tables, exactness/closure properties of the iso-budget constructions, and
//! behaviour of the expert-solving helper. Expected values were produced with
//! an independent arbitrary-precision implementation before this crate's
//! arithmetic existed.

use moe_planner::accounting::{
    active_params, active_ratio_formula, budget_deviation, format_gran, granularity_variants,
    param_budget, parse_gran, parse_rational_str, round_rational, solve_experts_for_budget,
    sparsity_stats, total_params, Gran, ModelDims, RoundingMode,
};
use moe_planner::PlannerError;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use proptest::prelude::*;

fn big(x: u128) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

fn dims(l: u64, d: u64, gn: u64, gd: u64, n_exp: u64, n_topk: u64) -> ModelDims {
    ModelDims::new(l, d, Gran::new(gn, gd), n_exp, n_topk).unwrap()
}

// Seven (l, d) rows published for the (g=4, n_exp=128, n_topk=8) family.
const MAIN_GRID: [(u64, u64, u128); 7] = [
    (6, 288, 49_766_400),
    (6, 384, 88_473_600),
    (8, 384, 117_964_800),
    (8, 512, 209_715_200),
    (10, 640, 409_600_000),
    (14, 768, 825_753_600),
    (16, 1024, 1_677_721_600),
];

#[test]
fn main_grid_totals_are_bit_exact() {
    for &(l, d, expect) in &MAIN_GRID {
        let m = dims(l, d, 4, 1, 128, 8);
        assert_eq!(total_params(&m), big(expect), "({l}, {d})");
    }
}

#[test]
fn unit_dims_total_is_seven() {
    assert_eq!(total_params(&dims(1, 1, 1, 1, 1, 1)), big(7));
    assert_eq!(active_params(&dims(1, 1, 1, 1, 8, 1)), big(7));
}

#[test]
fn active_count_on_main_grid_base() {
    // l·d²·(4 + 3·8/4) = 6·288²·10
    assert_eq!(active_params(&dims(6, 288, 4, 1, 128, 8)), big(4_976_640));
}

#[test]
fn dense_limit_counts_coincide() {
    for nk in [1u64, 3, 17, 128] {
        let m = dims(5, 96, 2, 1, nk, nk);
        assert_eq!(total_params(&m), active_params(&m));
    }
}

#[test]
fn fractional_granularity_is_exact() {
    // g = 27/10 (the 2.7 used by a production model): 3·n_exp/g stays
    // rational; 2·64²·(4 + 3·30·10/27) = 8192·(4·27 + 900)/27.
    let m = dims(2, 64, 27, 10, 30, 10);
    let expect = BigRational::new(BigInt::from(8192u32 * (4 * 27 + 900)), BigInt::from(27));
    assert_eq!(total_params(&m), expect);
}

#[test]
fn sparsity_stats_examples() {
    let st = sparsity_stats(&dims(6, 288, 4, 1, 128, 8));
    assert_eq!(st.s, 16.0);

    let st = sparsity_stats(&dims(8, 336, 4, 1, 43, 4));
    assert_eq!(st.gamma, 42.0);

    let st = sparsity_stats(&dims(4, 128, 2, 1, 32, 32));
    assert_eq!(st.s, 1.0);
    assert_eq!(st.active_ratio, 1.0);
}

#[test]
fn active_ratio_closed_form_examples() {
    // (4 + 3·128/(4·16)) / (4 + 3·128/4) = 10/100
    let r = active_ratio_formula(128.0, 4.0, 16.0).unwrap();
    assert!((r - 0.10).abs() < 1e-15, "{r}");

    for n_exp in [1.0, 7.0, 512.0] {
        assert_eq!(active_ratio_formula(n_exp, 2.0, 1.0).unwrap(), 1.0);
    }

    // Large-n_exp asymptote approaches 1/s.
    let r = active_ratio_formula(1e9, 4.0, 16.0).unwrap();
    assert!((r - 1.0 / 16.0).abs() < 1e-6, "{r}");

    assert!(matches!(
        active_ratio_formula(128.0, 4.0, 0.5),
        Err(PlannerError::InvalidInput(_))
    ));
}

#[test]
fn active_ratio_strictly_decreasing_in_n_exp() {
    // Fixed g and s > 1: the ratio must fall as the expert count grows.
    for &g in &[1.0f64, 2.0, 4.0, 8.0] {
        for &s in &[2.0f64, 4.0, 8.0, 16.0, 32.0] {
            let mut prev = f64::INFINITY;
            for n_exp in 1..=4096u32 {
                let r = active_ratio_formula(n_exp as f64, g, s).unwrap();
                assert!(
                    r < prev,
                    "not decreasing at n_exp={n_exp}, g={g}, s={s}: {r} vs {prev}"
                );
                prev = r;
            }
        }
    }
}

#[test]
fn ratio_formula_matches_exact_stats() {
    for &(l, d, ne, nk, gn, gd) in &[
        (6u64, 288u64, 128u64, 8u64, 4u64, 1u64),
        (8, 336, 43, 1, 4, 1),
        (12, 512, 96, 12, 2, 1),
        (3, 100, 54, 6, 27, 10),
    ] {
        let m = dims(l, d, gn, gd, ne, nk);
        let st = sparsity_stats(&m);
        let f = active_ratio_formula(ne as f64, gn as f64 / gd as f64, ne as f64 / nk as f64)
            .unwrap();
        assert!(
            (f - st.active_ratio).abs() <= 1e-12 * st.active_ratio,
            "({l},{d},{ne},{nk}): {f} vs {}",
            st.active_ratio
        );
    }
}

#[test]
fn variant_chain_examples() {
    // Published ablation family: quadrupling granularity and expert counts.
    let base = dims(8, 384, 2, 1, 64, 4);
    let out = granularity_variants(&base, &[Gran::new(4, 1)]).unwrap();
    assert_eq!(out, vec![dims(8, 384, 8, 1, 256, 16)]);
    assert_eq!(total_params(&out[0]), total_params(&base));
    assert_eq!(active_params(&out[0]), active_params(&base));

    // Identity factor.
    let out = granularity_variants(&base, &[Gran::new(1, 1)]).unwrap();
    assert_eq!(out, vec![base]);

    // Halving.
    let base = dims(18, 1024, 4, 1, 128, 8);
    let out = granularity_variants(&base, &[Gran::new(1, 2)]).unwrap();
    assert_eq!(out, vec![dims(18, 1024, 2, 1, 64, 4)]);
    assert_eq!(param_budget(&out[0]), param_budget(&base));
}

#[test]
fn variant_rejects_fractional_expert_counts() {
    let base = dims(8, 384, 2, 1, 64, 4);
    // 4·(1/8) is not an integer.
    assert!(granularity_variants(&base, &[Gran::new(1, 8)]).is_err());
    // factor 1/4 of n_topk=4 is 1, fine; 1/8 of n_exp=64 is 8 but topk breaks.
    assert!(granularity_variants(&base, &[Gran::new(1, 4)]).is_ok());
}

proptest! {
    #[test]
    fn iso_budget_closure(
        l in 1u64..=64,
        d in 1u64..=1024,
        gp in 1u64..=32,
        gq in 1u64..=8,
        t in 1u64..=8,
        m in 1u64..=32,
        (fn_, fd_) in prop_oneof![
            Just((1u64, 4u64)), Just((1, 2)), Just((1, 1)), Just((2, 1)),
            Just((3, 1)), Just((4, 1)), Just((8, 1)), Just((3, 2)),
        ],
    ) {
        // n_topk chosen divisible by the factor denominator so variants exist.
        let n_topk = t * fd_;
        let n_exp = n_topk * m;
        let base = dims(l, d, gp, gq, n_exp, n_topk);
        let f = Gran::new(fn_, fd_);
        let variants = granularity_variants(&base, &[f]).unwrap();
        prop_assert_eq!(variants.len(), 1);
        let v = &variants[0];
        prop_assert_eq!(total_params(v), total_params(&base));
        prop_assert_eq!(active_params(v), active_params(&base));
    }

    #[test]
    fn budget_ordering(
        l in 1u64..=64,
        d in 1u64..=1024,
        gp in 1u64..=32,
        gq in 1u64..=8,
        n_exp in 1u64..=512,
        k in 1u64..=512,
    ) {
        let n_topk = k.min(n_exp);
        let m = dims(l, d, gp, gq, n_exp, n_topk);
        let b = param_budget(&m);
        prop_assert!(b.n_total >= b.n_active);
        prop_assert_eq!(b.n_total == b.n_active, n_exp == n_topk);
        prop_assert!(b.n_active.to_f64().unwrap() > 0.0);
    }
}

// ---- expert solving against the published width-depth ablation ----

/// Budgets of the anchor row (l=8, d=336, g=4, 43 experts, top-4).
fn anchor_targets() -> (BigRational, BigRational) {
    let base = dims(8, 336, 4, 1, 43, 4);
    (total_params(&base), active_params(&base))
}

#[test]
fn anchor_budget_values() {
    let (tt, ta) = anchor_targets();
    assert_eq!(tt, big(32_739_840));
    assert_eq!(ta, big(6_322_176));
}

#[test]
fn solve_experts_reconstructs_published_pairs() {
    let (tt, ta) = anchor_targets();
    let g = Gran::new(4, 1);
    // The three published expert-count groups come out of the same-depth rows.
    let s = solve_experts_for_budget(8, 384, g, &tt, &ta, RoundingMode::HalfEven).unwrap();
    assert_eq!((s.n_exp, s.n_topk), (32, 2));
    let s = solve_experts_for_budget(8, 336, g, &tt, &ta, RoundingMode::HalfEven).unwrap();
    assert_eq!((s.n_exp, s.n_topk), (43, 4));
    assert_eq!(s.total_deviation_pct, 0.0);
    assert_eq!(s.active_deviation_pct, 0.0);
    let s = solve_experts_for_budget(8, 224, g, &tt, &ta, RoundingMode::HalfEven).unwrap();
    assert_eq!((s.n_exp, s.n_topk), (103, 16));
}

#[test]
fn solve_experts_on_other_depths_follows_the_formula() {
    // At (16, 240) the rounded solution is (42, 4); the published table
    // instead reuses the anchor pair (43, 4) solved at depth 8. Both facts
    // are pinned here; budget_deviation below covers the printed deviations.
    let (tt, ta) = anchor_targets();
    let s =
        solve_experts_for_budget(16, 240, Gran::new(4, 1), &tt, &ta, RoundingMode::HalfEven)
            .unwrap();
    assert_eq!((s.n_exp, s.n_topk), (42, 4));
}

#[test]
fn published_deviation_columns() {
    let (tt, ta) = anchor_targets();
    let g4 = |l, d, ne, nk| dims(l, d, 4, 1, ne, nk);

    // (16, 240) carrying (43, 4): +2.04% on both budgets.
    let (dt, da) = budget_deviation(&g4(16, 240, 43, 4), &tt, &ta);
    assert!((dt - 2.040_816_327).abs() < 1e-6, "{dt}");
    assert!((da - 2.040_816_327).abs() < 1e-6, "{da}");

    // (8, 224) carrying (103, 16): -0.38% total, +1.59% active.
    let (dt, da) = budget_deviation(&g4(8, 224, 103, 16), &tt, &ta);
    assert!((dt - -0.383_141_762).abs() < 1e-6, "{dt}");
    assert!((da - 1.587_301_587).abs() < 1e-6, "{da}");

    // (4, 320) carrying (103, 16): +1.65% total, +3.66% active.
    let (dt, da) = budget_deviation(&g4(4, 320, 103, 16), &tt, &ta);
    assert!((dt - 1.649_855_3).abs() < 1e-6, "{dt}");
    assert!((da - 3.660_511_8).abs() < 1e-6, "{da}");
}

#[test]
fn solve_experts_self_consistency() {
    let (tt, ta) = anchor_targets();
    let s =
        solve_experts_for_budget(8, 336, Gran::new(4, 1), &tt, &ta, RoundingMode::HalfEven)
            .unwrap();
    assert_eq!((s.n_exp, s.n_topk), (43, 4));
    assert_eq!(s.achieved_total, tt);
    assert_eq!(s.achieved_active, ta);
    assert_eq!(s.total_deviation_pct, 0.0);
}

#[test]
fn solve_experts_infeasible_and_misordered_targets() {
    let (tt, _) = anchor_targets();
    // Dense term alone eats the active budget: 4·l·d² ≥ target.
    let tiny = big(4 * 8 * 336 * 336);
    let err = solve_experts_for_budget(8, 336, Gran::new(4, 1), &tt, &tiny, RoundingMode::HalfEven)
        .unwrap_err();
    assert!(matches!(err, PlannerError::Infeasible(_)), "{err}");

    // target_active > target_total is an input-ordering violation.
    let err = solve_experts_for_budget(8, 336, Gran::new(4, 1), &tiny, &tt, RoundingMode::HalfEven)
        .unwrap_err();
    assert!(matches!(err, PlannerError::InvalidInput(_)), "{err}");
}

#[test]
fn rounding_mode_changes_half_cases() {
    let half = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));
    let even = |x: &BigRational| round_rational(x, RoundingMode::HalfEven);
    let away = |x: &BigRational| round_rational(x, RoundingMode::HalfAwayFromZero);

    assert_eq!(even(&half(1, 2)), BigInt::from(0));
    assert_eq!(even(&half(3, 2)), BigInt::from(2));
    assert_eq!(even(&half(5, 2)), BigInt::from(2));
    assert_eq!(even(&half(-1, 2)), BigInt::from(0));
    assert_eq!(even(&half(-3, 2)), BigInt::from(-2));

    assert_eq!(away(&half(1, 2)), BigInt::from(1));
    assert_eq!(away(&half(3, 2)), BigInt::from(2));
    assert_eq!(away(&half(5, 2)), BigInt::from(3));
    assert_eq!(away(&half(-1, 2)), BigInt::from(-1));
    assert_eq!(away(&half(-3, 2)), BigInt::from(-2));

    // Non-half values agree regardless of mode.
    for (n, d) in [(7i64, 3i64), (-7, 3), (22, 7), (199, 100)] {
        let x = half(n, d);
        assert_eq!(even(&x), away(&x));
    }
}

#[test]
fn rational_parsing() {
    assert_eq!(parse_rational_str("2.35e11").unwrap(), big(235_000_000_000));
    assert_eq!(
        parse_rational_str("2.7").unwrap(),
        BigRational::new(BigInt::from(27), BigInt::from(10))
    );
    assert_eq!(
        parse_rational_str("27/10").unwrap(),
        BigRational::new(BigInt::from(27), BigInt::from(10))
    );
    assert_eq!(
        parse_rational_str("1e-3").unwrap(),
        BigRational::new(BigInt::from(1), BigInt::from(1000))
    );
    assert_eq!(
        parse_rational_str("0.1000").unwrap(),
        BigRational::new(BigInt::from(1), BigInt::from(10))
    );
    assert_eq!(parse_rational_str("-4").unwrap(), -big(4));
    assert_eq!(parse_rational_str("+12E2").unwrap(), big(1200));

    for bad in ["", "1.2.3", "abc", "1/0", "1e", "--3", "0x10"] {
        assert!(parse_rational_str(bad).is_err(), "{bad:?} should fail");
    }
}

#[test]
fn granularity_parsing_and_display() {
    assert_eq!(parse_gran("4").unwrap(), Gran::new(4, 1));
    assert_eq!(parse_gran("2.7").unwrap(), Gran::new(27, 10));
    assert_eq!(parse_gran("27/10").unwrap(), Gran::new(27, 10));
    assert!(parse_gran("0").is_err());
    assert!(parse_gran("-3").is_err());

    assert_eq!(format_gran(Gran::new(4, 1)), "4");
    assert_eq!(format_gran(Gran::new(27, 10)), "2.7");
    assert_eq!(format_gran(Gran::new(1, 3)), "1/3");
}

#[test]
fn strict_mode_rejects_fractional_expert_width() {
    // d = 135, g = 27/10 → d_exp = 50 exactly: accepted either way.
    assert!(ModelDims::new_strict(2, 135, Gran::new(27, 10), 30, 10).is_ok());
    // d = 100 → d_exp = 1000/27: rejected only in strict mode.
    assert!(ModelDims::new(2, 100, Gran::new(27, 10), 30, 10).is_ok());
    assert!(ModelDims::new_strict(2, 100, Gran::new(27, 10), 30, 10).is_err());
}

#[test]
fn dims_validation() {
    assert!(ModelDims::new(0, 1, Gran::new(1, 1), 1, 1).is_err());
    assert!(ModelDims::new(1, 0, Gran::new(1, 1), 1, 1).is_err());
    assert!(ModelDims::new(1, 1, Gran::new(0, 1), 1, 1).is_err());
    assert!(ModelDims::new(1, 1, Gran::new(1, 1), 0, 1).is_err());
    assert!(ModelDims::new(1, 1, Gran::new(1, 1), 1, 0).is_err());
    // n_topk > n_exp
    let err = ModelDims::new(1, 1, Gran::new(1, 1), 8, 9).unwrap_err();
    assert!(err.to_string().contains("n_topk"), "{err}");
}
